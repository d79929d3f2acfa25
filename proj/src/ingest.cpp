#include "elkg/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace elkg {

using nlohmann::json;

namespace {

[[noreturn]] void fail(Errc code, const RawEventRecord& rec, const std::string& field,
                       const std::string& msg) {
  std::string where = rec.file.empty() ? std::string("line ") : rec.file + ":";
  where += std::to_string(rec.line);
  throw ParseError(code, field, rec.line, where + ": " + field + ": " + msg);
}

class JsonReader {
 public:
  explicit JsonReader(const RawEventRecord& rec) : rec_(rec) {}

  const json& field(const json& obj, const std::string& name, const std::string& path) const {
    if (!obj.is_object()) fail(Errc::MalformedRecord, rec_, path, "expected an object");
    const auto it = obj.find(name);
    if (it == obj.end()) fail(Errc::MalformedRecord, rec_, join(path, name), "missing field");
    return *it;
  }

  const json* optional(const json& obj, const std::string& name) const {
    const auto it = obj.find(name);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
  }

  std::string str(const json& obj, const std::string& name, const std::string& path) const {
    const json& v = field(obj, name, path);
    if (!v.is_string()) fail(Errc::MalformedRecord, rec_, join(path, name), "expected a string");
    return v.get<std::string>();
  }

  std::string opt_str(const json& obj, const std::string& name, const std::string& path) const {
    const json* v = optional(obj, name);
    if (!v) return {};
    if (!v->is_string()) fail(Errc::MalformedRecord, rec_, join(path, name), "expected a string");
    return v->get<std::string>();
  }

  // Decimal text of a JSON number or string.
  std::string decimal_text(const json& v, const std::string& path) const {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned() || v.is_number_float()) return v.dump();
    fail(Errc::BadNumber, rec_, path, "expected a decimal number");
  }

  std::int64_t micro(const json& obj, const std::string& name, const std::string& path,
                     bool allow_negative) const {
    const std::string p = join(path, name);
    const std::string text = decimal_text(field(obj, name, path), p);
    const auto v = parse_decimal_micro(text);
    if (!v) fail(Errc::BadNumber, rec_, p, "malformed decimal '" + text + "'");
    if (!allow_negative && *v < 0) fail(Errc::BadNumber, rec_, p, "negative value '" + text + "'");
    return *v;
  }

  Quantity quantity(const json& obj, const std::string& path) const {
    const std::string amount = decimal_text(field(obj, "amount", path), join(path, "amount"));
    const std::string unit = str(obj, "unit", path);
    try {
      return normalize_quantity(amount, unit);
    } catch (const Error& e) {
      fail(e.code(), rec_, join(path, e.code() == Errc::UnknownUnit ? "unit" : "amount"), e.what());
    }
  }

  static std::string join(const std::string& path, const std::string& name) {
    return path.empty() ? name : path + "." + name;
  }

 private:
  const RawEventRecord& rec_;
};

LedgerEvent parse_jsonl(const RawEventRecord& rec) {
  json doc;
  try {
    doc = json::parse(rec.text);
  } catch (const json::parse_error& e) {
    fail(Errc::MalformedRecord, rec, "", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(Errc::MalformedRecord, rec, "", "record is not a JSON object");
  const JsonReader r(rec);

  LedgerEvent ev;
  ev.event_id = r.str(doc, "event_id", "");
  const std::string kind_text = r.str(doc, "kind", "");
  const auto kind = parse_event_kind(kind_text);
  if (!kind) fail(Errc::UnknownEventKind, rec, "kind", "unknown event kind '" + kind_text + "'");
  const std::string ts_text = r.str(doc, "timestamp", "");
  const auto ts = parse_timestamp(ts_text);
  if (!ts) fail(Errc::BadTimestamp, rec, "timestamp", "expected YYYY-MM-DDTHH:MM:SSZ, got '" + ts_text + "'");
  ev.timestamp = *ts;

  const json& p = r.field(doc, "payload", "");
  if (!p.is_object()) fail(Errc::MalformedRecord, rec, "payload", "expected an object");
  const std::string pp = "payload";

  switch (*kind) {
    case EventKind::DeclareOrg: {
      DeclareOrg d;
      d.org_id = r.str(p, "org_id", pp);
      d.name = r.opt_str(p, "name", pp);
      if (d.name.empty()) d.name = d.org_id;
      d.location = r.opt_str(p, "location", pp);
      d.sector = r.opt_str(p, "sector", pp);
      if (const json* meta = r.optional(p, "metadata")) {
        if (!meta->is_object()) fail(Errc::MalformedRecord, rec, "payload.metadata", "expected an object");
        for (const auto& [k, v] : meta->items()) {
          d.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
      }
      ev.payload = std::move(d);
      break;
    }
    case EventKind::DeclareProcess: {
      DeclareProcess d;
      d.process_id = r.str(p, "process_id", pp);
      d.owner = r.str(p, "owner", pp);
      d.name = r.opt_str(p, "name", pp);
      d.direct_emissions = EmissionQty::from_micro(r.micro(p, "direct_emissions_t", pp, false));
      if (const json* ins = r.optional(p, "inputs")) {
        if (!ins->is_array()) fail(Errc::MalformedRecord, rec, "payload.inputs", "expected an array");
        for (std::size_t i = 0; i < ins->size(); ++i) {
          const std::string ip = "payload.inputs[" + std::to_string(i) + "]";
          d.inputs.push_back({r.str((*ins)[i], "node", ip), r.quantity((*ins)[i], ip)});
        }
      }
      const json& outs = r.field(p, "outputs", pp);
      if (!outs.is_array()) fail(Errc::MalformedRecord, rec, "payload.outputs", "expected an array");
      for (std::size_t i = 0; i < outs.size(); ++i) {
        const std::string op = "payload.outputs[" + std::to_string(i) + "]";
        OutputDecl o;
        o.node_id = r.str(outs[i], "node", op);
        o.product_name = r.opt_str(outs[i], "product", op);
        o.quantity = r.quantity(outs[i], op);
        d.outputs.push_back(std::move(o));
      }
      if (const json* w = r.optional(p, "allocation_weights")) {
        if (!w->is_object()) {
          fail(Errc::MalformedRecord, rec, "payload.allocation_weights", "expected an object");
        }
        AllocationWeights weights;
        for (const auto& [k, v] : w->items()) {
          const std::string wp = "payload.allocation_weights." + k;
          const auto m = parse_decimal_micro(r.decimal_text(v, wp));
          if (!m) fail(Errc::BadNumber, rec, wp, "malformed weight");
          weights[k] = *m;
        }
        d.allocation_weights = std::move(weights);
      }
      ev.payload = std::move(d);
      break;
    }
    case EventKind::DeclareTransfer: {
      DeclareTransfer d;
      d.transfer_id = r.str(p, "transfer_id", pp);
      d.source_node = r.str(p, "source_node", pp);
      d.buyer = r.str(p, "buyer", pp);
      d.quantity = r.quantity(p, pp);
      d.node_id = r.opt_str(p, "node", pp);
      if (d.node_id.empty()) d.node_id = d.transfer_id;
      ev.payload = std::move(d);
      break;
    }
    case EventKind::EmissionMeasurement: {
      EmissionMeasurement d;
      d.process_id = r.str(p, "process_id", pp);
      d.direct_emissions = EmissionQty::from_micro(r.micro(p, "direct_emissions_t", pp, false));
      ev.payload = std::move(d);
      break;
    }
    case EventKind::OffsetAdjustment: {
      OffsetAdjustment d;
      d.org_id = r.str(p, "org_id", pp);
      d.delta = SignedEmissionDelta(r.micro(p, "delta_t", pp, true));
      ev.payload = std::move(d);
      break;
    }
  }
  return ev;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

LedgerEvent parse_csv(const RawEventRecord& rec) {
  const auto f = split_csv_line(rec.text);
  if (f.size() != 6) {
    fail(Errc::MalformedRecord, rec, "", "expected 6 CSV fields, got " + std::to_string(f.size()));
  }
  static constexpr const char* kNames[] = {"transfer_id", "source_node", "buyer",
                                           "quantity",    "unit",        "timestamp"};
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].empty()) fail(Errc::MalformedRecord, rec, kNames[i], "empty field");
  }
  const auto ts = parse_timestamp(f[5]);
  if (!ts) fail(Errc::BadTimestamp, rec, "timestamp", "expected YYYY-MM-DDTHH:MM:SSZ, got '" + f[5] + "'");
  DeclareTransfer d;
  d.transfer_id = f[0];
  d.source_node = f[1];
  d.buyer = f[2];
  try {
    d.quantity = normalize_quantity(f[3], f[4]);
  } catch (const Error& e) {
    fail(e.code(), rec, e.code() == Errc::UnknownUnit ? "unit" : "quantity", e.what());
  }
  d.node_id = d.transfer_id;
  return LedgerEvent{d.transfer_id, *ts, std::move(d)};
}

json quantity_json(const Quantity& q) {
  return {{"amount", format_decimal_micro(q.micro)}, {"unit", std::string(unit_code(q.unit))}};
}

}  // namespace

LedgerEvent parse_ledger_line(const RawEventRecord& record) {
  const bool blank = std::all_of(record.text.begin(), record.text.end(),
                                 [](unsigned char c) { return std::isspace(c); });
  if (blank) fail(Errc::MalformedRecord, record, "", "empty record");
  return record.format == RecordFormat::TransferCsv ? parse_csv(record) : parse_jsonl(record);
}

std::string serialize_event(const LedgerEvent& ev) {
  json payload = json::object();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DeclareOrg>) {
          payload = {{"org_id", p.org_id}, {"name", p.name}, {"location", p.location}, {"sector", p.sector}};
          if (!p.metadata.empty()) payload["metadata"] = p.metadata;
        } else if constexpr (std::is_same_v<T, DeclareProcess>) {
          json inputs = json::array();
          for (const auto& in : p.inputs) {
            json j = quantity_json(in.quantity);
            j["node"] = in.node_id;
            inputs.push_back(std::move(j));
          }
          json outputs = json::array();
          for (const auto& out : p.outputs) {
            json j = quantity_json(out.quantity);
            j["node"] = out.node_id;
            j["product"] = out.product_name;
            outputs.push_back(std::move(j));
          }
          payload = {{"process_id", p.process_id},
                     {"owner", p.owner},
                     {"name", p.name},
                     {"direct_emissions_t", format_decimal_micro(p.direct_emissions.micro_tonnes())},
                     {"inputs", std::move(inputs)},
                     {"outputs", std::move(outputs)}};
          if (p.allocation_weights) {
            json w = json::object();
            for (const auto& [id, v] : *p.allocation_weights) w[id] = format_decimal_micro(v);
            payload["allocation_weights"] = std::move(w);
          }
        } else if constexpr (std::is_same_v<T, DeclareTransfer>) {
          payload = quantity_json(p.quantity);
          payload["transfer_id"] = p.transfer_id;
          payload["source_node"] = p.source_node;
          payload["buyer"] = p.buyer;
          payload["node"] = p.node_id;
        } else if constexpr (std::is_same_v<T, EmissionMeasurement>) {
          payload = {{"process_id", p.process_id},
                     {"direct_emissions_t", format_decimal_micro(p.direct_emissions.micro_tonnes())}};
        } else if constexpr (std::is_same_v<T, OffsetAdjustment>) {
          payload = {{"org_id", p.org_id}, {"delta_t", format_decimal_micro(p.delta.micro_tonnes())}};
        }
      },
      ev.payload);

  const json doc = {{"event_id", ev.event_id},
                    {"kind", std::string(event_kind_name(ev.kind()))},
                    {"timestamp", format_timestamp(ev.timestamp)},
                    {"payload", std::move(payload)}};
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Entity resolution
// ---------------------------------------------------------------------------

std::string normalize_alias(std::string_view name) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : name) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

void EntityRegistry::add_alias(std::string_view alias, const std::string& canonical_id) {
  const std::string key = normalize_alias(alias);
  if (key.empty()) return;
  aliases_[key].insert(canonical_id);
}

std::string resolve_entity(std::string_view name_or_id, const EntityRegistry& registry) {
  const std::string key = normalize_alias(name_or_id);
  const auto it = registry.aliases().find(key);
  if (it == registry.aliases().end()) {
    throw Error(Errc::UnresolvedEntity, "no entity matches '" + std::string(name_or_id) + "'");
  }
  if (it->second.size() > 1) {
    std::string ids;
    for (const auto& id : it->second) ids += (ids.empty() ? "" : ", ") + id;
    throw Error(Errc::AmbiguousAlias, "'" + std::string(name_or_id) + "' matches " + ids);
  }
  return *it->second.begin();
}

LedgerEvent resolve_references(LedgerEvent ev, const EntityRegistry& registry) {
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DeclareProcess>) {
          p.owner = resolve_entity(p.owner, registry);
        } else if constexpr (std::is_same_v<T, DeclareTransfer>) {
          p.buyer = resolve_entity(p.buyer, registry);
        } else if constexpr (std::is_same_v<T, OffsetAdjustment>) {
          p.org_id = resolve_entity(p.org_id, registry);
        }
      },
      ev.payload);
  return ev;
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

IngestResult ingest(std::span<const RawEventRecord> records, EntityRegistry& registry) {
  return ingest_into(GraphState{}, records, registry);
}

IngestResult ingest_into(GraphState state, std::span<const RawEventRecord> records,
                         EntityRegistry& registry) {
  IngestResult result;
  result.state = std::move(state);
  for (const auto& org : result.state.orgs()) {
    registry.add_alias(org.decl.org_id, org.decl.org_id);
    registry.add_alias(org.decl.name, org.decl.org_id);
  }

  struct Parsed {
    LedgerEvent event;
    const RawEventRecord* record;
  };
  std::vector<Parsed> parsed;
  parsed.reserve(records.size());
  for (const auto& rec : records) {
    try {
      parsed.push_back({parse_ledger_line(rec), &rec});
    } catch (const ParseError& e) {
      result.report.rejections.push_back(
          {rec.file, rec.line, "", std::string(errc_name(e.code())), e.what()});
    } catch (const Error& e) {
      result.report.rejections.push_back(
          {rec.file, rec.line, "", std::string(errc_name(e.code())), e.what()});
    }
  }
  std::stable_sort(parsed.begin(), parsed.end(), [](const Parsed& a, const Parsed& b) {
    return key_of(a.event) < key_of(b.event);
  });

  for (auto& [event, rec] : parsed) {
    const std::string event_id = event.event_id;
    try {
      LedgerEvent resolved = resolve_references(std::move(event), registry);
      apply_event_in_place(result.state, resolved);
      if (const auto* org = std::get_if<DeclareOrg>(&resolved.payload)) {
        registry.add_alias(org->org_id, org->org_id);
        registry.add_alias(org->name, org->org_id);
      }
      ++result.report.accepted;
      result.accepted.push_back({resolved.event_id, rec->text});
    } catch (const RejectedEvent& e) {
      const auto& first = e.report().front();
      result.report.rejections.push_back(
          {rec->file, rec->line, e.event_id(), std::string(violation_kind_name(first.kind)), e.what()});
    } catch (const Error& e) {
      result.report.rejections.push_back(
          {rec->file, rec->line, event_id, std::string(errc_name(e.code())), e.what()});
    }
  }
  std::sort(result.report.rejections.begin(), result.report.rejections.end(),
            [](const Rejection& a, const Rejection& b) {
              return std::tie(a.file, a.line) < std::tie(b.file, b.line);
            });
  return result;
}

std::vector<RawEventRecord> split_records(std::string_view content, const std::string& file,
                                          RecordFormat format) {
  std::vector<RawEventRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    const std::size_t nl = content.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? content.size() : nl;
    if (nl == std::string_view::npos && start == content.size()) break;
    std::string_view line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    out.push_back({std::string(line), file, line_no, format});
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::vector<RawEventRecord> read_ledger_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open ledger '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(Errc::IoFailure, "cannot read ledger '" + path.string() + "'");
  const std::string content = buf.str();

  const bool csv = path.extension() == ".csv" || content.starts_with(kTransferCsvHeader);
  auto records = split_records(content, path.string(),
                               csv ? RecordFormat::TransferCsv : RecordFormat::Jsonl);
  if (csv && !records.empty()) {
    if (records.front().text != kTransferCsvHeader) {
      throw Error(Errc::IoFailure, "CSV '" + path.string() + "' lacks header " +
                                       std::string(kTransferCsvHeader));
    }
    records.erase(records.begin());
  }
  return records;
}

}  // namespace elkg
