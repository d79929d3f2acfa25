#include "elkg/serialize.hpp"

namespace elkg {

json to_json(const ValidationReport& report) {
  json arr = json::array();
  for (const auto& v : report) {
    arr.push_back({{"kind", violation_kind_name(v.kind)}, {"message", v.message}});
  }
  return arr;
}

json to_json(const IngestReport& report) {
  json rej = json::array();
  for (const auto& r : report.rejections) {
    rej.push_back({{"file", r.file},
                   {"line", r.line},
                   {"event_id", r.event_id},
                   {"reason", r.reason},
                   {"message", r.message}});
  }
  return {{"accepted", report.accepted}, {"rejections", rej}};
}

json to_json(const Footprint& fp) {
  return {{"node_id", fp.node_id},
          {"total_micro_t", fp.total.micro_tonnes()},
          {"per_unit_micro_t", fp.per_unit.micro_tonnes()},
          {"unit", unit_code(fp.unit)}};
}

json to_json(const OrgBalance& b) {
  return {{"org_id", b.org_id},
          {"gross_produced_micro_t", b.gross_produced.micro_tonnes()},
          {"held_micro_t", b.held.micro_tonnes()},
          {"offsets_micro_t", b.offsets_micro},
          {"net_balance_micro_t", b.net_balance_micro}};
}

json to_json(const ContributionBreakdown& b) {
  json parts = json::array();
  for (const auto& c : b.contributions) {
    parts.push_back({{"process_id", c.process_id}, {"amount_micro_t", c.amount.micro_tonnes()}});
  }
  return {{"node_id", b.node_id}, {"total_micro_t", b.total.micro_tonnes()}, {"contributions", parts}};
}

json to_json(const std::vector<Hotspot>& h, Dimension dim) {
  json arr = json::array();
  for (const auto& x : h) arr.push_back({{"id", x.id}, {"liability_micro_t", x.liability.micro_tonnes()}});
  return {{"dimension", dimension_name(dim)}, {"entries", arr}};
}

namespace {

json delta_lines(const std::vector<DeltaLine>& lines) {
  json arr = json::array();
  for (const auto& l : lines) {
    arr.push_back({{"id", l.id},
                   {"base_micro_t", l.base_micro},
                   {"scenario_micro_t", l.scenario_micro},
                   {"delta_micro_t", l.delta_micro}});
  }
  return arr;
}

[[noreturn]] void bad(Errc code, const std::string& field, const std::string& msg) {
  throw ParseError(code, field, 0, field.empty() ? msg : field + ": " + msg);
}

const json& need(const json& obj, const char* key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad(Errc::MalformedRecord, path + key, "missing");
  return *it;
}

std::string need_str(const json& obj, const char* key, const std::string& path) {
  const json& v = need(obj, key, path);
  if (!v.is_string()) bad(Errc::MalformedRecord, path + key, "expected a string");
  return v.get<std::string>();
}

std::int64_t decimal_micro(const json& v, const std::string& path) {
  std::string text;
  if (v.is_string()) {
    text = v.get<std::string>();
  } else if (v.is_number()) {
    text = v.dump();
  } else {
    bad(Errc::BadNumber, path, "expected a decimal");
  }
  const auto m = parse_decimal_micro(text);
  if (!m) bad(Errc::BadNumber, path, "malformed decimal '" + text + "'");
  return *m;
}

}  // namespace

json to_json(const DeltaReport& r) {
  return {{"scenario_id", r.scenario_id},
          {"basis_version", r.basis_version},
          {"orgs", delta_lines(r.orgs)},
          {"products", delta_lines(r.products)}};
}

json to_json(const ChainStatus& s) {
  json j = {{"ok", s.ok}};
  j["first_break"] = s.ok ? json(nullptr) : json(s.first_break);
  return j;
}

json to_json(const ConservationReport& r) {
  return {{"injected_micro_t", r.injected_micro},
          {"offsets_micro_t", r.offsets_micro},
          {"balances_micro_t", r.balances_micro},
          {"residue_micro_t", r.residue_micro},
          {"ok", r.ok()}};
}

json to_json(const std::vector<Discrepancy>& d) {
  json arr = json::array();
  for (const auto& x : d) {
    arr.push_back({{"org_id", x.org_id},
                   {"computed_micro_t", x.computed_micro},
                   {"declared_micro_t", x.declared_micro},
                   {"delta_micro_t", x.delta_micro}});
  }
  return arr;
}

json to_json(const AuditEntry& e) {
  return {{"seq", e.seq}, {"event_id", e.event_id}, {"event", e.event}, {"digest_hex", to_hex(e.digest)}};
}

Scenario parse_scenario(const json& doc) {
  if (!doc.is_object()) bad(Errc::MalformedRecord, "", "scenario must be a JSON object");
  Scenario sc;
  if (const auto it = doc.find("scenario_id"); it != doc.end()) {
    if (!it->is_string()) bad(Errc::MalformedRecord, "scenario_id", "expected a string");
    sc.scenario_id = it->get<std::string>();
  }
  if (const auto it = doc.find("base_version"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) bad(Errc::BadNumber, "base_version", "expected a non-negative integer");
    sc.base_version = it->get<std::uint64_t>();
  }
  const json& overrides = need(doc, "overrides", "");
  if (!overrides.is_array()) bad(Errc::MalformedRecord, "overrides", "expected an array");
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    const json& o = overrides[i];
    const std::string path = "overrides[" + std::to_string(i) + "].";
    if (!o.is_object()) bad(Errc::MalformedRecord, path, "expected an object");
    const auto kind = parse_override_kind(need_str(o, "kind", path));
    if (!kind) bad(Errc::MalformedRecord, path + "kind", "unknown override kind");
    Override ov;
    ov.kind = *kind;
    switch (*kind) {
      case Override::Kind::ReviseEmissions: {
        ov.target = need_str(o, "process_id", path);
        const auto m = decimal_micro(need(o, "direct_emissions_t", path), path + "direct_emissions_t");
        if (m < 0) bad(Errc::BadNumber, path + "direct_emissions_t", "must not be negative");
        ov.direct_emissions = EmissionQty::from_micro(m);
        break;
      }
      case Override::Kind::ReviseWeights: {
        ov.target = need_str(o, "process_id", path);
        const json& w = need(o, "weights", path);
        if (!w.is_null()) {
          if (!w.is_object()) bad(Errc::MalformedRecord, path + "weights", "expected an object or null");
          AllocationWeights aw;
          for (const auto& [k, v] : w.items()) aw[k] = decimal_micro(v, path + "weights." + k);
          ov.weights = std::move(aw);
        }
        break;
      }
      case Override::Kind::ScaleTransfer:
        ov.target = need_str(o, "transfer_id", path);
        ov.factor_micro = decimal_micro(need(o, "factor", path), path + "factor");
        break;
      case Override::Kind::RemoveTransfer:
        ov.target = need_str(o, "transfer_id", path);
        break;
    }
    sc.overrides.push_back(std::move(ov));
  }
  return sc;
}

Scenario parse_scenario_text(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) bad(Errc::MalformedRecord, "", "scenario is not valid JSON");
  return parse_scenario(doc);
}

std::map<std::string, EmissionQty> parse_reference(const json& doc) {
  if (!doc.is_object()) bad(Errc::MalformedRecord, "", "reference must map org ids to tonnes");
  std::map<std::string, EmissionQty> out;
  for (const auto& [k, v] : doc.items()) {
    const auto m = decimal_micro(v, k);
    if (m < 0) bad(Errc::BadNumber, k, "must not be negative");
    out.emplace(k, EmissionQty::from_micro(m));
  }
  return out;
}

}  // namespace elkg
