#include "elkg/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <iostream>

#include "elkg/query.hpp"
#include "elkg/serialize.hpp"

namespace elkg {

namespace fs = std::filesystem;

void validate_config(const ApiConfig& config) {
  if (config.port < 1 || config.port > 65535) {
    throw Error(Errc::StartupFailure, "port " + std::to_string(config.port) + " outside 1..65535");
  }
  for (const fs::path& p : {config.ledger_path, config.audit_path}) {
    const auto dir = p.parent_path();
    if (!dir.empty() && !fs::is_directory(dir)) {
      throw Error(Errc::StartupFailure, "directory for '" + p.string() + "' does not exist");
    }
  }
}

namespace {

HttpResponse reply(int status, std::uint64_t version, json data) {
  return {status, json{{"version", version}, {"data", std::move(data)}}.dump(), "application/json"};
}

HttpResponse fail(int status, std::uint64_t version, std::string_view code, const std::string& message,
                  json extra = nullptr) {
  json err = {{"code", code}, {"message", message}};
  if (!extra.is_null()) err["violations"] = std::move(extra);
  return {status, json{{"version", version}, {"error", std::move(err)}}.dump(), "application/json"};
}

int status_for(Errc code) {
  switch (code) {
    case Errc::UnknownNode:
    case Errc::UnresolvedEntity:
      return 404;
    case Errc::StaleBase:
      return 409;
    case Errc::MalformedRecord:
    case Errc::BadNumber:
    case Errc::BadTimestamp:
    case Errc::UnknownEventKind:
    case Errc::UnknownUnit:
      return 400;
    case Errc::IoFailure:
    case Errc::StartupFailure:
      return 500;
    default:
      return 422;
  }
}

std::vector<std::string> segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const auto j = path.find('/', i);
    const auto end = j == std::string_view::npos ? path.size() : j;
    if (end > i) out.emplace_back(path.substr(i, end - i));
    i = end;
  }
  return out;
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  if (!s.empty() && s.front() == '"' && s.back() == '"' && s.size() >= 2) s = s.substr(1, s.size() - 2);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

Service::Service(GraphState state, AuditLog audit, EntityRegistry registry,
                 std::optional<fs::path> ledger_path, bool read_only)
    : audit_(std::move(audit)),
      registry_(std::move(registry)),
      ledger_path_(std::move(ledger_path)),
      read_only_(read_only) {
  auto result = compute_full(state);
  snap_ = std::make_shared<const Snapshot>(Snapshot{std::move(state), std::move(result)});
  if (ledger_path_) {
    ledger_out_.open(*ledger_path_, std::ios::binary | std::ios::app);
    if (!ledger_out_) throw Error(Errc::StartupFailure, "cannot open ledger '" + ledger_path_->string() + "'");
  }
}

std::unique_ptr<Service> Service::load(const ApiConfig& config) {
  std::vector<RawEventRecord> records;
  try {
    if (fs::exists(config.ledger_path)) {
      records = read_ledger_file(config.ledger_path);
    } else {
      std::ofstream create(config.ledger_path, std::ios::binary);
      if (!create) throw Error(Errc::IoFailure, "cannot create '" + config.ledger_path.string() + "'");
    }
  } catch (const Error& e) {
    throw Error(Errc::StartupFailure, std::string("ledger: ") + e.what());
  }
  EntityRegistry registry;
  IngestResult ingested = ingest(records, registry);

  AuditLog audit;
  try {
    const bool have_audit = fs::exists(config.audit_path) && fs::file_size(config.audit_path) > 0;
    if (have_audit) {
      const auto status = verify_chain_file(config.audit_path);
      if (!status.ok && !config.force) {
        throw Error(Errc::StartupFailure,
                    "audit chain broken at seq " + std::to_string(status.first_break));
      }
      audit = AuditLog::open(config.audit_path);
      std::vector<std::string> logged, accepted;
      for (const auto& e : audit.entries()) logged.push_back(e.event_id);
      for (const auto& a : ingested.accepted) accepted.push_back(a.event_id);
      std::sort(logged.begin(), logged.end());
      std::sort(accepted.begin(), accepted.end());
      if (logged != accepted && !config.force) {
        throw Error(Errc::StartupFailure, "audit log and ledger disagree on the accepted events");
      }
    } else {
      audit = AuditLog::open(config.audit_path);
      for (const auto& a : ingested.accepted) audit.append(a.event_id, a.text);
    }
  } catch (const Error& e) {
    if (e.code() == Errc::StartupFailure) throw;
    throw Error(Errc::StartupFailure, std::string("audit: ") + e.what());
  }

  // Canonical JSONL lines cannot be appended to a transfer CSV.
  const bool csv = config.ledger_path.extension() == ".csv" ||
                   (!records.empty() && records.front().format == RecordFormat::TransferCsv);
  auto svc = std::make_unique<Service>(std::move(ingested.state), std::move(audit), std::move(registry),
                                       config.ledger_path, config.read_only || csv);
  svc->audit_path_ = config.audit_path;
  svc->startup_report_ = std::move(ingested.report);
  return svc;
}

std::shared_ptr<const Service::Snapshot> Service::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snap_;
}

std::vector<AuditEntry> Service::audit_entries() const {
  std::lock_guard lock(write_mu_);
  return audit_.entries();
}

HttpResponse Service::handle(const HttpRequest& req) {
  const auto snap = snapshot();
  const auto version = snap->state.version();
  const auto seg = segments(req.path);
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";
  try {
    if (seg.size() == 1 && seg[0] == "events") {
      if (!post) return fail(405, version, "MethodNotAllowed", "use POST");
      return post_event(req);
    }
    if (seg.size() == 1 && seg[0] == "scenarios") {
      if (!post) return fail(405, version, "MethodNotAllowed", "use POST");
      return post_scenario(req, *snap);
    }
    if (!get) {
      const bool known = (seg.size() == 1 && (seg[0] == "graph" || seg[0] == "hotspots" || seg[0] == "verify")) ||
                         (seg.size() == 3 && (seg[0] == "orgs" || seg[0] == "products"));
      return known ? fail(405, version, "MethodNotAllowed", "use GET")
                   : fail(404, version, "NotFound", "no route " + req.path);
    }
    if (seg.size() == 1 && seg[0] == "graph") {
      const auto it = req.query.find("format");
      const auto fmt = parse_export_format(it == req.query.end() ? "jsonl" : it->second);
      if (!fmt) return fail(400, version, "BadFormat", "format must be jsonl, dot or ntriples");
      return reply(200, version, export_graph(snap->state, snap->result, *fmt));
    }
    if (seg.size() == 3 && seg[0] == "orgs" && seg[2] == "balance") {
      const auto* b = snap->result.find_org(seg[1]);
      if (!b) return fail(404, version, "UnknownNode", "unknown org '" + seg[1] + "'");
      return reply(200, version, to_json(*b));
    }
    if (seg.size() == 3 && seg[0] == "products" && seg[2] == "footprint") {
      try {
        return reply(200, version, to_json(product_footprint(snap->state, snap->result, seg[1])));
      } catch (const ZeroQuantityError& e) {
        return reply(200, version,
                     {{"node_id", seg[1]},
                      {"total_micro_t", e.total().micro_tonnes()},
                      {"per_unit_micro_t", nullptr},
                      {"unit", unit_code(e.unit())}});
      }
    }
    if (seg.size() == 3 && seg[0] == "products" && seg[2] == "breakdown") {
      return reply(200, version, to_json(breakdown(snap->state, snap->result, seg[1])));
    }
    if (seg.size() == 1 && seg[0] == "hotspots") {
      const auto d = req.query.find("dim");
      const auto dim = parse_dimension(d == req.query.end() ? "product" : d->second);
      const auto kq = req.query.find("k");
      const auto k = kq == req.query.end() ? std::optional<std::uint64_t>(10) : parse_u64(kq->second);
      if (!dim) return fail(400, version, "BadParameter", "dim must be org, product or process");
      if (!k || *k == 0) return fail(400, version, "BadParameter", "k must be a positive integer");
      return reply(200, version, to_json(hotspots(snap->result, *k, *dim), *dim));
    }
    if (seg.size() == 1 && seg[0] == "verify") return verify(*snap);
    return fail(404, version, "NotFound", "no route " + req.path);
  } catch (const Error& e) {
    return fail(status_for(e.code()), version, errc_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(500, version, "Internal", e.what());
  }
}

HttpResponse Service::post_event(const HttpRequest& req) {
  if (read_only_) return fail(503, snapshot()->state.version(), "ReadOnly", "service is read-only");
  std::lock_guard lock(write_mu_);
  const auto snap = snapshot();
  const auto version = snap->state.version();

  std::optional<std::string> expected;
  if (const auto it = req.headers.find("if-match"); it != req.headers.end()) expected = it->second;
  if (const auto it = req.query.find("expected_version"); it != req.query.end()) expected = it->second;
  if (expected) {
    const auto v = parse_u64(*expected);
    if (!v) return fail(400, version, "BadParameter", "expected version must be an integer");
    if (*v != version) {
      return fail(409, version, "StaleBase",
                  "expected version " + std::to_string(*v) + ", graph is at " + std::to_string(version));
    }
  }

  std::string text = req.body;
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  LedgerEvent event;
  try {
    event = resolve_references(parse_ledger_line({text, "<request>", 1, RecordFormat::Jsonl}), registry_);
  } catch (const Error& e) {
    return fail(e.code() == Errc::UnresolvedEntity || e.code() == Errc::AmbiguousAlias ? 422 : 400, version,
                errc_name(e.code()), e.what());
  }
  const auto violations = validate_event(snap->state, event);
  if (!violations.empty()) {
    return fail(422, version, violation_kind_name(violations.front().kind), violations.front().message,
                to_json(violations));
  }

  const std::string line = serialize_event(event);
  try {
    if (ledger_path_) {
      ledger_out_ << line << '\n';
      ledger_out_.flush();
      if (!ledger_out_) throw Error(Errc::IoFailure, "ledger append failed");
    }
    append_audit(audit_, event);
  } catch (const Error& e) {
    return fail(500, version, errc_name(e.code()), e.what());
  }
  const AuditEntry& entry = audit_.entries().back();

  GraphState next = snap->state;
  apply_event_in_place(next, event);
  AttributionResult result = compute_incremental(next, snap->result, {});
  if (const auto* org = std::get_if<DeclareOrg>(&event.payload)) {
    registry_.add_alias(org->org_id, org->org_id);
    registry_.add_alias(org->name, org->org_id);
  }
  auto published = std::make_shared<const Snapshot>(Snapshot{std::move(next), std::move(result)});
  const auto new_version = published->state.version();
  {
    std::lock_guard slock(snap_mu_);
    snap_ = std::move(published);
  }
  return reply(201, new_version,
               {{"event_id", event.event_id}, {"seq", entry.seq}, {"digest_hex", to_hex(entry.digest)}});
}

HttpResponse Service::post_scenario(const HttpRequest& req, const Snapshot& snap) {
  const auto version = snap.state.version();
  Scenario sc;
  try {
    sc = parse_scenario_text(req.body);
  } catch (const Error& e) {
    return fail(400, version, errc_name(e.code()), e.what());
  }
  return reply(200, version, to_json(scenario_evaluate(snap.state, snap.result, sc)));
}

HttpResponse Service::verify(const Snapshot& snap) {
  ChainStatus chain;
  std::size_t entries = 0;
  {
    std::lock_guard lock(write_mu_);
    entries = audit_.size();
    chain = audit_path_ ? verify_chain_file(*audit_path_) : verify_chain(audit_.entries());
  }
  const auto cons = check_conservation(snap.state, snap.result);
  json data = {{"chain", to_json(chain)},
               {"entries", entries},
               {"conservation", to_json(cons)},
               {"ok", chain.ok && cons.ok()}};
  return reply(200, snap.state.version(), std::move(data));
}

// ---------------------------------------------------------------------------
// HTTP binding
// ---------------------------------------------------------------------------

ServiceHandle::ServiceHandle(std::unique_ptr<Service> service, const std::string& host, int port)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
  auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
    HttpRequest req;
    req.method = hreq.method;
    req.path = hreq.path;
    req.body = hreq.body;
    for (const auto& [k, v] : hreq.params) req.query.emplace(k, v);
    for (const auto& [k, v] : hreq.headers) {
      std::string name = k;
      std::transform(name.begin(), name.end(), name.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      req.headers.emplace(std::move(name), v);
    }
    const HttpResponse res = service_->handle(req);
    hres.status = res.status;
    hres.set_content(res.body, res.content_type);
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
  server_->Put(".*", handler);
  server_->Delete(".*", handler);
  server_->Patch(".*", handler);

  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw Error(Errc::StartupFailure, "cannot bind " + host);
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw Error(Errc::StartupFailure, "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

ServiceHandle::~ServiceHandle() { stop(); }

void ServiceHandle::stop() {
  if (thread_.joinable()) {
    server_->stop();
    thread_.join();
  }
}

std::unique_ptr<ServiceHandle> serve(const ApiConfig& config) {
  validate_config(config);
  return std::make_unique<ServiceHandle>(Service::load(config), config.bind_address, config.port);
}

}  // namespace elkg
