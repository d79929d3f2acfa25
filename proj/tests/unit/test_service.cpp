#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "elkg/service.hpp"
#include "support/fixtures.hpp"

using namespace elkg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("elkg_svc_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ApiConfig config_in(const TempDir& dir, const std::string& fixture = "minimal_autofab.jsonl") {
  ApiConfig c;
  c.port = 0;
  c.ledger_path = dir.path / "ledger.jsonl";
  c.audit_path = dir.path / "ledger.audit.jsonl";
  if (!fixture.empty()) fs::copy_file(elkg::testing::fixture_path(fixture), c.ledger_path);
  return c;
}

HttpRequest get(std::string path, std::map<std::string, std::string> query = {}) {
  return {"GET", std::move(path), std::move(query), "", {}};
}

HttpRequest post(std::string path, std::string body) { return {"POST", std::move(path), {}, std::move(body), {}}; }

std::string org_event(const std::string& id, const std::string& org, int second) {
  char ts[32];
  std::snprintf(ts, sizeof ts, "2024-01-01T00:%02d:%02dZ", second / 60, second % 60);
  return json{{"event_id", id},
              {"kind", "DeclareOrg"},
              {"timestamp", ts},
              {"payload", {{"org_id", org}, {"name", org}}}}
      .dump();
}

const std::string kOverdraw =
    R"({"event_id":"X1","kind":"DeclareTransfer","timestamp":"2023-02-01T00:00:00Z","payload":{"transfer_id":"T-X","source_node":"CAR-1","buyer":"STEELCO","amount":"2","unit":"item","node":"CAR-1@SC"}})";

}  // namespace

// ── routes ──

TEST_CASE("GET footprint returns the car liability", "[service]") {
  TempDir dir("footprint");
  auto svc = Service::load(config_in(dir));
  const auto res = svc->handle(get("/products/CAR-1/footprint"));
  CHECK(res.status == 200);
  const auto body = json::parse(res.body);
  CHECK(body["version"] == 5);
  CHECK(body["data"]["total_micro_t"] == 2'000'000);
  CHECK(body["data"]["per_unit_micro_t"] == 2'000'000);
  CHECK(body["data"]["unit"] == "item");
}

TEST_CASE("GET routes: balance, breakdown, hotspots, graph, verify", "[service]") {
  TempDir dir("routes");
  auto svc = Service::load(config_in(dir));
  const auto bal = json::parse(svc->handle(get("/orgs/AUTOFAB/balance")).body);
  CHECK(bal["data"]["net_balance_micro_t"] == 20'000'000);

  const auto bd = json::parse(svc->handle(get("/products/CAR-1/breakdown")).body);
  CHECK(bd["data"]["contributions"][0]["process_id"] == "PR-1");

  const auto hs = json::parse(svc->handle(get("/hotspots", {{"dim", "process"}, {"k", "1"}})).body);
  CHECK(hs["data"]["entries"][0]["id"] == "PR-1");
  CHECK(svc->handle(get("/hotspots", {{"k", "0"}})).status == 400);
  CHECK(svc->handle(get("/hotspots", {{"dim", "galaxy"}})).status == 400);

  const auto dot = svc->handle(get("/graph", {{"format", "dot"}}));
  CHECK(dot.status == 200);
  CHECK(json::parse(dot.body)["data"].get<std::string>().rfind("digraph elkg {", 0) == 0);
  CHECK(svc->handle(get("/graph", {{"format", "svg"}})).status == 400);

  const auto v = json::parse(svc->handle(get("/verify")).body);
  CHECK(v["data"]["ok"] == true);
  CHECK(v["data"]["entries"] == 5);
}

TEST_CASE("error statuses", "[service]") {
  TempDir dir("errors");
  auto svc = Service::load(config_in(dir));
  const auto nope = svc->handle(get("/orgs/NOPE/balance"));
  CHECK(nope.status == 404);
  CHECK(json::parse(nope.body)["error"]["code"] == "UnknownNode");
  CHECK(svc->handle(get("/products/NOPE/footprint")).status == 404);
  CHECK(svc->handle(get("/nowhere")).status == 404);
  CHECK(svc->handle(get("/events")).status == 405);
  CHECK(svc->handle(post("/verify", "")).status == 405);
  CHECK(svc->handle(post("/events", "{not json")).status == 400);
  CHECK(svc->handle(post("/scenarios", "[]")).status == 400);
}

TEST_CASE("POST /events: overdraw is rejected with the violation", "[service][write]") {
  TempDir dir("overdraw");
  auto svc = Service::load(config_in(dir));
  const auto res = svc->handle(post("/events", kOverdraw));
  CHECK(res.status == 422);
  const auto body = json::parse(res.body);
  CHECK(body["error"]["code"] == "QuantityOverdraw");
  CHECK(body["error"]["violations"][0]["kind"] == "QuantityOverdraw");
  CHECK(svc->snapshot()->state.version() == 5);
  CHECK(svc->audit_entries().size() == 5);
}

TEST_CASE("POST /events: accepted event is logged before the reply", "[service][write]") {
  TempDir dir("accept");
  const auto cfg = config_in(dir);
  auto svc = Service::load(cfg);
  const auto res = svc->handle(post("/events", org_event("N1", "NEWCO", 1)));
  REQUIRE(res.status == 201);
  const auto body = json::parse(res.body);
  CHECK(body["version"] == 6);
  CHECK(body["data"]["seq"] == 5);

  std::ifstream audit(cfg.audit_path);
  std::string line, last;
  while (std::getline(audit, line)) last = line;
  const auto entry = json::parse(last);
  CHECK(entry["event_id"] == "N1");
  CHECK(entry["digest_hex"] == body["data"]["digest_hex"]);
  CHECK(verify_chain_file(cfg.audit_path) == ChainStatus::Ok());

  // A restart sees the same graph.
  auto again = Service::load(cfg);
  CHECK(again->snapshot()->state.same_content(svc->snapshot()->state));
}

TEST_CASE("POST /events: expected version must match", "[service][write]") {
  TempDir dir("stale");
  auto svc = Service::load(config_in(dir));
  auto req = post("/events", org_event("N1", "NEWCO", 1));
  req.headers["if-match"] = "4";
  CHECK(svc->handle(req).status == 409);
  req.headers["if-match"] = "5";
  CHECK(svc->handle(req).status == 201);
  auto q = post("/events", org_event("N2", "NEWCO2", 2));
  q.query["expected_version"] = "5";
  CHECK(svc->handle(q).status == 409);
}

TEST_CASE("POST /events: read-only service refuses writes", "[service][write]") {
  TempDir dir("ro");
  auto cfg = config_in(dir);
  cfg.read_only = true;
  auto svc = Service::load(cfg);
  CHECK(svc->handle(post("/events", org_event("N1", "NEWCO", 1))).status == 503);
  CHECK(svc->handle(get("/products/CAR-1/footprint")).status == 200);
}

TEST_CASE("POST /scenarios evaluates what-if deltas", "[service]") {
  TempDir dir("scenario");
  auto svc = Service::load(config_in(dir));
  const auto res = svc->handle(post(
      "/scenarios",
      R"({"scenario_id":"s1","overrides":[{"kind":"revise_emissions","process_id":"PR-1","direct_emissions_t":"30"}]})"));
  REQUIRE(res.status == 200);
  const auto d = json::parse(res.body)["data"];
  CHECK(d["orgs"][0]["delta_micro_t"] == 10'000'000);
  CHECK(svc->snapshot()->result.find_product("CAR-1")->total.micro_tonnes() == 2'000'000);
  CHECK(svc->handle(post("/scenarios", R"({"scenario_id":"s2","overrides":[{"kind":"remove_transfer","transfer_id":"NOPE"}]})"))
            .status == 422);
}

// ── startup ──

TEST_CASE("startup refuses a tampered audit log unless forced", "[service][startup]") {
  TempDir dir("tamper");
  auto cfg = config_in(dir);
  Service::load(cfg);
  std::string text;
  {
    std::ifstream in(cfg.audit_path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  text[text.find("SteelCo")] = 's';
  std::ofstream(cfg.audit_path, std::ios::trunc) << text;
  try {
    Service::load(cfg);
    FAIL("expected StartupFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::StartupFailure);
  }
  cfg.force = true;
  CHECK_NOTHROW(Service::load(cfg));
}

TEST_CASE("startup creates a missing ledger and validates config", "[service][startup]") {
  TempDir dir("fresh");
  auto cfg = config_in(dir, "");
  auto svc = Service::load(cfg);
  CHECK(fs::exists(cfg.ledger_path));
  CHECK(svc->snapshot()->state.version() == 0);

  auto bad = cfg;
  bad.port = 70000;
  CHECK_THROWS_AS(validate_config(bad), Error);
  bad = cfg;
  bad.ledger_path = dir.path / "missing" / "ledger.jsonl";
  CHECK_THROWS_AS(validate_config(bad), Error);
}

TEST_CASE("CSV ledgers are served read-only", "[service][startup]") {
  TempDir dir("csv");
  ApiConfig cfg;
  cfg.ledger_path = dir.path / "t.csv";
  cfg.audit_path = dir.path / "t.audit.jsonl";
  std::ofstream(cfg.ledger_path) << kTransferCsvHeader << "\n";
  auto svc = Service::load(cfg);
  CHECK(svc->handle(post("/events", org_event("N1", "NEWCO", 1))).status == 503);
}

// ── concurrency ──

TEST_CASE("concurrent writes are linearized in audit order", "[service][write]") {
  TempDir dir("linear");
  const auto cfg = config_in(dir);
  auto svc = Service::load(cfg);
  constexpr int kThreads = 8, kPer = 25;
  std::vector<std::thread> threads;
  std::atomic<int> created{0};
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < kPer; ++i) {
        const int n = t * kPer + i;
        const auto id = "C" + std::to_string(n);
        if (svc->handle(post("/events", org_event(id, "ORG-" + id, n))).status == 201) ++created;
        svc->handle(get("/orgs/AUTOFAB/balance"));
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(created == kThreads * kPer);

  const auto entries = svc->audit_entries();
  REQUIRE(entries.size() == 5 + kThreads * kPer);
  CHECK(verify_chain(entries) == ChainStatus::Ok());
  GraphState replay;
  for (const auto& e : entries) apply_event_in_place(replay, parse_ledger_line({e.event, "audit", e.seq + 1, RecordFormat::Jsonl}));
  CHECK(replay.same_content(svc->snapshot()->state));
  CHECK(verify_chain_file(cfg.audit_path) == ChainStatus::Ok());
}

// ── HTTP ──

TEST_CASE("HTTP binding serves the routes", "[service][http]") {
  TempDir dir("http");
  ServiceHandle handle(Service::load(config_in(dir)), "127.0.0.1", 0);
  REQUIRE(handle.port() > 0);
  httplib::Client cli("127.0.0.1", handle.port());
  const auto fp = cli.Get("/products/CAR-1/footprint");
  REQUIRE(fp);
  CHECK(fp->status == 200);
  CHECK(json::parse(fp->body)["data"]["total_micro_t"] == 2'000'000);

  const auto hs = cli.Get("/hotspots?dim=org&k=2");
  REQUIRE(hs);
  CHECK(json::parse(hs->body)["data"]["entries"].size() == 2);

  const auto created = cli.Post("/events", org_event("H1", "HTTPCO", 1), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto missing = cli.Get("/orgs/NOPE/balance");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  handle.stop();
}
