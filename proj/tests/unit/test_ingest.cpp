#include <catch2/catch_amalgamated.hpp>

#include "elkg/ingest.hpp"
#include "support/fixtures.hpp"
#include "support/random_ledger.hpp"

using namespace elkg;
using elkg::testing::fixture_path;

namespace {

RawEventRecord line(std::string text, std::size_t n = 1) { return {std::move(text), "mem", n, RecordFormat::Jsonl}; }

Errc parse_code(const std::string& text) {
  try {
    parse_ledger_line(line(text));
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::RejectedEvent;
}

const std::string kOrg =
    R"({"event_id":"o1","kind":"DeclareOrg","timestamp":"2023-01-01T00:00:00Z","payload":{"org_id":"A","name":"Acme Corp"}})";

}  // namespace

// ── parsing ──

TEST_CASE("parse_ledger_line: reads a process declaration", "[ingest][parse]") {
  const auto e = parse_ledger_line(line(
      R"({"event_id":"p","kind":"DeclareProcess","timestamp":"2023-01-02T00:00:00Z","payload":{"process_id":"P","owner":"A","name":"n","direct_emissions_t":"1.5","inputs":[{"node":"X","amount":"2","unit":"MWh"}],"outputs":[{"node":"Y","product":"y","amount":"3","unit":"t"}],"allocation_weights":{"Y":"1"}}})"));
  const auto& p = std::get<DeclareProcess>(e.payload);
  CHECK(p.direct_emissions.micro_tonnes() == 1'500'000);
  CHECK(p.inputs.at(0) == InputUse{"X", {2'000 * kMicro, Unit::kWh}});
  CHECK(p.outputs.at(0).quantity == Quantity{3'000 * kMicro, Unit::kg});
  CHECK(p.allocation_weights == AllocationWeights{{"Y", 1'000'000}});
}

TEST_CASE("parse_ledger_line: error codes", "[ingest][parse]") {
  CHECK(parse_code("not json") == Errc::MalformedRecord);
  CHECK(parse_code(R"({"event_id":"x","kind":"Teleport","timestamp":"2023-01-01T00:00:00Z","payload":{}})") ==
        Errc::UnknownEventKind);
  CHECK(parse_code(R"({"event_id":"x","kind":"DeclareOrg","timestamp":"yesterday","payload":{"org_id":"A","name":"A"}})") ==
        Errc::BadTimestamp);
  CHECK(parse_code(R"({"event_id":"x","kind":"EmissionMeasurement","timestamp":"2023-01-01T00:00:00Z","payload":{"process_id":"P","direct_emissions_t":"-1"}})") ==
        Errc::BadNumber);
  CHECK(parse_code(R"({"event_id":"x","kind":"DeclareTransfer","timestamp":"2023-01-01T00:00:00Z","payload":{"transfer_id":"T","source_node":"S","buyer":"B","amount":"1","unit":"bushel","node":"N"}})") ==
        Errc::UnknownUnit);
  CHECK(parse_code(R"({"kind":"DeclareOrg","timestamp":"2023-01-01T00:00:00Z","payload":{"org_id":"A","name":"A"}})") ==
        Errc::MalformedRecord);
}

TEST_CASE("serialize_event round-trips every fixture event", "[ingest][roundtrip]") {
  for (const char* name : {"minimal_autofab.jsonl", "full_autofab.jsonl"}) {
    for (const auto& rec : read_ledger_file(fixture_path(name))) {
      const auto e = parse_ledger_line(rec);
      const auto text = serialize_event(e);
      CHECK(parse_ledger_line(line(text)) == e);
      CHECK(serialize_event(parse_ledger_line(line(text))) == text);
    }
  }
}

TEST_CASE("serialize_event round-trips random ledgers", "[ingest][roundtrip][property]") {
  elkg::testing::LedgerGenParams p;
  p.offset_rate = 0.1;
  p.measurement_rate = 0.1;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (const auto& e : elkg::testing::random_ledger(seed, p)) REQUIRE(parse_ledger_line(line(serialize_event(e))) == e);
  }
}

// ── aliases ──

TEST_CASE("resolve_entity: normalized exact match", "[ingest][alias]") {
  EntityRegistry r;
  r.add_alias("ACME", "ACME");
  r.add_alias("Acme  Corp ", "ACME");
  CHECK(normalize_alias("  Acme \t Corp ") == "acme corp");
  CHECK(resolve_entity("acme corp", r) == "ACME");
  CHECK(resolve_entity("ACME", r) == "ACME");
  CHECK_THROWS_MATCHES(resolve_entity("Acme Corporation", r), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::UnresolvedEntity; }));
  r.add_alias("acme corp", "ACME2");
  CHECK_THROWS_MATCHES(resolve_entity("Acme Corp", r), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::AmbiguousAlias; }));
}

// ── ingest ──

TEST_CASE("ingest: minimal fixture applies cleanly", "[ingest]") {
  const auto r = elkg::testing::load_fixture("minimal_autofab.jsonl");
  CHECK(r.report.rejections.empty());
  CHECK(r.report.accepted == 5);
  CHECK(r.state.version() == 5);
  CHECK(r.accepted.size() == 5);
  CHECK(r.state.products().size() == 12);
}

TEST_CASE("ingest: full fixture applies cleanly", "[ingest]") {
  const auto r = elkg::testing::load_fixture("full_autofab.jsonl");
  CHECK(r.report.rejections.empty());
  CHECK(r.state.version() == 34);
}

TEST_CASE("ingest: transfer CSV on top of a ledger resolves buyer names", "[ingest][csv]") {
  EntityRegistry reg;
  auto base = ingest(read_ledger_file(fixture_path("minimal_autofab.jsonl")), reg);
  const auto csv = read_ledger_file(fixture_path("minimal_transfers.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0].format == RecordFormat::TransferCsv);
  const auto r = ingest_into(base.state, csv, reg);
  CHECK(r.report.rejections.empty());
  const auto& s = r.state;
  const auto t2 = s.transfer_index("T-CAR-2");
  REQUIRE(t2);
  CHECK(s.transfers()[*t2].buyer == "STEELCO");
  CHECK(s.products()[s.transfers()[*t2].target].node_id == "T-CAR-2");
}

TEST_CASE("ingest: rejections carry line numbers and skip the record", "[ingest]") {
  const std::string bad_transfer =
      R"({"event_id":"t1","kind":"DeclareTransfer","timestamp":"2023-01-01T00:00:03Z","payload":{"transfer_id":"T","source_node":"NOPE","buyer":"A","amount":"1","unit":"kg","node":"N"}})";
  const std::string unknown_buyer =
      R"({"event_id":"o2","kind":"OffsetAdjustment","timestamp":"2023-01-01T00:00:04Z","payload":{"org_id":"Nobody","delta_t":"-1"}})";
  const auto recs = split_records(kOrg + "\n{oops\n" + bad_transfer + "\n" + unknown_buyer + "\n", "f.jsonl",
                                  RecordFormat::Jsonl);
  REQUIRE(recs.size() == 4);
  EntityRegistry reg;
  const auto r = ingest(recs, reg);
  CHECK(r.report.accepted == 1);
  REQUIRE(r.report.rejections.size() == 3);
  std::map<std::size_t, std::string> by_line;
  for (const auto& rej : r.report.rejections) by_line[rej.line] = rej.reason;
  CHECK(by_line.at(2) == "MalformedRecord");
  CHECK(by_line.at(3) == "UnknownReference");
  CHECK(by_line.at(4) == "UnresolvedEntity");
  CHECK(r.state.version() == 1);
}

TEST_CASE("ingest: records are applied in ledger time regardless of file order", "[ingest]") {
  const std::string proc =
      R"({"event_id":"p1","kind":"DeclareProcess","timestamp":"2023-01-02T00:00:00Z","payload":{"process_id":"P","owner":"acme corp","name":"n","direct_emissions_t":"1","outputs":[{"node":"X","product":"x","amount":"1","unit":"kg"}]}})";
  EntityRegistry reg;
  const auto r = ingest(split_records(proc + "\n" + kOrg + "\n", "f", RecordFormat::Jsonl), reg);
  CHECK(r.report.rejections.empty());
  REQUIRE(r.accepted.size() == 2);
  CHECK(r.accepted[0].event_id == "o1");
  CHECK(r.accepted[1].text == proc);
  CHECK(r.state.processes().at(0).owner == "A");
}

TEST_CASE("read_ledger_file: missing file is an IoFailure", "[ingest]") {
  CHECK_THROWS_MATCHES(read_ledger_file("/nonexistent/x.jsonl"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::IoFailure; }));
}
