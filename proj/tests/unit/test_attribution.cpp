#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>

#include "elkg/attribution.hpp"
#include "support/fixtures.hpp"
#include "support/path_oracle.hpp"
#include "support/random_ledger.hpp"

using namespace elkg;
using elkg::testing::Rational;
using elkg::testing::abs_diff;

namespace {

std::int64_t product_micro(const AttributionResult& r, const std::string& id) {
  const auto* p = r.find_product(id);
  REQUIRE(p);
  return p->total.micro_tonnes();
}

std::int64_t injected(const GraphState& s) {
  std::int64_t sum = 0;
  for (const auto& p : s.processes()) sum += p.direct_emissions.micro_tonnes();
  return sum;
}

}  // namespace

// ── anchor examples ──

TEST_CASE("compute_full: minimal fixture gives 2 t per car", "[attribution]") {
  const auto in = elkg::testing::load_fixture("minimal_autofab.jsonl");
  const auto r = compute_full(in.state);
  for (int i = 1; i <= 10; ++i) {
    const auto* car = r.find_product("CAR-" + std::to_string(i));
    REQUIRE(car);
    CHECK(car->total.micro_tonnes() == 2'000'000);
    CHECK(car->per_unit->micro_tonnes() == 2'000'000);
  }
  CHECK(product_micro(r, "STEEL@STEELCO") == 20'000'000);
  CHECK(product_micro(r, "STEEL@AUTOFAB") == 20'000'000);
  CHECK(r.find_org("AUTOFAB")->held.micro_tonnes() == 20'000'000);
  CHECK(r.find_org("STEELCO")->held.micro_tonnes() == 0);
  CHECK(r.find_org("STEELCO")->gross_produced.micro_tonnes() == 20'000'000);
  CHECK(r.basis_version == 5);
  CHECK(r.basis_head == "E05");
}

TEST_CASE("compute_full: full supply chain fixture", "[attribution]") {
  const auto in = elkg::testing::load_fixture("full_autofab.jsonl");
  const auto r = compute_full(in.state);
  CHECK(product_micro(r, "ELEC@ENERGYCORP") == 50'000'000);
  CHECK(r.find_product("ELEC@ENERGYCORP")->per_unit->micro_tonnes() == 50);
  CHECK(product_micro(r, "CARS@AUTOFAB") == 65'000'000);
  CHECK(product_micro(r, "CARS-READY@DEALER") == 70'000'000);
  CHECK(product_micro(r, "CAR@DOREEN") == 7'000'000);

  std::map<std::string, std::int64_t> held;
  for (const auto& o : r.orgs) held[o.org_id] = o.held.micro_tonnes();
  CHECK(held["ENERGYCORP"] == 29'000'000);
  CHECK(held["RUBBERINC"] == 1'000'000);
  CHECK(held["AUTOFAB"] == 8'000'000);
  CHECK(held["DEALER"] == 63'000'000);
  CHECK(held["DOREEN"] == 7'000'000);
  CHECK(r.find_org("AUTOFAB")->net_balance_micro == 7'000'000);
  CHECK(injected(in.state) == 108'000'000);
}

TEST_CASE("compute_full: graph without emissions attributes nothing", "[attribution]") {
  auto p = elkg::testing::LedgerGenParams{};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = elkg::testing::build_state(elkg::testing::random_ledger(seed, p));
    for (std::size_t i = 0; i < s.processes().size(); ++i) s.overlay_direct_emissions(i, EmissionQty{});
    const auto r = compute_full(s);
    for (const auto& prod : r.products) REQUIRE(prod.total.micro_tonnes() == 0);
    for (const auto& o : r.orgs) REQUIRE(o.held.micro_tonnes() == 0);
  }
}

TEST_CASE("compute_full: empty graph", "[attribution]") {
  const auto r = compute_full(GraphState{});
  CHECK(r.products.empty());
  CHECK(r.orgs.empty());
  CHECK(r.basis_version == 0);
}

// ── exact oracle ──

TEST_CASE("compute_full agrees with the path-sum oracle within 1 micro-tonne", "[attribution][oracle][property]") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    elkg::testing::LedgerGenParams p;
    p.max_nodes = 30;
    const auto s = elkg::testing::build_state(elkg::testing::random_ledger(seed, p));
    const auto r = compute_full(s);
    const auto o = elkg::testing::path_oracle(s);
    for (const auto& prod : r.products) REQUIRE(abs_diff(prod.total.micro_tonnes(), o.products.at(prod.node_id)) < 1);
    for (const auto& proc : r.processes) REQUIRE(abs_diff(proc.pool.micro_tonnes(), o.pools.at(proc.process_id)) < 1);
    for (const auto& org : r.orgs) REQUIRE(abs_diff(org.held.micro_tonnes(), o.org_held.at(org.org_id)) < 1);
  }
}

// ── topological_order ──

TEST_CASE("topological_order: empty graph", "[attribution][topo]") { CHECK(topological_order(GraphState{}).empty()); }

TEST_CASE("topological_order: predecessors precede successors", "[attribution][topo]") {
  const auto s = elkg::testing::load_fixture("full_autofab.jsonl").state;
  const auto order = topological_order(s);
  CHECK(order.size() == s.processes().size() + s.products().size());
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const auto& p : s.processes()) {
    for (const auto& in : p.inputs) CHECK(pos.at(in.node_id) < pos.at(p.process_id));
    for (auto out : p.outputs) CHECK(pos.at(p.process_id) < pos.at(s.products()[out].node_id));
  }
  for (const auto& t : s.transfers()) CHECK(pos.at(s.products()[t.source].node_id) < pos.at(s.products()[t.target].node_id));
}

TEST_CASE("topological_order: minimal fixture chain", "[attribution][topo]") {
  const auto order = topological_order(elkg::testing::load_fixture("minimal_autofab.jsonl").state);
  REQUIRE(order.size() >= 4);
  CHECK(order[0] == "PR-1");
  CHECK(order[1] == "STEEL@STEELCO");
  CHECK(order[2] == "STEEL@AUTOFAB");
  CHECK(order[3] == "PR-2");
}

// ── breakdown ──

TEST_CASE("breakdown: minimal car comes entirely from smelting", "[attribution][breakdown]") {
  const auto s = elkg::testing::load_fixture("minimal_autofab.jsonl").state;
  const auto b = breakdown(s, compute_full(s), "CAR-1");
  CHECK(b.total.micro_tonnes() == 2'000'000);
  REQUIRE(b.contributions.size() == 1);
  CHECK(b.contributions[0] == Contribution{"PR-1", EmissionQty::from_micro(2'000'000)});
  CHECK_THROWS_AS(breakdown(s, compute_full(s), "NOPE"), Error);
}

TEST_CASE("breakdown: contributions sum to the node total", "[attribution][breakdown]") {
  const auto s = elkg::testing::load_fixture("full_autofab.jsonl").state;
  const auto r = compute_full(s);
  const auto b = breakdown(s, r, "CAR@DOREEN");
  std::int64_t sum = 0;
  for (const auto& c : b.contributions) sum += c.amount.micro_tonnes();
  CHECK(sum == 7'000'000);
  CHECK(b.contributions.size() >= 10);
  for (std::size_t i = 1; i < b.contributions.size(); ++i) {
    CHECK(b.contributions[i - 1].amount.micro_tonnes() >= b.contributions[i].amount.micro_tonnes());
  }
}

TEST_CASE("breakdown: each contribution matches a single-source ablation", "[attribution][breakdown][property]") {
  for (std::uint64_t seed = 300; seed < 320; ++seed) {
    const auto s = elkg::testing::build_state(elkg::testing::random_ledger(seed, {}));
    const auto r = compute_full(s);
    const auto o = elkg::testing::path_oracle(s);
    for (std::size_t n = 0; n < s.products().size(); n += 3) {
      const auto& id = s.products()[n].node_id;
      const auto b = breakdown(s, r, id);
      std::int64_t sum = 0;
      for (const auto& c : b.contributions) {
        sum += c.amount.micro_tonnes();
        auto only = s;
        for (std::size_t p = 0; p < s.processes().size(); ++p) {
          if (s.processes()[p].process_id != c.process_id) only.overlay_direct_emissions(p, EmissionQty{});
        }
        const auto exact = elkg::testing::path_oracle(only).products.at(id);
        REQUIRE(abs_diff(c.amount.micro_tonnes(), exact) < 1);
      }
      REQUIRE(sum == b.total.micro_tonnes());
      REQUIRE(abs_diff(sum, o.products.at(id)) < 1);
    }
  }
}

// ── properties ──

TEST_CASE("raising one process's emissions never lowers any liability", "[attribution][property]") {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 400; seed < 440; ++seed) {
    const auto s = elkg::testing::build_state(elkg::testing::random_ledger(seed, {}));
    if (s.processes().empty()) continue;
    const auto base = compute_full(s);
    auto up = s;
    const auto p = rng() % s.processes().size();
    up.overlay_direct_emissions(p, EmissionQty::from_micro(s.processes()[p].direct_emissions.micro_tonnes() +
                                                           1 + static_cast<std::int64_t>(rng() % 1'000'000'000)));
    const auto raised = compute_full(up);
    for (std::size_t n = 0; n < base.products.size(); ++n) {
      REQUIRE(raised.products[n].total.micro_tonnes() >= base.products[n].total.micro_tonnes());
    }
  }
}

TEST_CASE("scaling every emission by k scales liabilities by k", "[attribution][property]") {
  for (std::uint64_t seed = 500; seed < 530; ++seed) {
    const auto s = elkg::testing::build_state(elkg::testing::random_ledger(seed, {}));
    const auto base = compute_full(s);
    for (std::int64_t k : {2, 7, 1000}) {
      auto scaled = s;
      for (std::size_t p = 0; p < s.processes().size(); ++p) {
        scaled.overlay_direct_emissions(p, EmissionQty::from_micro(s.processes()[p].direct_emissions.micro_tonnes() * k));
      }
      const auto r = compute_full(scaled);
      for (std::size_t n = 0; n < base.products.size(); ++n) {
        const auto diff = r.products[n].total.micro_tonnes() - k * base.products[n].total.micro_tonnes();
        REQUIRE(std::abs(diff) <= k);
      }
    }
  }
}

TEST_CASE("compute_full is deterministic", "[attribution][property]") {
  for (std::uint64_t seed = 600; seed < 620; ++seed) {
    const auto events = elkg::testing::random_ledger(seed, {});
    CHECK(compute_full(elkg::testing::build_state(events)).same_values(compute_full(elkg::testing::build_state(events))));
  }
}

TEST_CASE("held liability conserves injected emissions exactly", "[attribution][property]") {
  elkg::testing::LedgerGenParams p;
  p.offset_rate = 0.1;
  p.measurement_rate = 0.1;
  for (std::uint64_t seed = 700; seed < 800; ++seed) {
    const auto s = elkg::testing::build_state(elkg::testing::random_ledger(seed, p));
    const auto r = compute_full(s);
    std::int64_t held = 0, net = 0, offsets = 0;
    for (const auto& o : r.orgs) {
      held += o.held.micro_tonnes();
      net += o.net_balance_micro;
      offsets += o.offsets_micro;
    }
    REQUIRE(held == injected(s));
    REQUIRE(net == injected(s) + offsets);
  }
}
