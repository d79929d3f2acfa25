#pragma once

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "elkg/arith.hpp"
#include "elkg/ledger.hpp"

namespace elkg {

/// Internal propagation resolution: fine units per micro-tonne. Published
/// values are rounded from this scale, which keeps per-node rounding error
/// under one micro-tonne no matter how many rounded shares merge in a pool.
inline constexpr u128 kFineScale = 1'000'000;

struct ProductLiability {
  std::string node_id;
  EmissionQty total;
  // Micro-tonnes per canonical unit; empty for zero-quantity nodes.
  std::optional<EmissionQty> per_unit;

  friend bool operator==(const ProductLiability&, const ProductLiability&) = default;
};

struct ProcessLiability {
  std::string process_id;
  EmissionQty pool;  // direct emissions plus consumed input liabilities

  friend bool operator==(const ProcessLiability&, const ProcessLiability&) = default;
};

struct OrgBalance {
  std::string org_id;
  // Liability of everything the org's processes produced.
  EmissionQty gross_produced;
  // Liability of inventory still held (not transferred or consumed).
  EmissionQty held;
  std::int64_t offsets_micro = 0;
  // held + offsets; may be negative.
  std::int64_t net_balance_micro = 0;

  friend bool operator==(const OrgBalance&, const OrgBalance&) = default;
};

struct AttributionResult {
  std::uint64_t basis_version = 0;
  std::string basis_head;  // id of the last event in the basis state

  // Indexed like GraphState::products() / processes() / orgs().
  std::vector<ProductLiability> products;
  std::vector<ProcessLiability> processes;
  std::vector<OrgBalance> orgs;

  // Fine-scale propagation state reused by incremental recomputation.
  std::vector<u128> product_fine;
  std::vector<u128> held_fine;
  std::vector<u128> pool_fine;
  std::vector<u128> input_fine;  // per (process, input slot), flattened

  // Node evaluations performed by the computation that produced this result.
  std::size_t evaluated_nodes = 0;

  const ProductLiability* find_product(const std::string& id) const;
  const ProcessLiability* find_process(const std::string& id) const;
  const OrgBalance* find_org(const std::string& id) const;

  /// Bit-exact comparison of every attribution value (ignores evaluated_nodes).
  bool same_values(const AttributionResult& other) const;
  friend bool operator==(const AttributionResult& a, const AttributionResult& b) {
    return a.same_values(b);
  }

  struct Index {
    std::unordered_map<std::string, std::size_t> products, processes, orgs;
  };
  std::shared_ptr<const Index> index;
};

struct Contribution {
  std::string process_id;
  EmissionQty amount;

  friend bool operator==(const Contribution&, const Contribution&) = default;
};

struct ContributionBreakdown {
  std::string node_id;
  EmissionQty total;
  std::vector<Contribution> contributions;  // descending amount, ties by id
};

/// Process and product ids with every node after its predecessors; ties by
/// timestamp then id. Throws Error(CycleDetected) if the graph is cyclic.
std::vector<std::string> topological_order(const GraphState& state);

/// Largest-remainder split of a micro-tonne pool by positive decimal weights
/// (micro-scaled). Throws Error(EmptyWeights) when `weights` is empty or any
/// weight is not positive.
std::vector<std::pair<std::string, EmissionQty>> allocate_pool(
    EmissionQty pool, const std::vector<std::pair<std::string, std::int64_t>>& weights);

struct TransferShare {
  EmissionQty moved;
  EmissionQty residual;
};

/// Liability leaving a batch with `transfer_qty`. Throws Error(Overdraw) or Error(UnitMismatch).
TransferShare transfer_share(EmissionQty source_remaining_liability, Quantity source_remaining_qty,
                             Quantity transfer_qty);

/// Full propagation in topological order. Requires causality_check(state) == [].
AttributionResult compute_full(const GraphState& state);

/// Recomputes only what is downstream of events applied since `base` plus the
/// events named in `changed`. Bit-identical to compute_full(state).
/// Throws Error(StaleBase) if `base` was not computed on an ancestor of `state`,
/// Error(UnknownEvent) for ids in `changed` that the state never applied.
AttributionResult compute_incremental(const GraphState& state, const AttributionResult& base,
                                      const std::set<std::string>& changed);

/// Recomputes downstream of `seeds` on `state`, reusing `base` for everything
/// else. No ancestry check: this is the overlay path for what-if evaluation,
/// where `state` is an edited copy of base's state with the same shape.
AttributionResult recompute_from(const GraphState& state, const AttributionResult& base,
                                 std::span<const NodeRef> seeds);

/// Per-source-process split of a product node's liability. Throws Error(UnknownNode).
ContributionBreakdown breakdown(const GraphState& state, const AttributionResult& result,
                                const std::string& node_id);

}  // namespace elkg
