#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elkg/attribution.hpp"
#include "elkg/ledger.hpp"

namespace elkg {

struct Footprint {
  std::string node_id;
  EmissionQty total;
  EmissionQty per_unit;  // micro-tonnes per canonical unit
  Unit unit = Unit::item;
};

/// Raised for zero-quantity nodes, where a per-unit figure is undefined.
class ZeroQuantityError : public Error {
 public:
  ZeroQuantityError(std::string node_id, EmissionQty total, Unit unit);
  EmissionQty total() const noexcept { return total_; }
  Unit unit() const noexcept { return unit_; }

 private:
  EmissionQty total_;
  Unit unit_;
};

/// Throws Error(UnknownNode) or ZeroQuantityError.
Footprint product_footprint(const GraphState& state, const AttributionResult& result,
                            const std::string& node_id);

enum class Dimension { Org, Product, Process };
std::string_view dimension_name(Dimension d) noexcept;
std::optional<Dimension> parse_dimension(std::string_view s) noexcept;

struct Hotspot {
  std::string id;
  EmissionQty liability;

  friend bool operator==(const Hotspot&, const Hotspot&) = default;
};

/// Top-k by org gross_produced, process pool or product total; descending, ties by id.
std::vector<Hotspot> hotspots(const AttributionResult& result, std::size_t k, Dimension dim);

struct Override {
  enum class Kind { ReviseEmissions, ReviseWeights, ScaleTransfer, RemoveTransfer };
  Kind kind = Kind::ReviseEmissions;
  std::string target;  // process id or transfer id
  EmissionQty direct_emissions;           // ReviseEmissions
  std::optional<AllocationWeights> weights;  // ReviseWeights; empty restores quantity weights
  std::int64_t factor_micro = kMicro;     // ScaleTransfer, micro-scaled factor

  friend bool operator==(const Override&, const Override&) = default;
};

std::string_view override_kind_name(Override::Kind k) noexcept;
std::optional<Override::Kind> parse_override_kind(std::string_view s) noexcept;

struct Scenario {
  std::string scenario_id;
  std::optional<std::uint64_t> base_version;
  std::vector<Override> overrides;
};

struct DeltaLine {
  std::string id;
  std::int64_t base_micro = 0;
  std::int64_t scenario_micro = 0;
  std::int64_t delta_micro = 0;

  friend bool operator==(const DeltaLine&, const DeltaLine&) = default;
};

/// Entities whose liability changed; everything omitted has zero delta.
struct DeltaReport {
  std::string scenario_id;
  std::uint64_t basis_version = 0;
  std::vector<DeltaLine> orgs;      // net balance, sorted by id
  std::vector<DeltaLine> products;  // total, sorted by id

  bool empty() const noexcept { return orgs.empty() && products.empty(); }
  friend bool operator==(const DeltaReport&, const DeltaReport&) = default;
};

/// Overlay state with every override applied, plus the nodes to re-evaluate.
/// Throws Error(UnknownOverrideTarget) or Error(InvalidScenario).
struct Overlay {
  GraphState state;
  std::vector<NodeRef> seeds;
};
Overlay build_overlay(const GraphState& state, const Scenario& scenario);

/// Evaluates `scenario` against a private overlay of `state` and diffs with
/// `base`. Throws Error(StaleBase), Error(UnknownOverrideTarget), Error(InvalidScenario).
DeltaReport scenario_evaluate(const GraphState& state, const AttributionResult& base,
                              const Scenario& scenario);

enum class ExportFormat { Jsonl, Dot, NTriples };
std::optional<ExportFormat> parse_export_format(std::string_view s) noexcept;

/// Vocabulary namespace for N-Triples export.
inline constexpr std::string_view kVocab = "https://elkg.example.org/vocab#";
inline constexpr std::string_view kEntityBase = "https://elkg.example.org/id/";

/// Deterministic export. jsonl is the canonical event log in (timestamp, id)
/// order and needs no result; dot and ntriples annotate liabilities from `result`.
std::string export_graph(const GraphState& state, const AttributionResult& result, ExportFormat format);

}  // namespace elkg
