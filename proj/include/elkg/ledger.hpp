#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "elkg/error.hpp"
#include "elkg/quantity.hpp"
#include "elkg/timestamp.hpp"

namespace elkg {

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

struct DeclareOrg {
  std::string org_id;
  std::string name;
  std::string location;
  std::string sector;
  // Size, reported emissions and similar descriptive attributes; never computed on.
  std::map<std::string, std::string> metadata;

  friend bool operator==(const DeclareOrg&, const DeclareOrg&) = default;
};

struct InputUse {
  std::string node_id;
  Quantity quantity;

  friend bool operator==(const InputUse&, const InputUse&) = default;
};

struct OutputDecl {
  std::string node_id;
  std::string product_name;
  Quantity quantity;

  friend bool operator==(const OutputDecl&, const OutputDecl&) = default;
};

/// Output id -> positive weight, micro-scaled decimal.
using AllocationWeights = std::map<std::string, std::int64_t>;

struct DeclareProcess {
  std::string process_id;
  std::string owner;
  std::string name;
  EmissionQty direct_emissions;
  std::vector<InputUse> inputs;
  std::vector<OutputDecl> outputs;
  std::optional<AllocationWeights> allocation_weights;

  friend bool operator==(const DeclareProcess&, const DeclareProcess&) = default;
};

struct DeclareTransfer {
  std::string transfer_id;
  std::string source_node;
  std::string buyer;
  Quantity quantity;
  // Id of the product node created under the buyer.
  std::string node_id;

  friend bool operator==(const DeclareTransfer&, const DeclareTransfer&) = default;
};

struct EmissionMeasurement {
  std::string process_id;
  EmissionQty direct_emissions;

  friend bool operator==(const EmissionMeasurement&, const EmissionMeasurement&) = default;
};

struct OffsetAdjustment {
  std::string org_id;
  SignedEmissionDelta delta;

  friend bool operator==(const OffsetAdjustment&, const OffsetAdjustment&) = default;
};

enum class EventKind { DeclareOrg, DeclareProcess, DeclareTransfer, EmissionMeasurement, OffsetAdjustment };

std::string_view event_kind_name(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view name) noexcept;

using EventPayload =
    std::variant<DeclareOrg, DeclareProcess, DeclareTransfer, EmissionMeasurement, OffsetAdjustment>;

struct LedgerEvent {
  std::string event_id;
  Timestamp timestamp{};
  EventPayload payload;

  EventKind kind() const noexcept { return static_cast<EventKind>(payload.index()); }
  friend bool operator==(const LedgerEvent&, const LedgerEvent&) = default;
};

/// Total order of ledger time: timestamp, then event id.
struct EventKey {
  Timestamp timestamp{};
  std::string event_id;

  friend auto operator<=>(const EventKey&, const EventKey&) = default;
};

inline EventKey key_of(const LedgerEvent& ev) { return {ev.timestamp, ev.event_id}; }

// ---------------------------------------------------------------------------
// Materialized graph
// ---------------------------------------------------------------------------

struct OrgRecord {
  DeclareOrg decl;
  EventKey declared;

  const std::string& id() const noexcept { return decl.org_id; }
  friend bool operator==(const OrgRecord&, const OrgRecord&) = default;
};

struct ProcessNode {
  std::string process_id;
  std::string owner;
  std::string name;
  EventKey declared;
  EmissionQty direct_emissions;
  // Key of the measurement currently in force (== declared when never revised).
  EventKey revised;
  std::vector<InputUse> inputs;
  std::vector<std::size_t> outputs;  // product indices
  std::optional<AllocationWeights> allocation_weights;

  friend bool operator==(const ProcessNode&, const ProcessNode&) = default;
};

enum class OutflowKind { Transfer, Consumption };

struct Outflow {
  OutflowKind kind = OutflowKind::Transfer;
  std::size_t target = 0;  // transfer index, or consuming process index
  std::size_t slot = 0;    // input position within the consuming process
  std::int64_t quantity = 0;
  EventKey key;

  friend bool operator==(const Outflow&, const Outflow&) = default;
};

struct ProductNode {
  enum class Origin { ProducedBy, ReceivedVia };

  std::string node_id;
  std::string owner;
  std::string product_name;
  Quantity quantity;
  EventKey created;
  Origin origin = Origin::ProducedBy;
  std::size_t origin_index = 0;  // process index or transfer index
  std::vector<Outflow> outflows;  // sorted by key
  std::int64_t outflow_total = 0;

  friend bool operator==(const ProductNode&, const ProductNode&) = default;
};

struct TransferEdge {
  std::string transfer_id;
  std::size_t source = 0;  // product index
  std::string buyer;
  Quantity quantity;
  EventKey key;
  std::size_t target = 0;  // product index
  // Scenario overlays only: the transfer moves neither goods nor liability.
  bool severed = false;

  friend bool operator==(const TransferEdge&, const TransferEdge&) = default;
};

struct OffsetRecord {
  std::string org_id;
  SignedEmissionDelta delta;
  EventKey key;

  friend bool operator==(const OffsetRecord&, const OffsetRecord&) = default;
};

struct NodeRef {
  enum class Kind { Process, Product } kind = Kind::Process;
  std::size_t index = 0;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

enum class ViolationKind {
  DuplicateId,
  UnknownReference,
  QuantityOverdraw,
  CausalityViolation,
  UnitMismatch,
  InvalidAllocation,
  EmptyProcess,
  OwnershipMismatch,
};

std::string_view violation_kind_name(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

class RejectedEvent : public Error {
 public:
  RejectedEvent(std::string event_id, ValidationReport report);

  const std::string& event_id() const noexcept { return event_id_; }
  const ValidationReport& report() const noexcept { return report_; }

 private:
  std::string event_id_;
  ValidationReport report_;
};

/// Event-sourced supply-chain graph. Value type: copies are independent
/// snapshots; `version` counts applied events.
class GraphState {
 public:
  std::uint64_t version() const noexcept { return events_.size(); }

  const std::vector<OrgRecord>& orgs() const noexcept { return orgs_; }
  const std::vector<ProcessNode>& processes() const noexcept { return processes_; }
  const std::vector<ProductNode>& products() const noexcept { return products_; }
  const std::vector<TransferEdge>& transfers() const noexcept { return transfers_; }
  const std::vector<OffsetRecord>& offsets() const noexcept { return offsets_; }
  /// Applied events in application order.
  const std::vector<LedgerEvent>& events() const noexcept { return events_; }
  /// Processes and products in creation order; always a topological order.
  const std::vector<NodeRef>& creation_order() const noexcept { return creation_order_; }

  std::optional<std::size_t> org_index(const std::string& id) const;
  std::optional<std::size_t> process_index(const std::string& id) const;
  std::optional<std::size_t> product_index(const std::string& id) const;
  std::optional<std::size_t> transfer_index(const std::string& id) const;
  std::optional<std::size_t> event_index(const std::string& id) const;

  /// Quantity of a product node neither transferred nor consumed.
  std::int64_t remaining_quantity(std::size_t product) const;

  /// Structural equality ignoring application order of independent events.
  bool same_content(const GraphState& other) const;
  friend bool operator==(const GraphState& a, const GraphState& b) { return a.same_content(b); }

  // Overlay edits for what-if evaluation; they never touch the event log or
  // version and are only meant for private copies.
  void overlay_direct_emissions(std::size_t process, EmissionQty value);
  void overlay_allocation_weights(std::size_t process, std::optional<AllocationWeights> weights);
  void overlay_transfer_quantity(std::size_t transfer, std::int64_t micro);
  void overlay_sever_transfer(std::size_t transfer);

 private:
  friend void apply_event_in_place(GraphState&, const LedgerEvent&);
  friend void apply_event_unchecked(GraphState&, const LedgerEvent&);

  void apply_unchecked(const LedgerEvent& ev);
  void insert_outflow(std::size_t product, Outflow flow);

  std::vector<OrgRecord> orgs_;
  std::vector<ProcessNode> processes_;
  std::vector<ProductNode> products_;
  std::vector<TransferEdge> transfers_;
  std::vector<OffsetRecord> offsets_;
  std::vector<LedgerEvent> events_;
  std::vector<NodeRef> creation_order_;

  std::unordered_map<std::string, std::size_t> org_ix_;
  std::unordered_map<std::string, std::size_t> process_ix_;
  std::unordered_map<std::string, std::size_t> product_ix_;
  std::unordered_map<std::string, std::size_t> transfer_ix_;
  std::unordered_map<std::string, std::size_t> event_ix_;
};

/// Lists every reason `event` cannot be applied to `state`; empty means applicable.
ValidationReport validate_event(const GraphState& state, const LedgerEvent& event);

/// Returns a new snapshot with `event` applied. Throws RejectedEvent.
GraphState apply_event(const GraphState& state, const LedgerEvent& event);

/// Single-writer variant used by ingestion and the service. Throws RejectedEvent
/// and leaves `state` untouched on rejection.
void apply_event_in_place(GraphState& state, const LedgerEvent& event);

/// Applies without validation (references must still resolve; throws
/// Error(UnknownNode) otherwise). For trusted replays and for building
/// deliberately inconsistent states in tests.
void apply_event_unchecked(GraphState& state, const LedgerEvent& event);

/// Timestamp-order violations over every consumption, transfer and revision edge.
std::vector<Violation> causality_check(const GraphState& state);

}  // namespace elkg
