#include "elkg/ledger.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace elkg {

std::string_view event_kind_name(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::DeclareOrg: return "DeclareOrg";
    case EventKind::DeclareProcess: return "DeclareProcess";
    case EventKind::DeclareTransfer: return "DeclareTransfer";
    case EventKind::EmissionMeasurement: return "EmissionMeasurement";
    case EventKind::OffsetAdjustment: return "OffsetAdjustment";
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view name) noexcept {
  for (auto k : {EventKind::DeclareOrg, EventKind::DeclareProcess, EventKind::DeclareTransfer,
                 EventKind::EmissionMeasurement, EventKind::OffsetAdjustment}) {
    if (event_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view violation_kind_name(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::DuplicateId: return "DuplicateId";
    case ViolationKind::UnknownReference: return "UnknownReference";
    case ViolationKind::QuantityOverdraw: return "QuantityOverdraw";
    case ViolationKind::CausalityViolation: return "CausalityViolation";
    case ViolationKind::UnitMismatch: return "UnitMismatch";
    case ViolationKind::InvalidAllocation: return "InvalidAllocation";
    case ViolationKind::EmptyProcess: return "EmptyProcess";
    case ViolationKind::OwnershipMismatch: return "OwnershipMismatch";
  }
  return "?";
}

namespace {

std::string describe(const ValidationReport& report) {
  std::string out;
  for (const auto& v : report) {
    if (!out.empty()) out += "; ";
    out += std::string(violation_kind_name(v.kind)) + ": " + v.message;
  }
  return out;
}

std::optional<std::size_t> lookup(const std::unordered_map<std::string, std::size_t>& ix,
                                  const std::string& id) {
  const auto it = ix.find(id);
  if (it == ix.end()) return std::nullopt;
  return it->second;
}

std::string key_text(const EventKey& k) {
  return format_timestamp(k.timestamp) + "/" + k.event_id;
}

}  // namespace

RejectedEvent::RejectedEvent(std::string event_id, ValidationReport report)
    : Error(Errc::RejectedEvent, "event '" + event_id + "' rejected: " + describe(report)),
      event_id_(std::move(event_id)),
      report_(std::move(report)) {}

std::optional<std::size_t> GraphState::org_index(const std::string& id) const {
  return lookup(org_ix_, id);
}
std::optional<std::size_t> GraphState::process_index(const std::string& id) const {
  return lookup(process_ix_, id);
}
std::optional<std::size_t> GraphState::product_index(const std::string& id) const {
  return lookup(product_ix_, id);
}
std::optional<std::size_t> GraphState::transfer_index(const std::string& id) const {
  return lookup(transfer_ix_, id);
}
std::optional<std::size_t> GraphState::event_index(const std::string& id) const {
  return lookup(event_ix_, id);
}

std::int64_t GraphState::remaining_quantity(std::size_t product) const {
  const auto& p = products_.at(product);
  return p.quantity.micro - p.outflow_total;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

class Validator {
 public:
  Validator(const GraphState& state, const LedgerEvent& ev) : s_(state), ev_(ev), key_(key_of(ev)) {}

  ValidationReport run() {
    if (ev_.event_id.empty()) add(ViolationKind::UnknownReference, "event_id is empty");
    if (s_.event_index(ev_.event_id)) {
      add(ViolationKind::DuplicateId, "event_id '" + ev_.event_id + "' already applied");
    }
    std::visit([this](const auto& p) { check(p); }, ev_.payload);
    return std::move(out_);
  }

 private:
  void add(ViolationKind kind, std::string msg) { out_.push_back({kind, std::move(msg)}); }

  bool node_id_taken(const std::string& id) const {
    return s_.process_index(id).has_value() || s_.product_index(id).has_value();
  }

  std::optional<std::size_t> require_org(const std::string& id, std::string_view role) {
    auto ix = s_.org_index(id);
    if (!ix) {
      add(ViolationKind::UnknownReference, std::string(role) + " org '" + id + "' is not declared");
      return std::nullopt;
    }
    if (!(s_.orgs()[*ix].declared < key_)) {
      add(ViolationKind::CausalityViolation,
          std::string(role) + " org '" + id + "' is declared after " + key_text(key_));
    }
    return ix;
  }

  void check(const DeclareOrg& p) {
    if (p.org_id.empty()) add(ViolationKind::UnknownReference, "org_id is empty");
    if (s_.org_index(p.org_id)) add(ViolationKind::DuplicateId, "org '" + p.org_id + "' already declared");
  }

  void check(const DeclareProcess& p) {
    if (p.process_id.empty()) add(ViolationKind::UnknownReference, "process_id is empty");
    std::set<std::string> fresh;
    auto claim = [&](const std::string& id) {
      if (node_id_taken(id) || !fresh.insert(id).second) {
        add(ViolationKind::DuplicateId, "node id '" + id + "' already in use");
      }
    };
    claim(p.process_id);
    require_org(p.owner, "owner");

    if (p.outputs.empty()) {
      add(ViolationKind::EmptyProcess, "process '" + p.process_id + "' declares no outputs");
    }
    for (const auto& out : p.outputs) {
      if (out.node_id.empty()) add(ViolationKind::UnknownReference, "output node id is empty");
      claim(out.node_id);
    }

    std::map<std::size_t, std::int64_t> drawn;
    for (const auto& in : p.inputs) {
      const auto ix = s_.product_index(in.node_id);
      if (!ix) {
        add(ViolationKind::UnknownReference, "input node '" + in.node_id + "' does not exist");
        continue;
      }
      const auto& node = s_.products()[*ix];
      if (node.quantity.unit != in.quantity.unit) {
        add(ViolationKind::UnitMismatch, "input '" + in.node_id + "' is measured in " +
                                             std::string(unit_code(node.quantity.unit)));
      }
      if (node.owner != p.owner) {
        add(ViolationKind::OwnershipMismatch,
            "input '" + in.node_id + "' is held by '" + node.owner + "', not '" + p.owner + "'");
      }
      if (!(node.created < key_)) {
        add(ViolationKind::CausalityViolation, "input '" + in.node_id + "' created at " +
                                                   key_text(node.created) + " is not before " +
                                                   key_text(key_));
      }
      drawn[*ix] += in.quantity.micro;
    }
    for (const auto& [ix, qty] : drawn) {
      const auto remaining = s_.remaining_quantity(ix);
      if (qty > remaining) {
        add(ViolationKind::QuantityOverdraw,
            "consumes " + format_decimal_micro(qty) + " of '" + s_.products()[ix].node_id +
                "' with " + format_decimal_micro(remaining) + " remaining");
      }
    }

    if (p.allocation_weights) {
      std::set<std::string> outs;
      for (const auto& o : p.outputs) outs.insert(o.node_id);
      std::set<std::string> keys;
      for (const auto& [id, w] : *p.allocation_weights) {
        keys.insert(id);
        if (w <= 0) add(ViolationKind::InvalidAllocation, "weight for '" + id + "' is not positive");
      }
      if (keys != outs) {
        add(ViolationKind::InvalidAllocation, "allocation weights must name every output exactly once");
      }
    } else if (!p.outputs.empty()) {
      const Unit unit = p.outputs.front().quantity.unit;
      for (const auto& o : p.outputs) {
        if (o.quantity.unit != unit) {
          add(ViolationKind::InvalidAllocation,
              "outputs in different units need explicit allocation weights");
          break;
        }
      }
      for (const auto& o : p.outputs) {
        if (o.quantity.micro <= 0) {
          add(ViolationKind::InvalidAllocation,
              "output '" + o.node_id + "' has zero quantity and no explicit weight");
        }
      }
    }
  }

  void check(const DeclareTransfer& p) {
    if (p.transfer_id.empty()) add(ViolationKind::UnknownReference, "transfer_id is empty");
    if (s_.transfer_index(p.transfer_id)) {
      add(ViolationKind::DuplicateId, "transfer '" + p.transfer_id + "' already declared");
    }
    if (p.node_id.empty()) add(ViolationKind::UnknownReference, "received node id is empty");
    if (node_id_taken(p.node_id)) {
      add(ViolationKind::DuplicateId, "node id '" + p.node_id + "' already in use");
    }
    require_org(p.buyer, "buyer");
    const auto ix = s_.product_index(p.source_node);
    if (!ix) {
      add(ViolationKind::UnknownReference, "source node '" + p.source_node + "' does not exist");
      return;
    }
    const auto& node = s_.products()[*ix];
    if (node.quantity.unit != p.quantity.unit) {
      add(ViolationKind::UnitMismatch, "source '" + p.source_node + "' is measured in " +
                                           std::string(unit_code(node.quantity.unit)));
    }
    if (!(node.created < key_)) {
      add(ViolationKind::CausalityViolation, "source '" + p.source_node + "' created at " +
                                                 key_text(node.created) + " is not before " +
                                                 key_text(key_));
    }
    const auto remaining = s_.remaining_quantity(*ix);
    if (p.quantity.micro > remaining) {
      add(ViolationKind::QuantityOverdraw,
          "transfers " + format_decimal_micro(p.quantity.micro) + " of '" + p.source_node +
              "' with " + format_decimal_micro(remaining) + " remaining");
    }
  }

  void check(const EmissionMeasurement& p) {
    const auto ix = s_.process_index(p.process_id);
    if (!ix) {
      add(ViolationKind::UnknownReference, "process '" + p.process_id + "' does not exist");
      return;
    }
    if (!(s_.processes()[*ix].declared < key_)) {
      add(ViolationKind::CausalityViolation,
          "measurement precedes declaration of '" + p.process_id + "'");
    }
  }

  void check(const OffsetAdjustment& p) { require_org(p.org_id, "offset"); }

  const GraphState& s_;
  const LedgerEvent& ev_;
  EventKey key_;
  ValidationReport out_;
};

}  // namespace

ValidationReport validate_event(const GraphState& state, const LedgerEvent& event) {
  return Validator(state, event).run();
}

GraphState apply_event(const GraphState& state, const LedgerEvent& event) {
  GraphState next = state;
  apply_event_in_place(next, event);
  return next;
}

void apply_event_in_place(GraphState& state, const LedgerEvent& event) {
  auto report = validate_event(state, event);
  if (!report.empty()) throw RejectedEvent(event.event_id, std::move(report));
  state.apply_unchecked(event);
}

void apply_event_unchecked(GraphState& state, const LedgerEvent& event) {
  state.apply_unchecked(event);
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

void GraphState::insert_outflow(std::size_t product, Outflow flow) {
  auto& node = products_[product];
  const auto pos = std::upper_bound(node.outflows.begin(), node.outflows.end(), flow.key,
                                    [](const EventKey& k, const Outflow& o) { return k < o.key; });
  node.outflow_total += flow.quantity;
  node.outflows.insert(pos, std::move(flow));
}

void GraphState::apply_unchecked(const LedgerEvent& ev) {
  const EventKey key = key_of(ev);
  auto need_product = [&](const std::string& id) {
    const auto ix = product_index(id);
    if (!ix) throw Error(Errc::UnknownNode, "unknown product node '" + id + "'");
    return *ix;
  };

  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DeclareOrg>) {
          org_ix_.emplace(p.org_id, orgs_.size());
          orgs_.push_back({p, key});
        } else if constexpr (std::is_same_v<T, DeclareProcess>) {
          std::vector<std::size_t> inputs;
          inputs.reserve(p.inputs.size());
          for (const auto& in : p.inputs) inputs.push_back(need_product(in.node_id));

          const std::size_t pix = processes_.size();
          ProcessNode node{p.process_id, p.owner, p.name, key, p.direct_emissions, key,
                           p.inputs,     {},      p.allocation_weights};
          process_ix_.emplace(p.process_id, pix);
          creation_order_.push_back({NodeRef::Kind::Process, pix});
          for (std::size_t i = 0; i < inputs.size(); ++i) {
            insert_outflow(inputs[i],
                           {OutflowKind::Consumption, pix, i, p.inputs[i].quantity.micro, key});
          }
          for (const auto& out : p.outputs) {
            const std::size_t nix = products_.size();
            ProductNode prod;
            prod.node_id = out.node_id;
            prod.owner = p.owner;
            prod.product_name = out.product_name;
            prod.quantity = out.quantity;
            prod.created = key;
            prod.origin = ProductNode::Origin::ProducedBy;
            prod.origin_index = pix;
            products_.push_back(std::move(prod));
            product_ix_.emplace(out.node_id, nix);
            creation_order_.push_back({NodeRef::Kind::Product, nix});
            node.outputs.push_back(nix);
          }
          processes_.push_back(std::move(node));
        } else if constexpr (std::is_same_v<T, DeclareTransfer>) {
          const std::size_t src = need_product(p.source_node);
          const std::size_t tix = transfers_.size();
          const std::size_t nix = products_.size();
          transfers_.push_back({p.transfer_id, src, p.buyer, p.quantity, key, nix, false});
          transfer_ix_.emplace(p.transfer_id, tix);

          ProductNode prod;
          prod.node_id = p.node_id;
          prod.owner = p.buyer;
          prod.product_name = products_[src].product_name;
          prod.quantity = p.quantity;
          prod.created = key;
          prod.origin = ProductNode::Origin::ReceivedVia;
          prod.origin_index = tix;
          products_.push_back(std::move(prod));
          product_ix_.emplace(p.node_id, nix);
          creation_order_.push_back({NodeRef::Kind::Product, nix});
          insert_outflow(src, {OutflowKind::Transfer, tix, 0, p.quantity.micro, key});
        } else if constexpr (std::is_same_v<T, EmissionMeasurement>) {
          const auto ix = process_index(p.process_id);
          if (!ix) throw Error(Errc::UnknownNode, "unknown process '" + p.process_id + "'");
          auto& proc = processes_[*ix];
          // Latest measurement in ledger time wins, whatever the arrival order.
          if (proc.revised < key) {
            proc.direct_emissions = p.direct_emissions;
            proc.revised = key;
          }
        } else if constexpr (std::is_same_v<T, OffsetAdjustment>) {
          if (!org_index(p.org_id)) throw Error(Errc::UnknownNode, "unknown org '" + p.org_id + "'");
          offsets_.push_back({p.org_id, p.delta, key});
        }
      },
      ev.payload);

  event_ix_.emplace(ev.event_id, events_.size());
  events_.push_back(ev);
}

// ---------------------------------------------------------------------------
// Overlays
// ---------------------------------------------------------------------------

void GraphState::overlay_direct_emissions(std::size_t process, EmissionQty value) {
  processes_.at(process).direct_emissions = value;
}

void GraphState::overlay_allocation_weights(std::size_t process,
                                            std::optional<AllocationWeights> weights) {
  processes_.at(process).allocation_weights = std::move(weights);
}

void GraphState::overlay_transfer_quantity(std::size_t transfer, std::int64_t micro) {
  auto& t = transfers_.at(transfer);
  auto& src = products_[t.source];
  for (auto& o : src.outflows) {
    if (o.kind == OutflowKind::Transfer && o.target == transfer) {
      if (!t.severed) src.outflow_total += micro - o.quantity;
      o.quantity = micro;
    }
  }
  t.quantity.micro = micro;
  products_[t.target].quantity.micro = micro;
}

void GraphState::overlay_sever_transfer(std::size_t transfer) {
  auto& t = transfers_.at(transfer);
  if (t.severed) return;
  t.severed = true;
  products_[t.source].outflow_total -= t.quantity.micro;
}

// ---------------------------------------------------------------------------
// Causality and equality
// ---------------------------------------------------------------------------

std::vector<Violation> causality_check(const GraphState& state) {
  std::vector<Violation> out;
  const auto& products = state.products();
  for (const auto& proc : state.processes()) {
    for (const auto& in : proc.inputs) {
      const auto ix = state.product_index(in.node_id);
      if (!ix) {
        out.push_back({ViolationKind::UnknownReference,
                       "process '" + proc.process_id + "' consumes missing '" + in.node_id + "'"});
        continue;
      }
      if (!(products[*ix].created < proc.declared)) {
        out.push_back({ViolationKind::CausalityViolation,
                       "process '" + proc.process_id + "' at " + key_text(proc.declared) +
                           " consumes '" + in.node_id + "' created at " +
                           key_text(products[*ix].created)});
      }
    }
    if (proc.revised < proc.declared) {
      out.push_back({ViolationKind::CausalityViolation,
                     "process '" + proc.process_id + "' revised before its declaration"});
    }
  }
  for (const auto& t : state.transfers()) {
    if (!(products[t.source].created < t.key)) {
      out.push_back({ViolationKind::CausalityViolation,
                     "transfer '" + t.transfer_id + "' at " + key_text(t.key) + " moves '" +
                         products[t.source].node_id + "' created at " +
                         key_text(products[t.source].created)});
    }
  }
  for (const auto& ev : state.events()) {
    if (const auto* m = std::get_if<EmissionMeasurement>(&ev.payload)) {
      const auto ix = state.process_index(m->process_id);
      if (ix && !(state.processes()[*ix].declared < key_of(ev))) {
        out.push_back({ViolationKind::CausalityViolation,
                       "measurement '" + ev.event_id + "' precedes process '" + m->process_id + "'"});
      }
    }
  }
  for (const auto& off : state.offsets()) {
    const auto ix = state.org_index(off.org_id);
    if (ix && !(state.orgs()[*ix].declared < off.key)) {
      out.push_back({ViolationKind::CausalityViolation,
                     "offset for '" + off.org_id + "' precedes the org declaration"});
    }
  }
  return out;
}

namespace {

// Order-independent rendering of the state: every index replaced by an id and
// every collection sorted by ledger key.
std::string canonical_dump(const GraphState& s) {
  std::ostringstream os;
  const auto& products = s.products();
  const auto& processes = s.processes();
  const auto& transfers = s.transfers();
  auto k = [](const EventKey& key) { return key.timestamp.time_since_epoch().count(); };

  os << "v" << s.version() << "\n";
  std::vector<std::string> lines;
  for (const auto& o : s.orgs()) {
    std::ostringstream l;
    l << "O " << o.decl.org_id << '|' << o.decl.name << '|' << o.decl.location << '|'
      << o.decl.sector << '|' << k(o.declared) << '|' << o.declared.event_id;
    for (const auto& [mk, mv] : o.decl.metadata) l << '|' << mk << '=' << mv;
    lines.push_back(l.str());
  }
  for (const auto& p : processes) {
    std::ostringstream l;
    l << "P " << p.process_id << '|' << p.owner << '|' << p.name << '|' << k(p.declared) << '|'
      << p.declared.event_id << '|' << p.direct_emissions.micro_tonnes() << '|' << k(p.revised)
      << '|' << p.revised.event_id;
    for (const auto& in : p.inputs) {
      l << "|in:" << in.node_id << ':' << in.quantity.micro << unit_code(in.quantity.unit);
    }
    for (auto o : p.outputs) l << "|out:" << products[o].node_id;
    if (p.allocation_weights) {
      for (const auto& [id, w] : *p.allocation_weights) l << "|w:" << id << ':' << w;
    }
    lines.push_back(l.str());
  }
  for (const auto& n : products) {
    std::ostringstream l;
    l << "N " << n.node_id << '|' << n.owner << '|' << n.product_name << '|' << n.quantity.micro
      << unit_code(n.quantity.unit) << '|' << k(n.created) << '|' << n.created.event_id << '|'
      << (n.origin == ProductNode::Origin::ProducedBy ? processes[n.origin_index].process_id
                                                      : transfers[n.origin_index].transfer_id)
      << '|' << n.outflow_total;
    for (const auto& o : n.outflows) {
      l << "|f:" << (o.kind == OutflowKind::Transfer ? transfers[o.target].transfer_id
                                                     : processes[o.target].process_id)
        << ':' << o.slot << ':' << o.quantity << ':' << k(o.key) << ':' << o.key.event_id;
    }
    lines.push_back(l.str());
  }
  for (const auto& t : transfers) {
    std::ostringstream l;
    l << "T " << t.transfer_id << '|' << products[t.source].node_id << '|' << t.buyer << '|'
      << t.quantity.micro << unit_code(t.quantity.unit) << '|' << k(t.key) << '|'
      << t.key.event_id << '|' << products[t.target].node_id << '|' << t.severed;
    lines.push_back(l.str());
  }
  for (const auto& o : s.offsets()) {
    std::ostringstream l;
    l << "F " << k(o.key) << '|' << o.key.event_id << '|' << o.org_id << '|'
      << o.delta.micro_tonnes();
    lines.push_back(l.str());
  }
  std::vector<const LedgerEvent*> evs;
  for (const auto& e : s.events()) evs.push_back(&e);
  std::sort(evs.begin(), evs.end(),
            [](const LedgerEvent* a, const LedgerEvent* b) { return key_of(*a) < key_of(*b); });
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) os << l << "\n";
  for (const auto* e : evs) os << "E " << e->event_id << "\n";
  return os.str();
}

}  // namespace

bool GraphState::same_content(const GraphState& other) const {
  if (version() != other.version()) return false;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto j = other.event_index(events_[i].event_id);
    if (!j || !(other.events_[*j] == events_[i])) return false;
  }
  return canonical_dump(*this) == canonical_dump(other);
}

}  // namespace elkg
