#include "elkg/attribution.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <tuple>

namespace elkg {

// ---------------------------------------------------------------------------
// Public arithmetic wrappers
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, EmissionQty>> allocate_pool(
    EmissionQty pool, const std::vector<std::pair<std::string, std::int64_t>>& weights) {
  if (weights.empty()) throw Error(Errc::EmptyWeights, "allocation needs at least one weight");
  std::vector<u128> w;
  std::vector<std::string_view> ids;
  for (const auto& [id, weight] : weights) {
    if (weight <= 0) throw Error(Errc::EmptyWeights, "weight for '" + id + "' is not positive");
    w.push_back(static_cast<u128>(weight));
    ids.push_back(id);
  }
  const auto shares =
      allocate_largest_remainder(static_cast<u128>(pool.micro_tonnes()), w, ids);
  std::vector<std::pair<std::string, EmissionQty>> out;
  out.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.emplace_back(weights[i].first, EmissionQty::from_micro(static_cast<std::int64_t>(shares[i])));
  }
  return out;
}

TransferShare transfer_share(EmissionQty source_remaining_liability, Quantity source_remaining_qty,
                             Quantity transfer_qty) {
  if (source_remaining_qty.unit != transfer_qty.unit) {
    throw Error(Errc::UnitMismatch, "transfer and source quantities use different units");
  }
  if (transfer_qty.micro < 0 || source_remaining_qty.micro < 0) {
    throw Error(Errc::BadNumber, "negative quantity");
  }
  const auto split = elkg::transfer_share(static_cast<u128>(source_remaining_liability.micro_tonnes()),
                                          static_cast<u128>(source_remaining_qty.micro),
                                          static_cast<u128>(transfer_qty.micro));
  return {EmissionQty::from_micro(static_cast<std::int64_t>(split.moved)),
          EmissionQty::from_micro(static_cast<std::int64_t>(split.residual))};
}

// ---------------------------------------------------------------------------
// Result lookups
// ---------------------------------------------------------------------------

namespace {

template <typename T>
const T* find_in(const std::unordered_map<std::string, std::size_t>& ix, const std::vector<T>& v,
                 const std::string& id) {
  const auto it = ix.find(id);
  return it == ix.end() || it->second >= v.size() ? nullptr : &v[it->second];
}

}  // namespace

const ProductLiability* AttributionResult::find_product(const std::string& id) const {
  return index ? find_in(index->products, products, id) : nullptr;
}
const ProcessLiability* AttributionResult::find_process(const std::string& id) const {
  return index ? find_in(index->processes, processes, id) : nullptr;
}
const OrgBalance* AttributionResult::find_org(const std::string& id) const {
  return index ? find_in(index->orgs, orgs, id) : nullptr;
}

bool AttributionResult::same_values(const AttributionResult& o) const {
  return basis_version == o.basis_version && basis_head == o.basis_head &&
         products == o.products && processes == o.processes && orgs == o.orgs &&
         product_fine == o.product_fine && held_fine == o.held_fine && pool_fine == o.pool_fine &&
         input_fine == o.input_fine;
}

// ---------------------------------------------------------------------------
// Topological order
// ---------------------------------------------------------------------------

std::vector<std::string> topological_order(const GraphState& state) {
  const auto& procs = state.processes();
  const auto& prods = state.products();
  const std::size_t np = procs.size();
  const std::size_t n = np + prods.size();  // processes first, then products
  auto prod_id = [np](std::size_t i) { return np + i; };

  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  auto edge = [&](std::size_t from, std::size_t to) {
    succ[from].push_back(to);
    ++indegree[to];
  };
  for (std::size_t p = 0; p < np; ++p) {
    for (const auto& in : procs[p].inputs) {
      const auto ix = state.product_index(in.node_id);
      if (ix) edge(prod_id(*ix), p);
    }
    for (auto out : procs[p].outputs) edge(p, prod_id(out));
  }
  for (const auto& t : state.transfers()) edge(prod_id(t.source), prod_id(t.target));

  using Entry = std::tuple<Timestamp, std::string_view, std::size_t>;
  auto entry = [&](std::size_t v) -> Entry {
    if (v < np) return {procs[v].declared.timestamp, procs[v].process_id, v};
    const auto& pr = prods[v - np];
    return {pr.created.timestamp, pr.node_id, v};
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v) {
    if (indegree[v] == 0) ready.push(entry(v));
  }
  std::vector<std::string> order;
  order.reserve(n);
  while (!ready.empty()) {
    const auto [ts, id, v] = ready.top();
    ready.pop();
    order.emplace_back(id);
    for (auto s : succ[v]) {
      if (--indegree[s] == 0) ready.push(entry(s));
    }
  }
  if (order.size() != n) throw Error(Errc::CycleDetected, "supply-chain graph contains a cycle");
  return order;
}

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

namespace {

struct Layout {
  std::vector<std::size_t> input_offset;  // per process, into input_fine
  std::size_t input_count = 0;
  std::vector<std::size_t> process_pos;  // position in creation order
  std::vector<std::size_t> product_pos;
  std::vector<std::size_t> product_owner;  // org index

  explicit Layout(const GraphState& s) {
    const auto& procs = s.processes();
    input_offset.resize(procs.size());
    for (std::size_t p = 0; p < procs.size(); ++p) {
      input_offset[p] = input_count;
      input_count += procs[p].inputs.size();
    }
    process_pos.resize(procs.size());
    product_pos.resize(s.products().size());
    const auto& order = s.creation_order();
    for (std::size_t i = 0; i < order.size(); ++i) {
      (order[i].kind == NodeRef::Kind::Process ? process_pos : product_pos)[order[i].index] = i;
    }
    product_owner.resize(s.products().size());
    for (std::size_t n = 0; n < s.products().size(); ++n) {
      const auto ix = s.org_index(s.products()[n].owner);
      if (!ix) throw Error(Errc::UnknownNode, "product owner '" + s.products()[n].owner + "' unknown");
      product_owner[n] = *ix;
    }
  }
};

u128 to_fine(EmissionQty q) { return static_cast<u128>(q.micro_tonnes()) * kFineScale; }

EmissionQty from_fine(u128 fine) {
  return EmissionQty::from_micro(static_cast<std::int64_t>(div_round_half_even(fine, kFineScale)));
}

class Propagator {
 public:
  Propagator(const GraphState& s, AttributionResult& r) : s_(s), r_(r), layout_(s) {
    dirty_.assign(s.creation_order().size(), 0);
  }

  void seed_all() {
    for (std::size_t i = 0; i < dirty_.size(); ++i) mark_pos(i);
  }
  void seed(const NodeRef& ref) {
    mark_pos(ref.kind == NodeRef::Kind::Process ? layout_.process_pos.at(ref.index)
                                                : layout_.product_pos.at(ref.index));
  }

  // Evaluates every dirty node in creation order; evaluation may dirty later nodes.
  void run() {
    const auto& order = s_.creation_order();
    while (!queue_.empty()) {
      const std::size_t pos = queue_.top();
      queue_.pop();
      dirty_[pos] = 0;
      ++r_.evaluated_nodes;
      const NodeRef ref = order[pos];
      if (ref.kind == NodeRef::Kind::Process) {
        eval_process(ref.index);
      } else {
        eval_product(ref.index);
      }
    }
  }

  const Layout& layout() const { return layout_; }

 private:
  void mark_pos(std::size_t pos) {
    if (!dirty_[pos]) {
      dirty_[pos] = 1;
      queue_.push(pos);
    }
  }

  void eval_process(std::size_t p) {
    const auto& proc = s_.processes()[p];
    u128 pool = to_fine(proc.direct_emissions);
    const std::size_t off = layout_.input_offset[p];
    for (std::size_t i = 0; i < proc.inputs.size(); ++i) pool += r_.input_fine[off + i];
    r_.pool_fine[p] = pool;

    weights_.clear();
    ids_.clear();
    for (auto out : proc.outputs) {
      const auto& node = s_.products()[out];
      weights_.push_back(proc.allocation_weights
                             ? static_cast<u128>(proc.allocation_weights->at(node.node_id))
                             : static_cast<u128>(node.quantity.micro));
      ids_.push_back(node.node_id);
    }
    const auto shares = allocate_largest_remainder(pool, weights_, ids_);
    for (std::size_t k = 0; k < proc.outputs.size(); ++k) {
      set_product(proc.outputs[k], shares[k]);
    }
  }

  void eval_product(std::size_t n) {
    const auto& node = s_.products()[n];
    u128 liability = r_.product_fine[n];
    u128 remaining_qty = static_cast<u128>(node.quantity.micro);
    for (const auto& flow : node.outflows) {
      if (flow.kind == OutflowKind::Transfer) {
        const auto& t = s_.transfers()[flow.target];
        if (t.severed) {
          set_product(t.target, 0);
          continue;
        }
        const auto split = transfer_share(liability, remaining_qty, static_cast<u128>(flow.quantity));
        liability = split.residual;
        remaining_qty -= static_cast<u128>(flow.quantity);
        set_product(t.target, split.moved);
      } else {
        const auto split = transfer_share(liability, remaining_qty, static_cast<u128>(flow.quantity));
        liability = split.residual;
        remaining_qty -= static_cast<u128>(flow.quantity);
        auto& slot = r_.input_fine[layout_.input_offset[flow.target] + flow.slot];
        if (slot != split.moved) {
          slot = split.moved;
          mark_pos(layout_.process_pos[flow.target]);
        }
      }
    }
    r_.held_fine[n] = liability;
  }

  void set_product(std::size_t n, u128 value) {
    if (r_.product_fine[n] != value) {
      r_.product_fine[n] = value;
      mark_pos(layout_.product_pos[n]);
    }
  }

  const GraphState& s_;
  AttributionResult& r_;
  Layout layout_;
  std::vector<char> dirty_;
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> queue_;
  std::vector<u128> weights_;
  std::vector<std::string_view> ids_;
};

std::shared_ptr<const AttributionResult::Index> build_index(const GraphState& s) {
  auto ix = std::make_shared<AttributionResult::Index>();
  ix->products.reserve(s.products().size());
  for (std::size_t i = 0; i < s.products().size(); ++i) ix->products.emplace(s.products()[i].node_id, i);
  for (std::size_t i = 0; i < s.processes().size(); ++i) {
    ix->processes.emplace(s.processes()[i].process_id, i);
  }
  for (std::size_t i = 0; i < s.orgs().size(); ++i) ix->orgs.emplace(s.orgs()[i].id(), i);
  return ix;
}

// Rounds fine values to published micro-tonne figures and aggregates orgs.
void publish(const GraphState& s, const Layout& layout, AttributionResult& r) {
  const auto& prods = s.products();
  const auto& procs = s.processes();
  r.products.resize(prods.size());
  for (std::size_t n = 0; n < prods.size(); ++n) {
    auto& out = r.products[n];
    out.node_id = prods[n].node_id;
    out.total = from_fine(r.product_fine[n]);
    const auto qty = prods[n].quantity.micro;
    if (qty > 0) {
      out.per_unit = EmissionQty::from_micro(static_cast<std::int64_t>(mul_div_round_half_even(
          static_cast<u128>(out.total.micro_tonnes()), static_cast<u128>(kMicro), static_cast<u128>(qty))));
    } else {
      out.per_unit.reset();
    }
  }
  r.processes.resize(procs.size());
  for (std::size_t p = 0; p < procs.size(); ++p) {
    r.processes[p] = {procs[p].process_id, from_fine(r.pool_fine[p])};
  }

  const auto& orgs = s.orgs();
  std::vector<u128> held(orgs.size(), 0);
  std::vector<std::int64_t> gross(orgs.size(), 0);
  std::vector<std::int64_t> offsets(orgs.size(), 0);
  u128 held_total = 0;
  for (std::size_t n = 0; n < prods.size(); ++n) {
    const std::size_t o = layout.product_owner[n];
    held[o] += r.held_fine[n];
    held_total += r.held_fine[n];
    if (prods[n].origin == ProductNode::Origin::ProducedBy) gross[o] += r.products[n].total.micro_tonnes();
  }
  for (const auto& off : s.offsets()) offsets[*s.org_index(off.org_id)] += off.delta.micro_tonnes();

  // Held inventory is apportioned to whole micro-tonnes by largest remainder so
  // the org balances add up to the injected total exactly.
  std::vector<u128> held_micro(orgs.size(), 0);
  if (held_total > 0) {
    std::vector<std::string_view> ids;
    for (const auto& o : orgs) ids.push_back(o.id());
    held_micro = allocate_largest_remainder(held_total / kFineScale, held, ids);
  }
  r.orgs.resize(orgs.size());
  for (std::size_t o = 0; o < orgs.size(); ++o) {
    auto& b = r.orgs[o];
    b.org_id = orgs[o].id();
    b.gross_produced = EmissionQty::from_micro(gross[o]);
    b.held = EmissionQty::from_micro(static_cast<std::int64_t>(held_micro[o]));
    b.offsets_micro = offsets[o];
    b.net_balance_micro = b.held.micro_tonnes() + offsets[o];
  }
  r.basis_version = s.version();
  r.basis_head = s.events().empty() ? std::string() : s.events().back().event_id;
}

void size_arrays(const GraphState& s, const Layout& layout, AttributionResult& r) {
  r.product_fine.resize(s.products().size(), 0);
  r.held_fine.resize(s.products().size(), 0);
  r.pool_fine.resize(s.processes().size(), 0);
  r.input_fine.resize(layout.input_count, 0);
}

}  // namespace

AttributionResult compute_full(const GraphState& state) {
  AttributionResult r;
  Propagator prop(state, r);
  size_arrays(state, prop.layout(), r);
  prop.seed_all();
  prop.run();
  publish(state, prop.layout(), r);
  r.index = build_index(state);
  return r;
}

AttributionResult recompute_from(const GraphState& state, const AttributionResult& base,
                                 std::span<const NodeRef> seeds) {
  AttributionResult r = base;
  r.evaluated_nodes = 0;
  Propagator prop(state, r);
  const bool grew = base.product_fine.size() != state.products().size() ||
                    base.pool_fine.size() != state.processes().size() ||
                    base.orgs.size() != state.orgs().size();
  size_arrays(state, prop.layout(), r);

  const auto& procs = state.processes();
  const auto& prods = state.products();
  auto seed_process = [&](std::size_t p) {
    prop.seed({NodeRef::Kind::Process, p});
    for (const auto& in : procs[p].inputs) {
      if (auto ix = state.product_index(in.node_id)) prop.seed({NodeRef::Kind::Product, *ix});
    }
  };
  auto seed_product = [&](std::size_t n) {
    prop.seed({NodeRef::Kind::Product, n});
    if (prods[n].origin == ProductNode::Origin::ProducedBy) {
      prop.seed({NodeRef::Kind::Process, prods[n].origin_index});
    } else {
      prop.seed({NodeRef::Kind::Product, state.transfers()[prods[n].origin_index].source});
    }
  };
  for (std::size_t p = base.pool_fine.size(); p < procs.size(); ++p) seed_process(p);
  for (std::size_t n = base.product_fine.size(); n < prods.size(); ++n) seed_product(n);
  for (const auto& ref : seeds) {
    if (ref.kind == NodeRef::Kind::Process) {
      seed_process(ref.index);
    } else {
      seed_product(ref.index);
    }
  }
  prop.run();
  publish(state, prop.layout(), r);
  if (grew || !r.index) r.index = build_index(state);
  return r;
}

namespace {

void seeds_for_event(const GraphState& state, const LedgerEvent& ev, std::vector<NodeRef>& out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DeclareProcess> || std::is_same_v<T, EmissionMeasurement>) {
          if (auto ix = state.process_index(p.process_id)) out.push_back({NodeRef::Kind::Process, *ix});
        } else if constexpr (std::is_same_v<T, DeclareTransfer>) {
          if (auto ix = state.product_index(p.node_id)) out.push_back({NodeRef::Kind::Product, *ix});
        }
      },
      ev.payload);
}

}  // namespace

AttributionResult compute_incremental(const GraphState& state, const AttributionResult& base,
                                      const std::set<std::string>& changed) {
  const auto& events = state.events();
  if (base.basis_version > state.version() ||
      (base.basis_version > 0 && events[base.basis_version - 1].event_id != base.basis_head) ||
      base.product_fine.size() > state.products().size() ||
      base.pool_fine.size() > state.processes().size()) {
    throw Error(Errc::StaleBase, "base attribution (version " + std::to_string(base.basis_version) +
                                     ") is not an ancestor of state version " +
                                     std::to_string(state.version()));
  }
  std::vector<NodeRef> seeds;
  for (const auto& id : changed) {
    const auto ix = state.event_index(id);
    if (!ix) throw Error(Errc::UnknownEvent, "event '" + id + "' is not in the ledger");
    seeds_for_event(state, events[*ix], seeds);
  }
  for (std::size_t i = base.basis_version; i < events.size(); ++i) {
    seeds_for_event(state, events[i], seeds);
  }
  return recompute_from(state, base, seeds);
}

// ---------------------------------------------------------------------------
// Breakdown
// ---------------------------------------------------------------------------

ContributionBreakdown breakdown(const GraphState& state, const AttributionResult& result,
                                const std::string& node_id) {
  const auto target = state.product_index(node_id);
  if (!target || *target >= result.products.size()) {
    throw Error(Errc::UnknownNode, "unknown product node '" + node_id + "'");
  }
  const auto& procs = state.processes();
  const auto& prods = state.products();
  const Layout layout(state);

  // Ancestors of the target (processes and products).
  std::vector<char> proc_in(procs.size(), 0), prod_in(prods.size(), 0);
  std::vector<NodeRef> stack{{NodeRef::Kind::Product, *target}};
  prod_in[*target] = 1;
  while (!stack.empty()) {
    const NodeRef ref = stack.back();
    stack.pop_back();
    if (ref.kind == NodeRef::Kind::Product) {
      const auto& n = prods[ref.index];
      if (n.origin == ProductNode::Origin::ProducedBy) {
        if (!proc_in[n.origin_index]) {
          proc_in[n.origin_index] = 1;
          stack.push_back({NodeRef::Kind::Process, n.origin_index});
        }
      } else {
        const auto& t = state.transfers()[n.origin_index];
        if (!t.severed && !prod_in[t.source]) {
          prod_in[t.source] = 1;
          stack.push_back({NodeRef::Kind::Product, t.source});
        }
      }
    } else {
      for (const auto& in : procs[ref.index].inputs) {
        const auto ix = *state.product_index(in.node_id);
        if (!prod_in[ix]) {
          prod_in[ix] = 1;
          stack.push_back({NodeRef::Kind::Product, ix});
        }
      }
    }
  }

  // Propagate per-source tags through the same split arithmetic.
  using Tags = std::map<std::size_t, u128>;
  std::map<std::size_t, Tags> product_tags;
  std::map<std::pair<std::size_t, std::size_t>, Tags> input_tags;
  std::vector<u128> weights;
  std::vector<std::string_view> ids;

  for (const NodeRef& ref : state.creation_order()) {
    if (ref.kind == NodeRef::Kind::Process) {
      if (!proc_in[ref.index]) continue;
      const auto& proc = procs[ref.index];
      Tags pool;
      if (proc.direct_emissions.micro_tonnes() > 0) pool[ref.index] = to_fine(proc.direct_emissions);
      for (std::size_t i = 0; i < proc.inputs.size(); ++i) {
        for (const auto& [src, amt] : input_tags[{ref.index, i}]) pool[src] += amt;
      }
      weights.clear();
      ids.clear();
      for (auto out : proc.outputs) {
        weights.push_back(proc.allocation_weights
                              ? static_cast<u128>(proc.allocation_weights->at(prods[out].node_id))
                              : static_cast<u128>(prods[out].quantity.micro));
        ids.push_back(prods[out].node_id);
      }
      for (const auto& [src, amt] : pool) {
        const auto shares = allocate_largest_remainder(amt, weights, ids);
        for (std::size_t k = 0; k < proc.outputs.size(); ++k) {
          if (prod_in[proc.outputs[k]] && shares[k] > 0) product_tags[proc.outputs[k]][src] = shares[k];
        }
      }
    } else {
      if (!prod_in[ref.index]) continue;
      const auto& node = prods[ref.index];
      Tags remaining = product_tags[ref.index];
      u128 remaining_qty = static_cast<u128>(node.quantity.micro);
      for (const auto& flow : node.outflows) {
        if (flow.kind == OutflowKind::Transfer && state.transfers()[flow.target].severed) continue;
        const u128 q = static_cast<u128>(flow.quantity);
        Tags moved;
        for (auto& [src, amt] : remaining) {
          const auto split = transfer_share(amt, remaining_qty, q);
          amt = split.residual;
          if (split.moved > 0) moved[src] = split.moved;
        }
        remaining_qty -= q;
        if (flow.kind == OutflowKind::Transfer) {
          const auto tgt = state.transfers()[flow.target].target;
          if (prod_in[tgt]) product_tags[tgt] = std::move(moved);
        } else if (proc_in[flow.target]) {
          input_tags[{flow.target, flow.slot}] = std::move(moved);
        }
      }
    }
  }

  ContributionBreakdown out;
  out.node_id = node_id;
  out.total = result.products[*target].total;
  const Tags& tags = product_tags[*target];
  if (out.total.micro_tonnes() == 0 || tags.empty()) return out;

  weights.clear();
  ids.clear();
  std::vector<std::size_t> sources;
  for (const auto& [src, amt] : tags) {
    sources.push_back(src);
    weights.push_back(amt);
    ids.push_back(procs[src].process_id);
  }
  const auto shares =
      allocate_largest_remainder(static_cast<u128>(out.total.micro_tonnes()), weights, ids);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (shares[i] == 0) continue;
    out.contributions.push_back(
        {procs[sources[i]].process_id, EmissionQty::from_micro(static_cast<std::int64_t>(shares[i]))});
  }
  std::sort(out.contributions.begin(), out.contributions.end(),
            [](const Contribution& a, const Contribution& b) {
              if (a.amount != b.amount) return a.amount > b.amount;
              return a.process_id < b.process_id;
            });
  return out;
}

}  // namespace elkg
