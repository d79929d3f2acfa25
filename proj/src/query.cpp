#include "elkg/query.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "elkg/ingest.hpp"

namespace elkg {

ZeroQuantityError::ZeroQuantityError(std::string node_id, EmissionQty total, Unit unit)
    : Error(Errc::ZeroQuantity, "product '" + node_id + "' has zero quantity; per-unit liability undefined"),
      total_(total),
      unit_(unit) {}

Footprint product_footprint(const GraphState& state, const AttributionResult& result,
                            const std::string& node_id) {
  const auto ix = state.product_index(node_id);
  const auto* lia = result.find_product(node_id);
  if (!ix || !lia) throw Error(Errc::UnknownNode, "unknown product node '" + node_id + "'");
  const auto& node = state.products()[*ix];
  if (!lia->per_unit) throw ZeroQuantityError(node_id, lia->total, node.quantity.unit);
  return {node_id, lia->total, *lia->per_unit, node.quantity.unit};
}

std::string_view dimension_name(Dimension d) noexcept {
  switch (d) {
    case Dimension::Org: return "org";
    case Dimension::Product: return "product";
    case Dimension::Process: return "process";
  }
  return "?";
}

std::optional<Dimension> parse_dimension(std::string_view s) noexcept {
  if (s == "org") return Dimension::Org;
  if (s == "product") return Dimension::Product;
  if (s == "process") return Dimension::Process;
  return std::nullopt;
}

std::vector<Hotspot> hotspots(const AttributionResult& result, std::size_t k, Dimension dim) {
  std::vector<Hotspot> all;
  switch (dim) {
    case Dimension::Org:
      for (const auto& o : result.orgs) all.push_back({o.org_id, o.gross_produced});
      break;
    case Dimension::Product:
      for (const auto& p : result.products) all.push_back({p.node_id, p.total});
      break;
    case Dimension::Process:
      for (const auto& p : result.processes) all.push_back({p.process_id, p.pool});
      break;
  }
  const auto n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const Hotspot& a, const Hotspot& b) {
                      if (a.liability != b.liability) return a.liability > b.liability;
                      return a.id < b.id;
                    });
  all.resize(n);
  return all;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

std::string_view override_kind_name(Override::Kind k) noexcept {
  switch (k) {
    case Override::Kind::ReviseEmissions: return "revise_emissions";
    case Override::Kind::ReviseWeights: return "revise_weights";
    case Override::Kind::ScaleTransfer: return "scale_transfer";
    case Override::Kind::RemoveTransfer: return "remove_transfer";
  }
  return "?";
}

std::optional<Override::Kind> parse_override_kind(std::string_view s) noexcept {
  for (auto k : {Override::Kind::ReviseEmissions, Override::Kind::ReviseWeights,
                 Override::Kind::ScaleTransfer, Override::Kind::RemoveTransfer}) {
    if (override_kind_name(k) == s) return k;
  }
  return std::nullopt;
}

namespace {

std::size_t need_process(const GraphState& s, const Override& o) {
  const auto ix = s.process_index(o.target);
  if (!ix) throw Error(Errc::UnknownOverrideTarget, "no process '" + o.target + "'");
  return *ix;
}

std::size_t need_transfer(const GraphState& s, const Override& o) {
  const auto ix = s.transfer_index(o.target);
  if (!ix) throw Error(Errc::UnknownOverrideTarget, "no transfer '" + o.target + "'");
  return *ix;
}

void check_weights(const GraphState& s, std::size_t p, const std::optional<AllocationWeights>& w) {
  const auto& proc = s.processes()[p];
  if (w) {
    if (w->size() != proc.outputs.size()) {
      throw Error(Errc::InvalidScenario, "weights for '" + proc.process_id + "' must name every output");
    }
    for (auto out : proc.outputs) {
      const auto it = w->find(s.products()[out].node_id);
      if (it == w->end() || it->second <= 0) {
        throw Error(Errc::InvalidScenario,
                    "output '" + s.products()[out].node_id + "' needs a positive weight");
      }
    }
    return;
  }
  const auto unit = s.products()[proc.outputs.front()].quantity.unit;
  for (auto out : proc.outputs) {
    const auto& q = s.products()[out].quantity;
    if (q.unit != unit || q.micro <= 0) {
      throw Error(Errc::InvalidScenario,
                  "process '" + proc.process_id + "' cannot fall back to quantity weights");
    }
  }
}

}  // namespace

Overlay build_overlay(const GraphState& state, const Scenario& scenario) {
  Overlay ov{state, {}};
  auto& s = ov.state;
  for (const auto& o : scenario.overrides) {
    switch (o.kind) {
      case Override::Kind::ReviseEmissions: {
        const auto p = need_process(s, o);
        s.overlay_direct_emissions(p, o.direct_emissions);
        ov.seeds.push_back({NodeRef::Kind::Process, p});
        break;
      }
      case Override::Kind::ReviseWeights: {
        const auto p = need_process(s, o);
        check_weights(s, p, o.weights);
        s.overlay_allocation_weights(p, o.weights);
        ov.seeds.push_back({NodeRef::Kind::Process, p});
        break;
      }
      case Override::Kind::ScaleTransfer: {
        const auto t = need_transfer(s, o);
        if (o.factor_micro < 0) throw Error(Errc::InvalidScenario, "negative scale factor");
        const auto& edge = s.transfers()[t];
        const auto q = static_cast<std::int64_t>(mul_div_round_half_even(
            static_cast<u128>(edge.quantity.micro), static_cast<u128>(o.factor_micro), static_cast<u128>(kMicro)));
        s.overlay_transfer_quantity(t, q);
        ov.seeds.push_back({NodeRef::Kind::Product, edge.source});
        ov.seeds.push_back({NodeRef::Kind::Product, edge.target});
        break;
      }
      case Override::Kind::RemoveTransfer: {
        const auto t = need_transfer(s, o);
        s.overlay_sever_transfer(t);
        ov.seeds.push_back({NodeRef::Kind::Product, s.transfers()[t].source});
        ov.seeds.push_back({NodeRef::Kind::Product, s.transfers()[t].target});
        break;
      }
    }
  }
  for (const auto& n : s.products()) {
    if (n.outflow_total > n.quantity.micro) {
      throw Error(Errc::InvalidScenario, "scenario overdraws product '" + n.node_id + "'");
    }
  }
  return ov;
}

DeltaReport scenario_evaluate(const GraphState& state, const AttributionResult& base,
                              const Scenario& scenario) {
  const auto& events = state.events();
  const bool head_ok = base.basis_version == 0 ? base.basis_head.empty()
                                               : base.basis_version <= events.size() &&
                                                     events[base.basis_version - 1].event_id == base.basis_head;
  if (base.basis_version != state.version() || !head_ok ||
      (scenario.base_version && *scenario.base_version != state.version())) {
    throw Error(Errc::StaleBase, "scenario base does not match graph version " +
                                     std::to_string(state.version()));
  }
  DeltaReport report;
  report.scenario_id = scenario.scenario_id;
  report.basis_version = state.version();
  if (scenario.overrides.empty()) return report;

  const Overlay ov = build_overlay(state, scenario);
  const AttributionResult alt = recompute_from(ov.state, base, ov.seeds);

  for (std::size_t i = 0; i < base.orgs.size(); ++i) {
    const auto b = base.orgs[i].net_balance_micro;
    const auto a = alt.orgs[i].net_balance_micro;
    if (a != b) report.orgs.push_back({base.orgs[i].org_id, b, a, a - b});
  }
  for (std::size_t i = 0; i < base.products.size(); ++i) {
    const auto b = base.products[i].total.micro_tonnes();
    const auto a = alt.products[i].total.micro_tonnes();
    if (a != b) report.products.push_back({base.products[i].node_id, b, a, a - b});
  }
  auto by_id = [](const DeltaLine& x, const DeltaLine& y) { return x.id < y.id; };
  std::sort(report.orgs.begin(), report.orgs.end(), by_id);
  std::sort(report.products.begin(), report.products.end(), by_id);
  return report;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

std::optional<ExportFormat> parse_export_format(std::string_view s) noexcept {
  if (s == "jsonl") return ExportFormat::Jsonl;
  if (s == "dot") return ExportFormat::Dot;
  if (s == "ntriples") return ExportFormat::NTriples;
  return std::nullopt;
}

namespace {

std::string dot_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + '"';
}

std::string iri_segment(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string nt_literal(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out + '"';
}

std::string nt_integer(std::int64_t v) {
  return "\"" + std::to_string(v) + "\"^^<http://www.w3.org/2001/XMLSchema#integer>";
}

std::string export_jsonl(const GraphState& state) {
  std::vector<const LedgerEvent*> evs;
  for (const auto& e : state.events()) evs.push_back(&e);
  std::sort(evs.begin(), evs.end(), [](const LedgerEvent* a, const LedgerEvent* b) { return key_of(*a) < key_of(*b); });
  std::string out;
  for (const auto* e : evs) out += serialize_event(*e) + '\n';
  return out;
}

template <typename T, typename F>
std::vector<const T*> sorted_by(const std::vector<T>& v, F id) {
  std::vector<const T*> out;
  for (const auto& x : v) out.push_back(&x);
  std::sort(out.begin(), out.end(), [&](const T* a, const T* b) { return id(*a) < id(*b); });
  return out;
}

std::string export_dot(const GraphState& s, const AttributionResult& r) {
  std::ostringstream os;
  os << "digraph elkg {\n  rankdir=LR;\n";
  for (const auto* o : sorted_by(s.orgs(), [](const OrgRecord& x) { return x.id(); })) {
    std::string label = o->id();
    if (const auto* b = r.find_org(o->id())) label += "\nnet " + format_fixed6(b->net_balance_micro) + " tCO2e";
    os << "  " << dot_quote("org:" + o->id()) << " [shape=box3d, label=" << dot_quote(label) << "];\n";
  }
  for (const auto* p : sorted_by(s.processes(), [](const ProcessNode& x) { return x.process_id; })) {
    std::string label = p->process_id + "\nowner " + p->owner;
    if (const auto* l = r.find_process(p->process_id)) {
      label += "\npool " + format_fixed6(l->pool.micro_tonnes()) + " tCO2e";
    }
    os << "  " << dot_quote("process:" + p->process_id) << " [shape=box, label=" << dot_quote(label) << "];\n";
  }
  for (const auto* n : sorted_by(s.products(), [](const ProductNode& x) { return x.node_id; })) {
    std::string label = n->node_id + "\nowner " + n->owner + "\n" + format_decimal_micro(n->quantity.micro) +
                        " " + std::string(unit_code(n->quantity.unit));
    if (const auto* l = r.find_product(n->node_id)) {
      label += "\n" + format_fixed6(l->total.micro_tonnes()) + " tCO2e";
    }
    os << "  " << dot_quote("product:" + n->node_id) << " [shape=ellipse, label=" << dot_quote(label)
       << "];\n";
  }

  std::vector<std::string> edges;
  for (const auto& p : s.processes()) {
    for (const auto& in : p.inputs) {
      edges.push_back("  " + dot_quote("product:" + in.node_id) + " -> " + dot_quote("process:" + p.process_id) +
                      " [label=\"consumed\"];\n");
    }
    for (auto out : p.outputs) {
      edges.push_back("  " + dot_quote("process:" + p.process_id) + " -> " +
                      dot_quote("product:" + s.products()[out].node_id) + " [label=\"produced\"];\n");
    }
  }
  for (const auto& t : s.transfers()) {
    edges.push_back("  " + dot_quote("product:" + s.products()[t.source].node_id) + " -> " +
                    dot_quote("product:" + s.products()[t.target].node_id) + " [label=" +
                    dot_quote("transfer " + t.transfer_id) + "];\n");
  }
  std::sort(edges.begin(), edges.end());
  for (const auto& e : edges) os << e;
  os << "}\n";
  return os.str();
}

std::string export_ntriples(const GraphState& s, const AttributionResult& r) {
  const std::string vocab(kVocab);
  const std::string base(kEntityBase);
  auto term = [&](std::string_view t) { return "<" + vocab + std::string(t) + ">"; };
  auto ent = [&](std::string_view kind, std::string_view id) {
    return "<" + base + std::string(kind) + "/" + iri_segment(id) + ">";
  };
  const std::string rdf_type = "<http://www.w3.org/1999/02/22-rdf-syntax-ns#type>";
  std::vector<std::string> lines;
  auto triple = [&](const std::string& sub, const std::string& pred, const std::string& obj) {
    lines.push_back(sub + " " + pred + " " + obj + " .\n");
  };

  for (const auto& o : s.orgs()) {
    const auto me = ent("org", o.id());
    triple(me, rdf_type, term("Organization"));
    triple(me, term("name"), nt_literal(o.decl.name));
    if (!o.decl.location.empty()) triple(me, term("location"), nt_literal(o.decl.location));
    if (!o.decl.sector.empty()) triple(me, term("sector"), nt_literal(o.decl.sector));
    if (const auto* b = r.find_org(o.id())) triple(me, term("netBalanceMicroTonnes"), nt_integer(b->net_balance_micro));
  }
  for (const auto& p : s.processes()) {
    const auto me = ent("process", p.process_id);
    triple(me, rdf_type, term("Process"));
    triple(me, term("name"), nt_literal(p.name));
    triple(me, term("ownedBy"), ent("org", p.owner));
    triple(me, term("directEmissionsMicroTonnes"), nt_integer(p.direct_emissions.micro_tonnes()));
    if (const auto* l = r.find_process(p.process_id)) {
      triple(me, term("eLiabilityMicroTonnes"), nt_integer(l->pool.micro_tonnes()));
    }
    for (const auto& in : p.inputs) triple(me, term("consumed"), ent("product", in.node_id));
  }
  for (const auto& n : s.products()) {
    const auto me = ent("product", n.node_id);
    triple(me, rdf_type, term("ProductBatch"));
    triple(me, term("name"), nt_literal(n.product_name));
    triple(me, term("ownedBy"), ent("org", n.owner));
    triple(me, term("quantityMicro"), nt_integer(n.quantity.micro));
    triple(me, term("unit"), nt_literal(unit_code(n.quantity.unit)));
    if (const auto* l = r.find_product(n.node_id)) {
      triple(me, term("eLiabilityMicroTonnes"), nt_integer(l->total.micro_tonnes()));
    }
    if (n.origin == ProductNode::Origin::ProducedBy) {
      triple(me, term("producedBy"), ent("process", s.processes()[n.origin_index].process_id));
    }
  }
  for (const auto& t : s.transfers()) {
    triple(ent("product", s.products()[t.source].node_id), term("transferredTo"),
           ent("product", s.products()[t.target].node_id));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l;
  return out;
}

}  // namespace

std::string export_graph(const GraphState& state, const AttributionResult& result, ExportFormat format) {
  switch (format) {
    case ExportFormat::Jsonl: return export_jsonl(state);
    case ExportFormat::Dot: return export_dot(state, result);
    case ExportFormat::NTriples: return export_ntriples(state, result);
  }
  return {};
}

}  // namespace elkg
