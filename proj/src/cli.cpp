#include "elkg/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "elkg/attribution.hpp"
#include "elkg/audit.hpp"
#include "elkg/ingest.hpp"
#include "elkg/query.hpp"
#include "elkg/serialize.hpp"
#include "elkg/service.hpp"

namespace elkg {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string ledger;
  std::string audit;
  bool json = false;
};

fs::path ledger_path(const Options& o) {
  if (!o.ledger.empty()) return o.ledger;
  if (const char* env = std::getenv("ELKG_LEDGER"); env && *env) return env;
  return "ledger.jsonl";
}

fs::path audit_path(const Options& o, const fs::path& ledger) {
  if (!o.audit.empty()) return o.audit;
  fs::path p = ledger;
  p.replace_extension(".audit.jsonl");
  return p;
}

std::string tonnes(std::int64_t micro) { return format_fixed6(micro); }
std::string signed_tonnes(std::int64_t micro) { return (micro > 0 ? "+" : "") + format_fixed6(micro); }

void print_rejections(const IngestReport& report, std::ostream& err) {
  for (const auto& r : report.rejections) {
    err << r.file << ':' << r.line << ": " << r.reason << ": " << r.message << '\n';
  }
}

struct Loaded {
  GraphState state;
  AttributionResult result;
  IngestResult ingest;
};

Loaded load(const fs::path& ledger, std::ostream& err) {
  const auto records = read_ledger_file(ledger);
  EntityRegistry registry;
  Loaded l;
  l.ingest = ingest(records, registry);
  if (!l.ingest.report.rejections.empty()) {
    err << "warning: " << l.ingest.report.rejections.size() << " ledger record(s) rejected\n";
    print_rejections(l.ingest.report, err);
  }
  l.state = l.ingest.state;
  l.result = compute_full(l.state);
  return l;
}

void print_balance_header(std::ostream& out) {
  out << "org_id\tnet_balance_t\tgross_produced_t\theld_t\toffsets_t\n";
}

void print_balance(const OrgBalance& b, std::ostream& out) {
  out << b.org_id << '\t' << tonnes(b.net_balance_micro) << '\t' << tonnes(b.gross_produced.micro_tonnes())
      << '\t' << tonnes(b.held.micro_tonnes()) << '\t' << tonnes(b.offsets_micro) << '\n';
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<AuditEntry> read_audit_entries(const fs::path& p) {
  std::vector<AuditEntry> out;
  std::istringstream in(read_text(p));
  std::string line;
  while (std::getline(in, line)) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    AuditEntry e;
    e.seq = j.value("seq", std::uint64_t{0});
    e.event_id = j.value("event_id", std::string());
    e.event = j.value("event", std::string());
    if (const auto d = digest_from_hex(j.value("digest_hex", std::string()))) e.digest = *d;
    out.push_back(std::move(e));
  }
  return out;
}

int cmd_ingest(const Options& o, const std::string& file, std::ostream& out, std::ostream& err) {
  const fs::path ledger = file;
  const auto records = read_ledger_file(ledger);
  EntityRegistry registry;
  const auto res = ingest(records, registry);
  print_rejections(res.report, err);

  const fs::path apath = audit_path(o, ledger);
  if (fs::exists(apath) && fs::file_size(apath) > 0) {
    const auto status = verify_chain_file(apath);
    if (!status.ok) {
      err << "audit chain broken: FirstBreak(" << status.first_break << ")\n";
      return kExitVerifyFailed;
    }
  }
  AuditLog log = AuditLog::open(apath);
  std::set<std::string> logged;
  for (const auto& e : log.entries()) logged.insert(e.event_id);
  std::size_t appended = 0;
  for (const auto& a : res.accepted) {
    if (logged.insert(a.event_id).second) {
      log.append(a.event_id, a.text);
      ++appended;
    }
  }
  if (o.json) {
    json j = to_json(res.report);
    j["version"] = res.state.version();
    j["audit_appended"] = appended;
    j["audit_entries"] = log.size();
    out << j.dump() << '\n';
  } else {
    out << "accepted\t" << res.report.accepted << '\n'
        << "rejected\t" << res.report.rejections.size() << '\n'
        << "version\t" << res.state.version() << '\n'
        << "audit_entries\t" << log.size() << '\n';
  }
  return res.report.rejections.empty() ? kExitOk : kExitRejected;
}

int cmd_compute(const Options& o, std::ostream& out, std::ostream& err) {
  const auto l = load(ledger_path(o), err);
  if (o.json) {
    json arr = json::array();
    for (const auto& b : l.result.orgs) arr.push_back(to_json(b));
    out << json{{"version", l.state.version()}, {"orgs", arr}}.dump() << '\n';
    return kExitOk;
  }
  std::vector<const OrgBalance*> orgs;
  for (const auto& b : l.result.orgs) orgs.push_back(&b);
  std::sort(orgs.begin(), orgs.end(), [](auto* a, auto* b) { return a->org_id < b->org_id; });
  print_balance_header(out);
  for (const auto* b : orgs) print_balance(*b, out);
  return kExitOk;
}

int cmd_footprint(const Options& o, const std::string& node, std::ostream& out, std::ostream& err) {
  const auto l = load(ledger_path(o), err);
  try {
    const auto fp = product_footprint(l.state, l.result, node);
    if (o.json) {
      out << to_json(fp).dump() << '\n';
    } else {
      out << tonnes(fp.total.micro_tonnes()) << " tCO2e total, " << tonnes(fp.per_unit.micro_tonnes())
          << " tCO2e/" << unit_code(fp.unit) << '\n';
    }
    return kExitOk;
  } catch (const ZeroQuantityError& e) {
    out << tonnes(e.total().micro_tonnes()) << " tCO2e total, undefined tCO2e/" << unit_code(e.unit()) << '\n';
    err << "ZeroQuantity: " << e.what() << '\n';
    return kExitRejected;
  }
}

int cmd_balance(const Options& o, const std::string& org, std::ostream& out, std::ostream& err) {
  const auto l = load(ledger_path(o), err);
  const auto* b = l.result.find_org(org);
  if (!b) throw Error(Errc::UnknownNode, "unknown org '" + org + "'");
  if (o.json) {
    out << to_json(*b).dump() << '\n';
  } else {
    print_balance_header(out);
    print_balance(*b, out);
  }
  return kExitOk;
}

int cmd_breakdown(const Options& o, const std::string& node, std::ostream& out, std::ostream& err) {
  const auto l = load(ledger_path(o), err);
  const auto b = breakdown(l.state, l.result, node);
  if (o.json) {
    out << to_json(b).dump() << '\n';
    return kExitOk;
  }
  out << "total\t" << tonnes(b.total.micro_tonnes()) << '\n';
  for (const auto& c : b.contributions) out << c.process_id << '\t' << tonnes(c.amount.micro_tonnes()) << '\n';
  return kExitOk;
}

int cmd_hotspots(const Options& o, const std::string& dim_name, std::size_t k, std::ostream& out,
                 std::ostream& err) {
  const auto dim = parse_dimension(dim_name);
  if (!dim) {
    err << "--dim must be org, product or process\n";
    return kExitUsage;
  }
  const auto l = load(ledger_path(o), err);
  const auto h = hotspots(l.result, k, *dim);
  if (o.json) {
    out << to_json(h, *dim).dump() << '\n';
    return kExitOk;
  }
  for (const auto& x : h) out << x.id << '\t' << tonnes(x.liability.micro_tonnes()) << '\n';
  return kExitOk;
}

int cmd_whatif(const Options& o, const std::string& file, std::ostream& out, std::ostream& err) {
  const auto sc = parse_scenario_text(read_text(file));
  const auto l = load(ledger_path(o), err);
  const auto r = scenario_evaluate(l.state, l.result, sc);
  if (o.json) {
    out << to_json(r).dump() << '\n';
    return kExitOk;
  }
  out << "kind\tid\tbase_t\tscenario_t\tdelta_t\n";
  for (const auto& d : r.orgs) {
    out << "org\t" << d.id << '\t' << tonnes(d.base_micro) << '\t' << tonnes(d.scenario_micro) << '\t'
        << signed_tonnes(d.delta_micro) << '\n';
  }
  for (const auto& d : r.products) {
    out << "product\t" << d.id << '\t' << tonnes(d.base_micro) << '\t' << tonnes(d.scenario_micro) << '\t'
        << signed_tonnes(d.delta_micro) << '\n';
  }
  return kExitOk;
}

int cmd_verify(const Options& o, const std::string& reference, std::ostream& out, std::ostream& err) {
  const fs::path ledger = ledger_path(o);
  const fs::path apath = audit_path(o, ledger);
  const auto l = load(ledger, err);
  bool ok = true;

  if (!fs::exists(apath)) {
    err << "audit log '" << apath.string() << "' missing\n";
    out << "chain\tmissing\n";
    ok = false;
  } else {
    const auto status = verify_chain_file(apath);
    if (status.ok) {
      const auto entries = read_audit_entries(apath);
      std::multiset<std::string> logged, accepted;
      for (const auto& e : entries) logged.insert(e.event_id);
      for (const auto& a : l.ingest.accepted) accepted.insert(a.event_id);
      out << "chain\tok\t" << entries.size() << '\n';
      if (logged != accepted) {
        err << "audit log and ledger disagree on the accepted events\n";
        out << "ledger_match\tfailed\n";
        ok = false;
      }
    } else {
      err << "audit chain broken: FirstBreak(" << status.first_break << ")\n";
      out << "chain\tbroken\t" << status.first_break << '\n';
      ok = false;
    }
  }

  const auto cons = check_conservation(l.state, l.result);
  out << "conservation\t" << (cons.ok() ? "ok" : "failed") << '\t' << tonnes(cons.injected_micro) << '\t'
      << tonnes(cons.offsets_micro) << '\t' << tonnes(cons.balances_micro) << '\t' << tonnes(cons.residue_micro)
      << '\n';
  if (!cons.ok()) {
    err << "conservation residue " << cons.residue_micro << " micro-tonnes\n";
    ok = false;
  }

  if (!reference.empty()) {
    const json doc = json::parse(read_text(reference), nullptr, false);
    if (doc.is_discarded()) throw Error(Errc::MalformedRecord, "reference file is not valid JSON");
    for (const auto& d : cross_verify(l.result, parse_reference(doc))) {
      out << "discrepancy\t" << d.org_id << '\t' << tonnes(d.computed_micro) << '\t' << tonnes(d.declared_micro)
          << '\t' << signed_tonnes(d.delta_micro) << '\n';
      ok = false;
    }
  }
  return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_export(const Options& o, const std::string& format, std::ostream& out, std::ostream& err) {
  const auto fmt = parse_export_format(format);
  if (!fmt) {
    err << "--format must be jsonl, dot or ntriples\n";
    return kExitUsage;
  }
  const auto l = load(ledger_path(o), err);
  out << export_graph(l.state, l.result, *fmt);
  return kExitOk;
}

int cmd_sample(const Options& o, std::size_t k, std::uint64_t seed, std::ostream& out) {
  const fs::path apath = audit_path(o, ledger_path(o));
  if (!fs::exists(apath)) throw Error(Errc::IoFailure, "audit log '" + apath.string() + "' missing");
  const auto entries = read_audit_entries(apath);
  for (const auto& e : sample_entries(entries, k, seed)) out << serialize_audit_entry(e) << '\n';
  return kExitOk;
}

int cmd_serve(const Options& o, int port, const std::string& bind, bool read_only, bool force,
              std::ostream& err) {
  ApiConfig cfg;
  cfg.bind_address = bind;
  cfg.port = port;
  cfg.ledger_path = ledger_path(o);
  cfg.audit_path = audit_path(o, cfg.ledger_path);
  cfg.read_only = read_only;
  cfg.force = force;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  std::unique_ptr<ServiceHandle> handle;
  try {
    handle = serve(cfg);
  } catch (const Error& e) {
    err << errc_name(e.code()) << ": " << e.what() << '\n';
    pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
    return kExitVerifyFailed;
  }
  print_rejections(handle->service().startup_report(), err);
  err << "listening on " << bind << ':' << handle->port() << " (version "
      << handle->service().snapshot()->state.version() << ")\n";
  int sig = 0;
  sigwait(&set, &sig);
  handle->stop();
  pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
  err << "stopped\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"E-liability ledger: ingest, attribute, query and verify supply-chain carbon liabilities", "elkg"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.fallthrough();

  Options o;
  app.add_option("--ledger", o.ledger, "Ledger file (default $ELKG_LEDGER or ledger.jsonl)");
  app.add_option("--audit", o.audit, "Audit log (default <ledger>.audit.jsonl)");
  app.add_flag("--json", o.json, "JSON output");

  std::string ingest_file;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build the graph from a ledger and extend its audit log");
  ingest_cmd->add_option("ledger", ingest_file, "Ledger (.jsonl) or transfer CSV")->required();

  auto* compute_cmd = app.add_subcommand("compute", "Full attribution; prints org balances");

  auto* query_cmd = app.add_subcommand("query", "Footprint, balance, breakdown and hotspot queries");
  query_cmd->require_subcommand(1);
  std::string q_node, q_org, q_dim = "product";
  std::size_t q_k = 10;
  auto* fp_cmd = query_cmd->add_subcommand("footprint", "Total and per-unit liability of a product node");
  fp_cmd->add_option("node", q_node)->required();
  auto* bal_cmd = query_cmd->add_subcommand("balance", "Org balance");
  bal_cmd->add_option("org", q_org)->required();
  auto* bd_cmd = query_cmd->add_subcommand("breakdown", "Per-source-process split of a product node");
  bd_cmd->add_option("node", q_node)->required();
  auto* hs_cmd = query_cmd->add_subcommand("hotspots", "Top-k entities by liability");
  hs_cmd->add_option("--dim", q_dim, "org | product | process")->capture_default_str();
  hs_cmd->add_option("--k", q_k, "Number of entries")->check(CLI::PositiveNumber)->capture_default_str();

  std::string scenario_file;
  auto* whatif_cmd = app.add_subcommand("whatif", "Evaluate a scenario file against the current graph");
  whatif_cmd->add_option("scenario", scenario_file)->required();

  std::string reference_file;
  auto* verify_cmd = app.add_subcommand("verify", "Audit chain and conservation checks");
  verify_cmd->add_option("--reference", reference_file, "Declared per-org totals (JSON) to cross-check");

  std::string export_format;
  auto* export_cmd = app.add_subcommand("export", "Export the graph");
  export_cmd->add_option("--format", export_format, "jsonl | dot | ntriples")->required();

  int port = 8080;
  std::string bind = "127.0.0.1";
  bool read_only = false, force = false;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535))->capture_default_str();
  serve_cmd->add_option("--bind", bind)->capture_default_str();
  serve_cmd->add_flag("--read-only", read_only);
  serve_cmd->add_flag("--force", force, "Start even if the audit chain is broken");

  std::size_t sample_k = 0;
  std::uint64_t sample_seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Uniform random sample of audit entries for manual review");
  sample_cmd->add_option("--k", sample_k)->required();
  sample_cmd->add_option("--seed", sample_seed)->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(o, ingest_file, out, err);
    if (*compute_cmd) return cmd_compute(o, out, err);
    if (*fp_cmd) return cmd_footprint(o, q_node, out, err);
    if (*bal_cmd) return cmd_balance(o, q_org, out, err);
    if (*bd_cmd) return cmd_breakdown(o, q_node, out, err);
    if (*hs_cmd) return cmd_hotspots(o, q_dim, q_k, out, err);
    if (*whatif_cmd) return cmd_whatif(o, scenario_file, out, err);
    if (*verify_cmd) return cmd_verify(o, reference_file, out, err);
    if (*export_cmd) return cmd_export(o, export_format, out, err);
    if (*serve_cmd) return cmd_serve(o, port, bind, read_only, force, err);
    if (*sample_cmd) return cmd_sample(o, sample_k, sample_seed, out);
  } catch (const Error& e) {
    err << errc_name(e.code()) << ": " << e.what() << '\n';
    return kExitRejected;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRejected;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace elkg
