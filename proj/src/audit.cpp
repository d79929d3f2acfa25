#include "elkg/audit.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <iterator>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "elkg/ingest.hpp"

namespace elkg {

namespace {

using json = nlohmann::json;

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error(Errc::IoFailure, "SHA-256 unavailable");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  Digest finish() {
    Digest d{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), d.data(), &len);
    return d;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

template <std::size_t N>
void put_be(Sha256& h, std::uint64_t v) {
  std::array<std::uint8_t, N> b{};
  for (std::size_t i = 0; i < N; ++i) b[N - 1 - i] = static_cast<std::uint8_t>(v >> (8 * i));
  h.update(b.data(), N);
}

std::optional<AuditEntry> parse_entry(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.size() != 4) return std::nullopt;
  const auto seq = j.find("seq");
  const auto id = j.find("event_id");
  const auto ev = j.find("event");
  const auto dg = j.find("digest_hex");
  if (seq == j.end() || !seq->is_number_unsigned() || id == j.end() || !id->is_string() ||
      ev == j.end() || !ev->is_string() || dg == j.end() || !dg->is_string()) {
    return std::nullopt;
  }
  const auto digest = digest_from_hex(dg->get_ref<const std::string&>());
  if (!digest) return std::nullopt;
  return AuditEntry{seq->get<std::uint64_t>(), id->get<std::string>(), ev->get<std::string>(), *digest};
}

}  // namespace

const Digest& genesis_digest() {
  static const Digest d = [] {
    Sha256 h;
    return h.finish();
  }();
  return d;
}

Digest chain_digest(const Digest& prev, std::uint64_t seq, std::string_view event_id,
                    std::string_view bytes) {
  Sha256 h;
  h.update(prev.data(), prev.size());
  put_be<8>(h, seq);
  put_be<4>(h, event_id.size());
  h.update(event_id.data(), event_id.size());
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : d) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::optional<Digest> digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;  // lower-case only, so the text form is unique
  };
  Digest d{};
  for (std::size_t i = 0; i < 32; ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    d[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return d;
}

std::string serialize_audit_entry(const AuditEntry& e) {
  json j;
  j["seq"] = e.seq;
  j["event_id"] = e.event_id;
  j["event"] = e.event;
  j["digest_hex"] = to_hex(e.digest);
  return j.dump();
}

AuditLog AuditLog::open(const std::filesystem::path& path) {
  AuditLog log;
  {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::string line;
      while (std::getline(in, line)) {
        if (auto e = parse_entry(line)) log.entries_.push_back(std::move(*e));
      }
    }
  }
  log.out_.open(path, std::ios::binary | std::ios::app);
  if (!log.out_) throw Error(Errc::IoFailure, "cannot open audit log '" + path.string() + "'");
  log.path_ = path;
  return log;
}

const AuditEntry& AuditLog::append(std::string_view event_id, std::string_view bytes) {
  AuditEntry e;
  e.seq = entries_.size();
  e.event_id = std::string(event_id);
  e.event = std::string(bytes);
  e.digest = chain_digest(head(), e.seq, e.event_id, e.event);
  if (path_) {
    out_ << serialize_audit_entry(e) << '\n';
    out_.flush();
    if (!out_) throw Error(Errc::IoFailure, "audit append to '" + path_->string() + "' failed");
  }
  entries_.push_back(std::move(e));
  return entries_.back();
}

const AuditEntry& append_audit(AuditLog& log, const LedgerEvent& event) {
  return log.append(event.event_id, serialize_event(event));
}

ChainStatus verify_chain(std::span<const AuditEntry> entries) {
  Digest prev = genesis_digest();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.seq != i) return ChainStatus::FirstBreak(i);
    const Digest d = chain_digest(prev, e.seq, e.event_id, e.event);
    if (d != e.digest) return ChainStatus::FirstBreak(i);
    prev = d;
  }
  return ChainStatus::Ok();
}

ChainStatus verify_chain_text(std::string_view content) {
  Digest prev = genesis_digest();
  std::uint64_t seq = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) return ChainStatus::FirstBreak(seq);
    const auto line = content.substr(pos, nl - pos);
    const auto e = parse_entry(line);
    if (!e || e->seq != seq || serialize_audit_entry(*e) != line) return ChainStatus::FirstBreak(seq);
    const Digest d = chain_digest(prev, e->seq, e->event_id, e->event);
    if (d != e->digest) return ChainStatus::FirstBreak(seq);
    prev = d;
    ++seq;
    pos = nl + 1;
  }
  return ChainStatus::Ok();
}

ChainStatus verify_chain_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read audit log '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return verify_chain_text(ss.str());
}

ConservationReport check_conservation(const GraphState& state, const AttributionResult& result) {
  if (result.basis_version != state.version() || result.orgs.size() != state.orgs().size()) {
    throw Error(Errc::VersionMismatch, "attribution basis version " +
                                           std::to_string(result.basis_version) +
                                           " does not match state version " +
                                           std::to_string(state.version()));
  }
  ConservationReport r;
  for (const auto& p : state.processes()) r.injected_micro += p.direct_emissions.micro_tonnes();
  for (const auto& o : state.offsets()) r.offsets_micro += o.delta.micro_tonnes();
  for (const auto& b : result.orgs) r.balances_micro += b.net_balance_micro;
  r.residue_micro = r.balances_micro - r.injected_micro - r.offsets_micro;
  return r;
}

std::vector<Discrepancy> cross_verify(const AttributionResult& result,
                                      const std::map<std::string, EmissionQty>& reference) {
  std::vector<Discrepancy> out;
  for (const auto& [org, declared] : reference) {
    const auto* b = result.find_org(org);
    if (!b) continue;
    const auto delta = b->net_balance_micro - declared.micro_tonnes();
    if (delta != 0) out.push_back({org, b->net_balance_micro, declared.micro_tonnes(), delta});
  }
  return out;
}

std::vector<AuditEntry> sample_entries(std::span<const AuditEntry> entries, std::size_t k,
                                       std::uint64_t seed) {
  std::vector<AuditEntry> out;
  std::mt19937_64 rng(seed);
  std::sample(entries.begin(), entries.end(), std::back_inserter(out), k, rng);
  return out;
}

}  // namespace elkg
