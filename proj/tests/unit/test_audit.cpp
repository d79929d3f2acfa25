#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "elkg/attribution.hpp"
#include "elkg/audit.hpp"
#include "support/fixtures.hpp"

using namespace elkg;
using elkg::testing::at;

namespace {

// Independent digest: hand-assembled preimage through the one-shot EVP API.
Digest oracle_digest(const Digest& prev, std::uint64_t seq, const std::string& id, const std::string& bytes) {
  std::string pre(prev.begin(), prev.end());
  for (int i = 7; i >= 0; --i) pre.push_back(static_cast<char>((seq >> (8 * i)) & 0xff));
  const auto n = static_cast<std::uint32_t>(id.size());
  for (int i = 3; i >= 0; --i) pre.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  pre += id;
  pre += bytes;
  Digest d{};
  unsigned int len = 0;
  EVP_Digest(pre.data(), pre.size(), d.data(), &len, EVP_sha256(), nullptr);
  return d;
}

AuditLog log_of(std::size_t n) {
  AuditLog log;
  for (std::size_t i = 0; i < n; ++i) log.append("e" + std::to_string(i), "{\"n\":" + std::to_string(i) + "}");
  return log;
}

std::string text_of(const AuditLog& log) {
  std::string out;
  for (const auto& e : log.entries()) out += serialize_audit_entry(e) + "\n";
  return out;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "elkg_test_audit";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

// ── digests ──

TEST_CASE("genesis digest is SHA-256 of the empty string", "[audit]") {
  CHECK(to_hex(genesis_digest()) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("chain_digest matches an independent preimage", "[audit]") {
  const auto d0 = chain_digest(genesis_digest(), 0, "E01", "{}");
  CHECK(d0 == oracle_digest(genesis_digest(), 0, "E01", "{}"));
  CHECK(chain_digest(d0, 1, "E02", "x") == oracle_digest(d0, 1, "E02", "x"));
  CHECK(digest_from_hex(to_hex(d0)) == d0);
  CHECK_FALSE(digest_from_hex(std::string(64, 'G')).has_value());
  CHECK_FALSE(digest_from_hex(std::string(63, 'a')).has_value());
}

TEST_CASE("first entry chains from genesis at seq 0", "[audit]") {
  AuditLog log;
  const auto& e = log.append("E01", "payload");
  CHECK(e.seq == 0);
  CHECK(e.digest == oracle_digest(genesis_digest(), 0, "E01", "payload"));
  CHECK(log.head() == e.digest);
}

TEST_CASE("identical events appended twice get distinct digests", "[audit]") {
  AuditLog log;
  log.append("E", "same");
  log.append("E", "same");
  CHECK(log.entries()[0].digest != log.entries()[1].digest);
  CHECK(verify_chain(log.entries()) == ChainStatus::Ok());
}

// ── verification ──

TEST_CASE("verify_chain: intact log of 1000 entries", "[audit][verify]") {
  const auto log = log_of(1000);
  CHECK(verify_chain(log.entries()) == ChainStatus::Ok());
  CHECK(verify_chain_text(text_of(log)) == ChainStatus::Ok());
  CHECK(verify_chain_text("") == ChainStatus::Ok());
}

TEST_CASE("verify_chain: tampered event bytes break at that entry", "[audit][verify]") {
  const auto log = log_of(20);
  auto entries = log.entries();
  entries[5].event[2] ^= 1;
  CHECK(verify_chain(entries) == ChainStatus::FirstBreak(5));

  auto text = text_of(log);
  const auto line5 = serialize_audit_entry(log.entries()[5]);
  const auto pos = text.find(line5) + line5.find("\\\"n\\\":5") + 6;
  text[pos] = '6';
  CHECK(verify_chain_text(text) == ChainStatus::FirstBreak(5));
}

TEST_CASE("verify_chain: deleted entry breaks at its position", "[audit][verify]") {
  const auto log = log_of(20);
  auto entries = log.entries();
  entries.erase(entries.begin() + 3);
  CHECK(verify_chain(entries) == ChainStatus::FirstBreak(3));

  std::istringstream in(text_of(log));
  std::string line, text;
  for (int i = 0; std::getline(in, line); ++i) {
    if (i != 3) text += line + "\n";
  }
  CHECK(verify_chain_text(text) == ChainStatus::FirstBreak(3));
}

TEST_CASE("verify_chain_text: non-canonical lines are breaks", "[audit][verify]") {
  const auto log = log_of(4);
  auto text = text_of(log);
  CHECK(verify_chain_text(text.substr(0, text.size() - 1)) == ChainStatus::FirstBreak(3));
  const auto upper = [&] {
    auto t = text;
    const auto p = t.find("digest_hex") + 13;
    for (std::size_t i = p; i < p + 64; ++i) t[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[i])));
    return t;
  }();
  CHECK(verify_chain_text(upper) == ChainStatus::FirstBreak(0));
  CHECK(verify_chain_text(text + "garbage\n") == ChainStatus::FirstBreak(4));
}

TEST_CASE("AuditLog: file round trip and reopen", "[audit][file]") {
  const auto path = temp_file("log.jsonl");
  {
    auto log = AuditLog::open(path);
    CHECK(log.size() == 0);
    log.append("a", "1");
    log.append("b", "2");
  }
  auto log = AuditLog::open(path);
  REQUIRE(log.size() == 2);
  log.append("c", "3");
  CHECK(log.entries()[2].seq == 2);
  CHECK(verify_chain_file(path) == ChainStatus::Ok());
  CHECK(verify_chain(log.entries()) == ChainStatus::Ok());
  CHECK_THROWS_AS(verify_chain_file(path.parent_path() / "missing.jsonl"), Error);
}

TEST_CASE("append_audit records the canonical event line", "[audit]") {
  AuditLog log;
  const LedgerEvent e{"E01", at("2023-01-01T00:00:00Z"), DeclareOrg{"A", "A", "", "", {}}};
  const auto& entry = append_audit(log, e);
  CHECK(entry.event_id == "E01");
  CHECK(entry.event == serialize_event(e));
}

// ── conservation ──

TEST_CASE("check_conservation: minimal fixture", "[audit][conservation]") {
  const auto s = elkg::testing::load_fixture("minimal_autofab.jsonl").state;
  const auto c = check_conservation(s, compute_full(s));
  CHECK(c.injected_micro == 20'000'000);
  CHECK(c.balances_micro == 20'000'000);
  CHECK(c.offsets_micro == 0);
  CHECK(c.ok());
}

TEST_CASE("check_conservation: empty graph", "[audit][conservation]") {
  const auto c = check_conservation(GraphState{}, compute_full(GraphState{}));
  CHECK(c.injected_micro == 0);
  CHECK(c.balances_micro == 0);
  CHECK(c.ok());
}

TEST_CASE("check_conservation: offsets lower balances by the same amount", "[audit][conservation]") {
  auto s = elkg::testing::load_fixture("minimal_autofab.jsonl").state;
  s = apply_event(s, {"X", at("2023-02-01T00:00:00Z"), OffsetAdjustment{"AUTOFAB", SignedEmissionDelta(-5'000'000)}});
  const auto r = compute_full(s);
  const auto c = check_conservation(s, r);
  CHECK(c.balances_micro == 15'000'000);
  CHECK(c.offsets_micro == -5'000'000);
  CHECK(c.residue_micro == 0);
  CHECK(r.find_org("AUTOFAB")->net_balance_micro == 15'000'000);
}

TEST_CASE("check_conservation: result from another version is refused", "[audit][conservation]") {
  const auto s = elkg::testing::load_fixture("minimal_autofab.jsonl").state;
  const auto r = compute_full(s);
  const auto later = apply_event(s, {"X", at("2023-02-01T00:00:00Z"), OffsetAdjustment{"AUTOFAB", SignedEmissionDelta(1)}});
  CHECK_THROWS_AS(check_conservation(later, r), Error);
}

// ── cross_verify ──

TEST_CASE("cross_verify reports signed deltas", "[audit][cross]") {
  const auto s = elkg::testing::load_fixture("minimal_autofab.jsonl").state;
  const auto r = compute_full(s);
  CHECK(cross_verify(r, {{"AUTOFAB", EmissionQty::tonnes(20)}}).empty());
  CHECK(cross_verify(r, {}).empty());
  CHECK(cross_verify(r, {{"UNKNOWN", EmissionQty::tonnes(1)}}).empty());
  const auto d = cross_verify(r, {{"AUTOFAB", EmissionQty::tonnes(18)}, {"STEELCO", EmissionQty::tonnes(0)}});
  REQUIRE(d.size() == 1);
  CHECK(d[0] == Discrepancy{"AUTOFAB", 20'000'000, 18'000'000, 2'000'000});
}

// ── sampling ──

TEST_CASE("sample_entries: size, order and determinism", "[audit][sample]") {
  const auto log = log_of(100);
  const auto a = sample_entries(log.entries(), 10, 42);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].seq < a[i].seq);
  CHECK(sample_entries(log.entries(), 10, 42) == a);
  CHECK(sample_entries(log.entries(), 500, 1).size() == 100);
  CHECK(sample_entries(log.entries(), 0, 1).empty());
}
