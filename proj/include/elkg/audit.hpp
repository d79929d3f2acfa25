#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elkg/attribution.hpp"
#include "elkg/ledger.hpp"

namespace elkg {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of the empty string.
const Digest& genesis_digest();

/// SHA-256(prev ‖ seq as u64 big-endian ‖ event_id length as u32 big-endian ‖ event_id ‖ bytes).
Digest chain_digest(const Digest& prev, std::uint64_t seq, std::string_view event_id,
                    std::string_view bytes);

std::string to_hex(const Digest& d);
std::optional<Digest> digest_from_hex(std::string_view hex);

struct AuditEntry {
  std::uint64_t seq = 0;
  std::string event_id;
  std::string event;  // exact ledger line bytes
  Digest digest{};

  friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

/// One JSONL line (no trailing newline) with keys digest_hex, event, event_id, seq.
std::string serialize_audit_entry(const AuditEntry& entry);

/// Append-only audit log, optionally mirrored to a file. Every append is
/// flushed before it returns.
class AuditLog {
 public:
  AuditLog() = default;

  /// Attaches to `path`, loading whatever entries parse. Chain validity is not
  /// checked here; use verify_chain. Creates the file if missing. Throws Error(IoFailure).
  static AuditLog open(const std::filesystem::path& path);

  const std::vector<AuditEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const Digest& head() const noexcept { return entries_.empty() ? genesis_digest() : entries_.back().digest; }

  /// Throws Error(IoFailure) when the file write fails; the entry is then not recorded.
  const AuditEntry& append(std::string_view event_id, std::string_view bytes);

 private:
  std::vector<AuditEntry> entries_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
};

/// Appends the canonical serialization of an accepted event.
const AuditEntry& append_audit(AuditLog& log, const LedgerEvent& event);

struct ChainStatus {
  bool ok = true;
  std::uint64_t first_break = 0;  // meaningful only when !ok

  static ChainStatus Ok() { return {}; }
  static ChainStatus FirstBreak(std::uint64_t seq) { return {false, seq}; }
  friend bool operator==(const ChainStatus&, const ChainStatus&) = default;
};

ChainStatus verify_chain(std::span<const AuditEntry> entries);

/// Verifies the raw audit file contents. Each line must be the exact canonical
/// serialization of its entry and end with a newline; the first line that is
/// not, or whose digest does not chain, is the break.
ChainStatus verify_chain_text(std::string_view content);

/// Throws Error(IoFailure) when the file cannot be read.
ChainStatus verify_chain_file(const std::filesystem::path& path);

struct ConservationReport {
  std::int64_t injected_micro = 0;  // sum of direct emissions in force
  std::int64_t offsets_micro = 0;
  std::int64_t balances_micro = 0;  // sum of org net balances
  std::int64_t residue_micro = 0;   // balances - injected - offsets

  bool ok() const noexcept { return residue_micro == 0; }
};

/// Throws Error(VersionMismatch) when `result` was computed on another version.
ConservationReport check_conservation(const GraphState& state, const AttributionResult& result);

struct Discrepancy {
  std::string org_id;
  std::int64_t computed_micro = 0;  // org net balance
  std::int64_t declared_micro = 0;
  std::int64_t delta_micro = 0;     // computed - declared

  friend bool operator==(const Discrepancy&, const Discrepancy&) = default;
};

/// Orgs whose net balance differs from the declared figure; orgs missing from
/// `reference` or from `result` are skipped. Sorted by org id.
std::vector<Discrepancy> cross_verify(const AttributionResult& result,
                                      const std::map<std::string, EmissionQty>& reference);

/// Uniform sample of min(k, n) entries without replacement, in log order.
std::vector<AuditEntry> sample_entries(std::span<const AuditEntry> entries, std::size_t k,
                                       std::uint64_t seed);

}  // namespace elkg
