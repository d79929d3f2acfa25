#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elkg/ledger.hpp"

namespace elkg {

enum class RecordFormat { Jsonl, TransferCsv };

/// One line of a ledger file, kept verbatim for the audit trail.
struct RawEventRecord {
  std::string text;
  std::string file;
  std::size_t line = 0;  // 1-based
  RecordFormat format = RecordFormat::Jsonl;
};

/// Parses one record. Throws ParseError (MalformedRecord, UnknownEventKind,
/// BadTimestamp, BadNumber, UnknownUnit) carrying line number and field path.
LedgerEvent parse_ledger_line(const RawEventRecord& record);

/// Canonical single-line JSONL form of an event (sorted keys, canonical units,
/// decimal strings). parse_ledger_line(serialize_event(e)) == e.
std::string serialize_event(const LedgerEvent& event);

/// Header expected on transfer-only CSV imports.
inline constexpr std::string_view kTransferCsvHeader =
    "transfer_id,source_node,buyer,quantity,unit,timestamp";

/// Case-folded, whitespace-collapsed, trimmed form used for alias matching.
std::string normalize_alias(std::string_view name);

class EntityRegistry {
 public:
  /// Registers `alias` (normalized) for `canonical_id`. Registering the same
  /// alias for a second id makes it ambiguous rather than overwriting it.
  void add_alias(std::string_view alias, const std::string& canonical_id);

  const std::map<std::string, std::set<std::string>>& aliases() const noexcept { return aliases_; }

 private:
  std::map<std::string, std::set<std::string>> aliases_;
};

/// Exact match after normalization. Throws Error(UnresolvedEntity) or Error(AmbiguousAlias).
std::string resolve_entity(std::string_view name_or_id, const EntityRegistry& registry);

struct Rejection {
  std::string file;
  std::size_t line = 0;
  std::string event_id;  // empty when the record did not parse
  std::string reason;    // error or violation kind
  std::string message;
};

struct IngestReport {
  std::size_t accepted = 0;
  std::vector<Rejection> rejections;
};

struct AcceptedRecord {
  std::string event_id;
  std::string text;  // verbatim record bytes
};

struct IngestResult {
  GraphState state;
  IngestReport report;
  std::vector<AcceptedRecord> accepted;  // in application order
};

/// Parses, resolves, validates and applies records in (timestamp, event_id)
/// order. Rejected records are reported and skipped; they never touch the state.
/// Declared orgs become aliases (id and name) in `registry` as they are applied.
IngestResult ingest(std::span<const RawEventRecord> records, EntityRegistry& registry);

/// Continues ingestion on top of an existing state.
IngestResult ingest_into(GraphState state, std::span<const RawEventRecord> records,
                         EntityRegistry& registry);

/// Resolves org references in `event` against `registry` (owner, buyer, offset org).
LedgerEvent resolve_references(LedgerEvent event, const EntityRegistry& registry);

/// Reads a ledger (.jsonl) or transfer CSV (.csv, or a file starting with the
/// CSV header). Throws Error(IoFailure).
std::vector<RawEventRecord> read_ledger_file(const std::filesystem::path& path);

/// Splits text into records; the empty segment after a final newline is dropped.
std::vector<RawEventRecord> split_records(std::string_view content, const std::string& file,
                                          RecordFormat format);

}  // namespace elkg
