#pragma once

#include <json.hpp>

#include "elkg/attribution.hpp"
#include "elkg/audit.hpp"
#include "elkg/ingest.hpp"
#include "elkg/query.hpp"

namespace elkg {

using nlohmann::json;

json to_json(const ValidationReport& report);
json to_json(const IngestReport& report);
json to_json(const Footprint& fp);
json to_json(const OrgBalance& b);
json to_json(const ContributionBreakdown& b);
json to_json(const std::vector<Hotspot>& h, Dimension dim);
json to_json(const DeltaReport& r);
json to_json(const ChainStatus& s);
json to_json(const ConservationReport& r);
json to_json(const std::vector<Discrepancy>& d);
json to_json(const AuditEntry& e);

/// Scenario document:
///   {"scenario_id": str, "base_version"?: int, "overrides": [
///     {"kind": "revise_emissions", "process_id": str, "direct_emissions_t": decimal}
///     {"kind": "revise_weights", "process_id": str, "weights": {node: decimal} | null}
///     {"kind": "scale_transfer", "transfer_id": str, "factor": decimal}
///     {"kind": "remove_transfer", "transfer_id": str}]}
/// Decimals may be JSON numbers or strings. Throws ParseError(MalformedRecord | BadNumber).
Scenario parse_scenario(const json& doc);
Scenario parse_scenario_text(std::string_view text);

/// Declared-totals reference for cross verification: {org_id: decimal tonnes}.
std::map<std::string, EmissionQty> parse_reference(const json& doc);

}  // namespace elkg
