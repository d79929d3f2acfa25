#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace elkg {

using Timestamp = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (UTC, seconds precision).
std::optional<Timestamp> parse_timestamp(std::string_view text);

std::string format_timestamp(Timestamp ts);

}  // namespace elkg
