#include "elkg/quantity.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <limits>

#include "elkg/error.hpp"

namespace elkg {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::RejectedEvent: return "RejectedEvent";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::EmptyWeights: return "EmptyWeights";
    case Errc::Overdraw: return "Overdraw";
    case Errc::StaleBase: return "StaleBase";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::UnknownEvent: return "UnknownEvent";
    case Errc::ZeroQuantity: return "ZeroQuantity";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::UnknownEventKind: return "UnknownEventKind";
    case Errc::BadTimestamp: return "BadTimestamp";
    case Errc::BadNumber: return "BadNumber";
    case Errc::UnknownUnit: return "UnknownUnit";
    case Errc::UnresolvedEntity: return "UnresolvedEntity";
    case Errc::AmbiguousAlias: return "AmbiguousAlias";
    case Errc::IoFailure: return "IoFailure";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::UnknownOverrideTarget: return "UnknownOverrideTarget";
    case Errc::InvalidScenario: return "InvalidScenario";
    case Errc::StartupFailure: return "StartupFailure";
    case Errc::UnitMismatch: return "UnitMismatch";
  }
  return "Unknown";
}

EmissionQty EmissionQty::from_micro(std::int64_t micro_tonnes) {
  if (micro_tonnes < 0) {
    throw Error(Errc::BadNumber, "negative emission quantity: " + std::to_string(micro_tonnes));
  }
  return EmissionQty(micro_tonnes);
}

std::string_view unit_code(Unit unit) noexcept {
  switch (unit) {
    case Unit::kg: return "kg";
    case Unit::kWh: return "kWh";
    case Unit::item: return "item";
  }
  return "?";
}

std::optional<Unit> parse_unit_code(std::string_view code) noexcept {
  if (code == "kg") return Unit::kg;
  if (code == "kWh") return Unit::kWh;
  if (code == "item") return Unit::item;
  return std::nullopt;
}

namespace {

struct Conversion {
  std::string_view alias;  // lower-case
  Unit unit;
  std::int64_t num;  // canonical = declared * num / den
  std::int64_t den;
};

constexpr std::array kConversions{
    Conversion{"kg", Unit::kg, 1, 1},          Conversion{"t", Unit::kg, 1000, 1},
    Conversion{"tonne", Unit::kg, 1000, 1},    Conversion{"tonnes", Unit::kg, 1000, 1},
    Conversion{"g", Unit::kg, 1, 1000},        Conversion{"kwh", Unit::kWh, 1, 1},
    Conversion{"mwh", Unit::kWh, 1000, 1},     Conversion{"gwh", Unit::kWh, 1'000'000, 1},
    Conversion{"wh", Unit::kWh, 1, 1000},      Conversion{"item", Unit::item, 1, 1},
    Conversion{"items", Unit::item, 1, 1},     Conversion{"unit", Unit::item, 1, 1},
    Conversion{"units", Unit::item, 1, 1},     Conversion{"pcs", Unit::item, 1, 1},
    Conversion{"pc", Unit::item, 1, 1},        Conversion{"ea", Unit::item, 1, 1},
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

Quantity normalize_quantity(std::string_view amount, std::string_view declared_unit) {
  const std::string key = lower(declared_unit);
  const auto conv = std::find_if(kConversions.begin(), kConversions.end(),
                                 [&](const Conversion& c) { return c.alias == key; });
  if (conv == kConversions.end()) {
    throw Error(Errc::UnknownUnit, "unknown unit '" + std::string(declared_unit) + "'");
  }
  const auto micro = parse_decimal_micro(amount);
  if (!micro) throw Error(Errc::BadNumber, "malformed amount '" + std::string(amount) + "'");
  if (*micro < 0) throw Error(Errc::BadNumber, "negative amount '" + std::string(amount) + "'");

  const __int128 scaled = static_cast<__int128>(*micro) * conv->num;
  if (scaled % conv->den != 0) {
    throw Error(Errc::BadNumber, "amount '" + std::string(amount) + " " +
                                     std::string(declared_unit) +
                                     "' is not exact in canonical micro-units");
  }
  const __int128 canonical = scaled / conv->den;
  if (canonical > std::numeric_limits<std::int64_t>::max()) {
    throw Error(Errc::BadNumber, "amount out of range '" + std::string(amount) + "'");
  }
  return Quantity{static_cast<std::int64_t>(canonical), conv->unit};
}

std::optional<std::int64_t> parse_decimal_micro(std::string_view text) {
  std::size_t i = 0;
  bool negative = false;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
    negative = text[i] == '-';
    ++i;
  }
  std::string digits;
  int frac_len = 0;
  bool seen_point = false;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (c >= '0' && c <= '9') {
      digits.push_back(c);
      if (seen_point) ++frac_len;
    } else if (c == '.' && !seen_point) {
      seen_point = true;
    } else {
      break;
    }
  }
  if (digits.empty()) return std::nullopt;
  long exponent = 0;
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    bool exp_negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
      exp_negative = text[i] == '-';
      ++i;
    }
    const std::size_t exp_start = i;
    for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
      if (exponent > 1000) return std::nullopt;
      exponent = exponent * 10 + (text[i] - '0');
    }
    if (i == exp_start) return std::nullopt;
    if (exp_negative) exponent = -exponent;
  }
  if (i != text.size()) return std::nullopt;

  // value = digits * 10^(exponent - frac_len); micro = value * 10^6
  long shift = exponent - frac_len + 6;
  while (shift < 0) {
    if (digits.size() > 1 && digits.back() == '0') {
      digits.pop_back();
      ++shift;
    } else if (digits == "0") {
      shift = 0;
    } else {
      return std::nullopt;  // more precision than a micro-unit
    }
  }
  constexpr __int128 kMax = std::numeric_limits<std::int64_t>::max();
  __int128 value = 0;
  for (char c : digits) {
    value = value * 10 + (c - '0');
    if (value > kMax) return std::nullopt;
  }
  for (long s = 0; s < shift && value != 0; ++s) {
    value *= 10;
    if (value > kMax) return std::nullopt;
  }
  return static_cast<std::int64_t>(negative ? -value : value);
}

std::string format_decimal_micro(std::int64_t micro) {
  const bool negative = micro < 0;
  const unsigned long long mag =
      negative ? 0ULL - static_cast<unsigned long long>(micro) : static_cast<unsigned long long>(micro);
  std::string out = std::to_string(mag / kMicro);
  unsigned long long frac = mag % kMicro;
  if (frac != 0) {
    std::string f = std::to_string(frac);
    f.insert(0, 6 - f.size(), '0');
    while (f.back() == '0') f.pop_back();
    out += '.' + f;
  }
  return negative ? "-" + out : out;
}

std::string format_fixed6(std::int64_t micro) {
  const bool negative = micro < 0;
  const unsigned long long mag =
      negative ? 0ULL - static_cast<unsigned long long>(micro) : static_cast<unsigned long long>(micro);
  std::string f = std::to_string(mag % kMicro);
  f.insert(0, 6 - f.size(), '0');
  return (negative ? "-" : "") + std::to_string(mag / kMicro) + "." + f;
}

}  // namespace elkg
