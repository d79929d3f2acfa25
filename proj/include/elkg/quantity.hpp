#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace elkg {

/// Micro-units per canonical unit, and micro-tonnes per tonne.
inline constexpr std::int64_t kMicro = 1'000'000;

/// Non-negative CO2e amount in micro-tonnes (1 µt = 1 g CO2e).
class EmissionQty {
 public:
  constexpr EmissionQty() = default;

  /// Throws Error(BadNumber) on a negative count.
  static EmissionQty from_micro(std::int64_t micro_tonnes);
  static EmissionQty tonnes(std::int64_t t) { return from_micro(t * kMicro); }

  constexpr std::int64_t micro_tonnes() const noexcept { return micro_; }

  EmissionQty& operator+=(EmissionQty other) noexcept {
    micro_ += other.micro_;
    return *this;
  }
  friend EmissionQty operator+(EmissionQty a, EmissionQty b) noexcept { return a += b; }
  friend constexpr auto operator<=>(EmissionQty, EmissionQty) = default;

 private:
  constexpr explicit EmissionQty(std::int64_t micro) : micro_(micro) {}
  std::int64_t micro_ = 0;
};

/// Signed micro-tonne adjustment; only offsets carry a sign.
class SignedEmissionDelta {
 public:
  constexpr SignedEmissionDelta() = default;
  constexpr explicit SignedEmissionDelta(std::int64_t micro_tonnes) : micro_(micro_tonnes) {}

  constexpr std::int64_t micro_tonnes() const noexcept { return micro_; }
  friend constexpr auto operator<=>(SignedEmissionDelta, SignedEmissionDelta) = default;

 private:
  std::int64_t micro_ = 0;
};

enum class Unit { kg, kWh, item };

std::string_view unit_code(Unit unit) noexcept;
std::optional<Unit> parse_unit_code(std::string_view code) noexcept;

/// Amount of product in micro-units of a canonical unit.
struct Quantity {
  std::int64_t micro = 0;
  Unit unit = Unit::kg;

  friend constexpr auto operator<=>(const Quantity&, const Quantity&) = default;
};

/// Converts a declared amount/unit pair into a canonical Quantity, exactly.
/// Throws Error(UnknownUnit) outside the conversion table, Error(BadNumber)
/// when the amount is negative, malformed, or not representable in micro-units.
Quantity normalize_quantity(std::string_view amount, std::string_view declared_unit);

// Decimal text <-> micro-scaled integers. Accepts optional sign, fraction and
// exponent ("1.5", "-3", "2e3"); at most six fractional digits after scaling.
std::optional<std::int64_t> parse_decimal_micro(std::string_view text);

/// Shortest exact decimal for a micro-scaled value: 2500000 -> "2.5".
std::string format_decimal_micro(std::int64_t micro);

/// Fixed six-decimal rendering used for human output: 2000000 -> "2.000000".
std::string format_fixed6(std::int64_t micro);

}  // namespace elkg
