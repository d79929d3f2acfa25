#include <catch2/catch_amalgamated.hpp>

#include "elkg/error.hpp"
#include "elkg/quantity.hpp"
#include "elkg/timestamp.hpp"

using namespace elkg;

TEST_CASE("EmissionQty rejects negative micro-tonnes", "[quantity]") {
  CHECK(EmissionQty::from_micro(0).micro_tonnes() == 0);
  CHECK(EmissionQty::tonnes(2).micro_tonnes() == 2'000'000);
  CHECK_THROWS_AS(EmissionQty::from_micro(-1), Error);
  CHECK(SignedEmissionDelta(-5'000'000).micro_tonnes() == -5'000'000);
}

TEST_CASE("normalize_quantity converts declared units to canonical micro-units", "[quantity]") {
  CHECK(normalize_quantity("10", "t") == Quantity{10'000'000'000, Unit::kg});
  CHECK(normalize_quantity("10", "Tonnes") == Quantity{10'000'000'000, Unit::kg});
  CHECK(normalize_quantity("2.5", "kg") == Quantity{2'500'000, Unit::kg});
  CHECK(normalize_quantity("1", "g") == Quantity{1'000, Unit::kg});
  CHECK(normalize_quantity("1", "GWh") == Quantity{1'000'000'000'000, Unit::kWh});
  CHECK(normalize_quantity("200", "MWh") == Quantity{200'000'000'000, Unit::kWh});
  CHECK(normalize_quantity("1", "Wh") == Quantity{1'000, Unit::kWh});
  CHECK(normalize_quantity("3", "pcs") == Quantity{3'000'000, Unit::item});
  CHECK(normalize_quantity("1e3", "kg") == Quantity{1'000'000'000, Unit::kg});
}

TEST_CASE("normalize_quantity errors", "[quantity]") {
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::RejectedEvent;
  };
  CHECK(code([] { normalize_quantity("1", "furlong"); }) == Errc::UnknownUnit);
  CHECK(code([] { normalize_quantity("-1", "kg"); }) == Errc::BadNumber);
  CHECK(code([] { normalize_quantity("abc", "kg"); }) == Errc::BadNumber);
  CHECK(code([] { normalize_quantity("0.0000001", "kg"); }) == Errc::BadNumber);
  CHECK(code([] { normalize_quantity("0.0001", "g"); }) == Errc::BadNumber);
}

TEST_CASE("decimal parsing and formatting round-trip", "[quantity]") {
  CHECK(parse_decimal_micro("2") == 2'000'000);
  CHECK(parse_decimal_micro("-0.000001") == -1);
  CHECK(parse_decimal_micro("1.2300000") == 1'230'000);
  CHECK_FALSE(parse_decimal_micro("").has_value());
  CHECK_FALSE(parse_decimal_micro("1x").has_value());
  CHECK_FALSE(parse_decimal_micro("99999999999999999999").has_value());
  CHECK(format_decimal_micro(2'500'000) == "2.5");
  CHECK(format_decimal_micro(-1) == "-0.000001");
  CHECK(format_fixed6(2'000'000) == "2.000000");
  CHECK(format_fixed6(-1'500'000) == "-1.500000");
  for (std::int64_t v : {0LL, 1LL, 999'999LL, 1'000'000LL, 123'456'789LL, -42LL}) {
    CHECK(parse_decimal_micro(format_decimal_micro(v)) == v);
    CHECK(parse_decimal_micro(format_fixed6(v)) == v);
  }
}

TEST_CASE("timestamps parse strictly and round-trip", "[timestamp]") {
  const auto t = parse_timestamp("2024-02-29T23:59:59Z");
  REQUIRE(t);
  CHECK(format_timestamp(*t) == "2024-02-29T23:59:59Z");
  CHECK_FALSE(parse_timestamp("2023-02-29T00:00:00Z"));
  CHECK_FALSE(parse_timestamp("2023-13-01T00:00:00Z"));
  CHECK_FALSE(parse_timestamp("2023-01-01 00:00:00"));
  CHECK_FALSE(parse_timestamp("2023-01-01T24:00:00Z"));
  CHECK(*parse_timestamp("1970-01-01T00:00:00Z") == Timestamp{});
}
