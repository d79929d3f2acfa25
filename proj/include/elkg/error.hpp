#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elkg {

enum class Errc {
  RejectedEvent,
  CycleDetected,
  EmptyWeights,
  Overdraw,
  StaleBase,
  UnknownNode,
  UnknownEvent,
  ZeroQuantity,
  MalformedRecord,
  UnknownEventKind,
  BadTimestamp,
  BadNumber,
  UnknownUnit,
  UnresolvedEntity,
  AmbiguousAlias,
  IoFailure,
  VersionMismatch,
  UnknownOverrideTarget,
  InvalidScenario,
  StartupFailure,
  UnitMismatch,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised while turning a ledger record into an event; `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(Errc code, std::string field, std::size_t line, const std::string& what)
      : Error(code, what), field_(std::move(field)), line_(line) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

}  // namespace elkg
