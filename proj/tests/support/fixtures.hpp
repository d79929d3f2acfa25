#pragma once

#include <string>

#include "elkg/ingest.hpp"

namespace elkg::testing {

inline std::string fixture_path(const std::string& name) { return std::string(ELKG_FIXTURE_DIR) + "/" + name; }

inline IngestResult load_fixture(const std::string& name) {
  EntityRegistry registry;
  return ingest(read_ledger_file(fixture_path(name)), registry);
}

inline Timestamp at(const char* text) { return *parse_timestamp(text); }

}  // namespace elkg::testing
