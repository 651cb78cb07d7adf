#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "typodist/aggregate.hpp"
#include "typodist/distance.hpp"
#include "typodist/impute.hpp"

namespace typodist::cli {

struct CliConfig {
  std::filesystem::path data_dir = "typodist-data";
  AggregationMode aggregation = AggregationMode::Union;
  DistanceMetric metric = DistanceMetric::Angular;
  ImputerKind imputer = ImputerKind::None;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> resolution_table;
  std::optional<std::filesystem::path> rules;
};

// JSON object with optional keys data_dir, aggregation, metric, imputer,
// seed, resolution_table, rules. Relative paths resolve against the config
// file's directory; referenced files must exist.
CliConfig load_config(const std::filesystem::path& path);

// TYPODIST_DATA_DIR, when set and non-empty, replaces config.data_dir.
void apply_environment(CliConfig& config);

}  // namespace typodist::cli
