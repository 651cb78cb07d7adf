#include "config.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "typodist/error.hpp"

namespace typodist::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path existing(const fs::path& base, const std::string& value, const char* key) {
  fs::path p = value;
  if (p.is_relative()) p = base / p;
  if (!fs::exists(p)) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("config ") + key + " points to missing file " + p.string());
  }
  return p;
}

}  // namespace

CliConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::FormatError, path.string() + ": expected an object");

  const fs::path base = path.parent_path();
  CliConfig config;
  try {
    if (j.contains("data_dir")) {
      fs::path d = j["data_dir"].get<std::string>();
      config.data_dir = d.is_relative() ? base / d : d;
    }
    if (j.contains("aggregation")) {
      auto mode = parse_aggregation(j["aggregation"].get<std::string>());
      if (!mode) throw Error(ErrorCode::FormatError, path.string() + ": unknown aggregation");
      config.aggregation = *mode;
    }
    if (j.contains("metric")) {
      auto metric = parse_metric(j["metric"].get<std::string>());
      if (!metric) throw Error(ErrorCode::FormatError, path.string() + ": unknown metric");
      config.metric = *metric;
    }
    if (j.contains("imputer")) {
      auto kind = parse_imputer(j["imputer"].get<std::string>());
      if (!kind) throw Error(ErrorCode::FormatError, path.string() + ": unknown imputer");
      config.imputer = *kind;
    }
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) {
        throw Error(ErrorCode::FormatError, path.string() + ": seed must be an unsigned integer");
      }
      config.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("resolution_table")) {
      config.resolution_table =
          existing(base, j["resolution_table"].get<std::string>(), "resolution_table");
    }
    if (j.contains("rules")) config.rules = existing(base, j["rules"].get<std::string>(), "rules");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  return config;
}

void apply_environment(CliConfig& config) {
  if (const char* dir = std::getenv("TYPODIST_DATA_DIR"); dir && *dir) config.data_dir = dir;
}

}  // namespace typodist::cli
