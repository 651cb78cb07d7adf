#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "typodist/kb.hpp"

namespace typodist {

// On-disk layout of a tensor directory:
//   registry.json        languages, features and sources (with their CSV files)
//   <source>.csv         header `language,feature,value`; `--` marks Missing
inline constexpr const char* kRegistryFile = "registry.json";

void save_tensor(const FeatureTensor& tensor, const std::filesystem::path& dir);
FeatureTensor load_tensor(const std::filesystem::path& dir);
bool tensor_exists(const std::filesystem::path& dir);

nlohmann::json to_json(const LanguageRecord& record);
nlohmann::json to_json(const FeatureDescriptor& descriptor);
LanguageRecord language_from_json(const nlohmann::json& j);
FeatureDescriptor feature_from_json(const nlohmann::json& j);

}  // namespace typodist
