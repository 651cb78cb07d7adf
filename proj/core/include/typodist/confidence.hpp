#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "typodist/aggregate.hpp"
#include "typodist/distance.hpp"
#include "typodist/evalkit.hpp"
#include "typodist/impute.hpp"
#include "typodist/kb.hpp"

namespace typodist {

// Features and sources the confidence components are evaluated over.
struct ConfidenceScope {
  FeatureSelector features = AllFeatures{};
  SourceSelector sources = AllSources{};
};

// Tensor feature indices in scope. Throws EmptyScope when nothing matches.
std::vector<std::size_t> scope_features(const FeatureTensor& tensor, const FeatureSelector& features);

// p(L): fraction of scope features with no Known value in any scoped source.
double missing_fraction(const FeatureTensor& tensor, std::string_view lang,
                        const ConfidenceScope& scope = {});

// 1 − (p(L₁) + p(L₂)) / 2.
double completeness(std::string_view lang_a, std::string_view lang_b, const FeatureTensor& tensor,
                    const ConfidenceScope& scope = {});

// a(L): mean of z/n over scope features with at least one source value, where
// z counts sources equal to the mode (ties resolve to the lowest value).
// Throws NoSourcedFeatures when no scope feature has a source value.
double agreement(const FeatureTensor& tensor, std::string_view lang,
                 const ConfidenceScope& scope = {});

// (a(L₁) + a(L₂)) / 2.
double consistency(std::string_view lang_a, std::string_view lang_b, const FeatureTensor& tensor,
                   const ConfidenceScope& scope = {});

// γ per (method key, aggregation mode), filled from quality-test reports.
class QualityCache {
 public:
  void record(const std::string& method_key, AggregationMode mode, double gamma);
  void record(const QualityReport& report);
  // Accepts one report object or an array of them, as written by `eval quality`.
  void load_json(const nlohmann::json& j);
  void load(const std::filesystem::path& path);

  std::optional<double> find(const std::string& method_key, AggregationMode mode) const;
  std::size_t size() const { return gamma_.size(); }

 private:
  std::map<std::pair<std::string, AggregationMode>, double> gamma_;
};

// 1 when `method_key` is empty (observed data only). Throws MissingQualityRun
// when no quality run is cached for the method and mode.
double imputation_quality(const std::string& method_key, AggregationMode mode,
                          const QualityCache& cache);

// Quality-cache key of an imputer request: "" for None, else ImputeMethod::key().
std::string quality_key(const ImputerSpec& spec);

struct ConfidenceReport {
  std::string lang_a;
  std::string lang_b;
  double completeness = 0.0;
  // Unset when either language has no sourced feature in scope.
  std::optional<double> consistency;
  double imputation_quality = 1.0;
  std::size_t feature_count_k = 0;

  nlohmann::json to_json() const;
};

ConfidenceReport confidence_report(std::string_view lang_a, std::string_view lang_b,
                                   const FeatureTensor& tensor, const ConfidenceScope& scope,
                                   const ImputerSpec& imputer, AggregationMode mode,
                                   const QualityCache& cache);

}  // namespace typodist
