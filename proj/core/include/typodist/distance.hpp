#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "typodist/aggregate.hpp"
#include "typodist/impute.hpp"
#include "typodist/kb.hpp"

namespace typodist {

enum class DistanceMetric { Angular, Cosine };

std::string_view to_string(DistanceMetric metric);
std::optional<DistanceMetric> parse_metric(std::string_view text);

struct AllFeatures {};
struct CategoryFeatures {
  FeatureCategory category;
};
struct ExplicitFeatures {
  std::vector<std::string> names;
};
using FeatureSelector = std::variant<AllFeatures, CategoryFeatures, ExplicitFeatures>;

struct AllSources {};
struct OneSource {
  std::string name;
};
struct SourceSubset {
  std::vector<std::string> names;
};
using SourceSelector = std::variant<AllSources, OneSource, SourceSubset>;

// Source names the selector restricts aggregation to; nullopt for all.
std::optional<std::vector<std::string>> selected_sources(const SourceSelector& selector);

struct DistanceRequest {
  std::string lang_a;
  std::string lang_b;
  DistanceMetric metric = DistanceMetric::Angular;
  AggregationMode aggregation = AggregationMode::Union;
  FeatureSelector features = AllFeatures{};
  SourceSelector sources = AllSources{};
  // kind None means distances over observed data only.
  ImputerSpec imputer;
  bool dialect_fill = false;

  bool use_imputed() const { return imputer.kind != ImputerKind::None; }
};

struct DistanceValue {
  double distance = 0.0;
  std::size_t shared_features = 0;
  DistanceMetric metric = DistanceMetric::Angular;
  AggregationMode aggregation = AggregationMode::Union;
};

struct NotComputable {
  std::string reason;
};

inline constexpr std::string_view kNoSharedData = "no shared data";
inline constexpr std::string_view kZeroVector = "zero vector";

struct DistanceResult {
  std::string lang_a;
  std::string lang_b;
  std::variant<DistanceValue, NotComputable> outcome;

  bool computable() const { return std::holds_alternative<DistanceValue>(outcome); }
  const DistanceValue& value() const { return std::get<DistanceValue>(outcome); }
  const NotComputable& not_computable() const { return std::get<NotComputable>(outcome); }
  nlohmann::json to_json() const;
};

// Column indices a selector picks out of `matrix`, in matrix order. Throws
// UnknownFeature for unregistered names and InvalidArgument for an empty or
// duplicated explicit list.
std::vector<std::size_t> select_features(const AggregatedMatrix& matrix,
                                         const FeatureSelector& selector);

// Cosine: 1 − sim. Angular: (2/π)·arccos(sim). sim is clamped to [−1,1] and
// the distance to [0,1]. A zero-norm vector makes the pair NotComputable.
std::variant<DistanceValue, NotComputable> vector_distance(std::span<const double> u,
                                                           std::span<const double> v,
                                                           DistanceMetric metric);

// Distance over the selected features Known for both languages.
DistanceResult language_distance(const DistanceRequest& request, const AggregatedMatrix& matrix);

struct DistanceMatrix {
  std::vector<std::string> languages;
  std::vector<DistanceResult> cells;  // row-major, size languages²

  const DistanceResult& at(std::size_t i, std::size_t j) const {
    return cells[i * languages.size() + j];
  }
  nlohmann::json to_json() const;
};

// Per-pair distances for every pair in `languages` (lang_a/lang_b of the
// template are ignored). NotComputable pairs stay in the matrix.
DistanceMatrix distance_matrix(const std::vector<std::string>& languages,
                               const DistanceRequest& request_template,
                               const AggregatedMatrix& matrix);

// Distance over the Genetic-category (family membership) features.
DistanceResult genetic_distance(std::string_view lang_a, std::string_view lang_b,
                                const AggregatedMatrix& matrix,
                                DistanceMetric metric = DistanceMetric::Angular);

// Answers requests straight from a tensor: aggregates (and imputes) on demand
// and caches intermediate matrices only while the tensor is unchanged.
class DistanceEngine {
 public:
  explicit DistanceEngine(const FeatureTensor& tensor, std::uint64_t seed = 0);

  DistanceResult distance(const DistanceRequest& request);
  DistanceMatrix matrix(const std::vector<std::string>& languages, const DistanceRequest& request);

  // The aggregated (or imputed) matrix a request is answered from.
  std::shared_ptr<const AggregatedMatrix> matrix_for(const DistanceRequest& request);

 private:
  std::string glottocode(std::string_view id) const;

  const FeatureTensor& tensor_;
  std::uint64_t seed_;
  AggregationCache aggregations_;
  std::mutex mutex_;
  std::uint64_t tensor_uid_ = 0;
  std::uint64_t tensor_revision_ = 0;
  std::map<std::tuple<AggregationMode, std::vector<std::string>, std::string, bool>,
           std::shared_ptr<const AggregatedMatrix>>
      imputed_;
};

}  // namespace typodist
