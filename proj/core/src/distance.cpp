#include "typodist/distance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "typodist/error.hpp"

namespace typodist {
using nlohmann::json;

std::string_view to_string(DistanceMetric metric) {
  return metric == DistanceMetric::Angular ? "angular" : "cosine";
}

std::optional<DistanceMetric> parse_metric(std::string_view text) {
  if (text == "angular") return DistanceMetric::Angular;
  if (text == "cosine") return DistanceMetric::Cosine;
  return std::nullopt;
}

std::optional<std::vector<std::string>> selected_sources(const SourceSelector& selector) {
  if (const auto* one = std::get_if<OneSource>(&selector)) return std::vector{one->name};
  if (const auto* subset = std::get_if<SourceSubset>(&selector)) {
    if (subset->names.empty()) throw Error(ErrorCode::EmptySourceSubset, "source subset is empty");
    return subset->names;
  }
  return std::nullopt;
}

json DistanceResult::to_json() const {
  if (computable()) {
    const auto& v = value();
    return json{{"pair", {lang_a, lang_b}},
                {"metric", std::string(typodist::to_string(v.metric))},
                {"aggregation", std::string(typodist::to_string(v.aggregation))},
                {"distance", v.distance},
                {"shared_features", v.shared_features}};
  }
  return json{{"pair", {lang_a, lang_b}},
              {"status", "not_computable"},
              {"reason", not_computable().reason}};
}

json DistanceMatrix::to_json() const {
  json out{{"languages", languages}, {"pairs", json::array()}};
  const std::size_t n = languages.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out["pairs"].push_back(at(i, j).to_json());
  }
  return out;
}

std::vector<std::size_t> select_features(const AggregatedMatrix& matrix,
                                         const FeatureSelector& selector) {
  std::vector<std::size_t> cols;
  if (std::holds_alternative<AllFeatures>(selector)) {
    cols.resize(matrix.cols());
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  } else if (const auto* cat = std::get_if<CategoryFeatures>(&selector)) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (matrix.features()[j].category == cat->category) cols.push_back(j);
    }
  } else {
    const auto& names = std::get<ExplicitFeatures>(selector).names;
    if (names.empty()) throw Error(ErrorCode::InvalidArgument, "explicit feature list is empty");
    std::set<std::string_view> seen;
    for (const auto& name : names) {
      if (!seen.insert(name).second) {
        throw Error(ErrorCode::InvalidArgument, "feature " + name + " listed twice");
      }
      auto j = matrix.find_feature(name);
      if (!j) throw Error(ErrorCode::UnknownFeature, "unknown feature '" + name + "'");
      cols.push_back(*j);
    }
    std::sort(cols.begin(), cols.end());
  }
  return cols;
}

std::variant<DistanceValue, NotComputable> vector_distance(std::span<const double> u,
                                                           std::span<const double> v,
                                                           DistanceMetric metric) {
  if (u.size() != v.size()) throw Error(ErrorCode::InvalidArgument, "vector length mismatch");
  if (u.empty()) return NotComputable{std::string(kNoSharedData)};
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return NotComputable{std::string(kZeroVector)};
  // sqrt(uu * vv) is exactly uu for identical vectors, so d(a, a) = 0.
  const double sim = std::clamp(dot / std::sqrt(uu * vv), -1.0, 1.0);
  double d = metric == DistanceMetric::Cosine ? 1.0 - sim : (2.0 / std::numbers::pi) * std::acos(sim);
  d = std::clamp(d, 0.0, 1.0);
  return DistanceValue{d, u.size(), metric, AggregationMode::Union};
}

namespace {

void check_request_matches(const DistanceRequest& request, const AggregatedMatrix& matrix) {
  if (request.aggregation != matrix.mode()) {
    throw Error(ErrorCode::ModeMismatch, "request asks for " +
                                             std::string(to_string(request.aggregation)) +
                                             " data but the matrix is " +
                                             std::string(to_string(matrix.mode())));
  }
  if (auto wanted = selected_sources(request.sources)) {
    std::set<std::string> want(wanted->begin(), wanted->end());
    std::set<std::string> have(matrix.sources().begin(), matrix.sources().end());
    if (want != have) {
      throw Error(ErrorCode::ModeMismatch, "matrix was aggregated over a different source set");
    }
  }
}

std::size_t row_of(const AggregatedMatrix& matrix, std::string_view lang) {
  if (auto r = matrix.find_language(lang)) return *r;
  throw Error(ErrorCode::UnknownLanguage, "unknown language '" + std::string(lang) + "'");
}

DistanceResult pair_distance(const AggregatedMatrix& matrix, std::size_t a, std::size_t b,
                             const std::vector<std::size_t>& cols, const DistanceRequest& req) {
  std::vector<double> u, v;
  u.reserve(cols.size());
  v.reserve(cols.size());
  for (std::size_t j : cols) {
    if (matrix.known(a, j) && matrix.known(b, j)) {
      u.push_back(matrix.value(a, j));
      v.push_back(matrix.value(b, j));
    }
  }
  DistanceResult result{matrix.languages()[a], matrix.languages()[b], NotComputable{}};
  result.outcome = vector_distance(u, v, req.metric);
  if (auto* value = std::get_if<DistanceValue>(&result.outcome)) value->aggregation = req.aggregation;
  return result;
}

}  // namespace

DistanceResult language_distance(const DistanceRequest& request, const AggregatedMatrix& matrix) {
  check_request_matches(request, matrix);
  const std::size_t a = row_of(matrix, request.lang_a);
  const std::size_t b = row_of(matrix, request.lang_b);
  auto result = pair_distance(matrix, a, b, select_features(matrix, request.features), request);
  result.lang_a = request.lang_a;
  result.lang_b = request.lang_b;
  return result;
}

DistanceMatrix distance_matrix(const std::vector<std::string>& languages,
                               const DistanceRequest& request_template,
                               const AggregatedMatrix& matrix) {
  if (languages.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "a distance matrix needs at least 2 languages");
  }
  check_request_matches(request_template, matrix);
  const auto cols = select_features(matrix, request_template.features);
  std::vector<std::size_t> rows;
  for (const auto& lang : languages) rows.push_back(row_of(matrix, lang));

  const std::size_t n = languages.size();
  DistanceMatrix out{languages, std::vector<DistanceResult>(n * n)};
  for (std::size_t i = 0; i < n; ++i) {
    auto& diag = out.cells[i * n + i];
    diag = pair_distance(matrix, rows[i], rows[i], cols, request_template);
    if (diag.computable()) diag.outcome = DistanceValue{0.0, diag.value().shared_features,
                                                        request_template.metric,
                                                        request_template.aggregation};
    diag.lang_a = diag.lang_b = languages[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      auto r = pair_distance(matrix, rows[i], rows[j], cols, request_template);
      r.lang_a = languages[i];
      r.lang_b = languages[j];
      auto mirrored = r;
      std::swap(mirrored.lang_a, mirrored.lang_b);
      out.cells[i * n + j] = std::move(r);
      out.cells[j * n + i] = std::move(mirrored);
    }
  }
  return out;
}

DistanceResult genetic_distance(std::string_view lang_a, std::string_view lang_b,
                                const AggregatedMatrix& matrix, DistanceMetric metric) {
  DistanceRequest req;
  req.lang_a = lang_a;
  req.lang_b = lang_b;
  req.metric = metric;
  req.aggregation = matrix.mode();
  req.features = CategoryFeatures{FeatureCategory::Genetic};
  return language_distance(req, matrix);
}

// ---------------------------------------------------------------------------

DistanceEngine::DistanceEngine(const FeatureTensor& tensor, std::uint64_t seed)
    : tensor_(tensor), seed_(seed) {}

std::string DistanceEngine::glottocode(std::string_view id) const {
  return tensor_.languages()[tensor_.language_index(id)].glottocode;
}

std::shared_ptr<const AggregatedMatrix> DistanceEngine::matrix_for(const DistanceRequest& request) {
  const auto sources = selected_sources(request.sources);
  auto aggregated = aggregations_.get(tensor_, request.aggregation, sources);
  if (!request.use_imputed()) return aggregated;

  std::vector<std::string> source_key = sources.value_or(std::vector<std::string>{});
  std::sort(source_key.begin(), source_key.end());
  const auto method = resolve_imputer(*aggregated, request.imputer, seed_);
  auto key = std::make_tuple(request.aggregation, source_key, method.describe(), request.dialect_fill);

  std::lock_guard lock(mutex_);
  if (tensor_.uid() != tensor_uid_ || tensor_.revision() != tensor_revision_) {
    imputed_.clear();
    tensor_uid_ = tensor_.uid();
    tensor_revision_ = tensor_.revision();
  }
  if (auto it = imputed_.find(key); it != imputed_.end()) return it->second;
  ImputerSpec resolved = request.imputer;
  resolved.k = method.k;
  resolved.lambda = method.soft.lambda;
  resolved.rank_cap = method.soft.rank_cap;
  auto imputed = impute(*aggregated, tensor_.languages(), resolved, request.dialect_fill, seed_);
  auto matrix = std::make_shared<const AggregatedMatrix>(imputed.matrix());
  imputed_.emplace(key, matrix);
  return matrix;
}

DistanceResult DistanceEngine::distance(const DistanceRequest& request) {
  DistanceRequest req = request;
  req.lang_a = glottocode(request.lang_a);
  req.lang_b = glottocode(request.lang_b);
  return language_distance(req, *matrix_for(req));
}

DistanceMatrix DistanceEngine::matrix(const std::vector<std::string>& languages,
                                      const DistanceRequest& request) {
  std::vector<std::string> codes;
  for (const auto& id : languages) codes.push_back(glottocode(id));
  return distance_matrix(codes, request, *matrix_for(request));
}

}  // namespace typodist
