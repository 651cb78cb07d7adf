#include "typodist/confidence.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "typodist/error.hpp"

namespace typodist {
using nlohmann::json;

namespace {

// keep[src] marks the sources in scope.
std::vector<bool> source_filter(const FeatureTensor& tensor, const SourceSelector& selector) {
  std::vector<bool> keep(tensor.sources().size(), true);
  if (auto names = selected_sources(selector)) {
    std::fill(keep.begin(), keep.end(), false);
    for (const auto& name : *names) keep[tensor.source_index(name)] = true;
  }
  return keep;
}

std::vector<double> scoped_values(const FeatureTensor& tensor, std::size_t lang, std::size_t feat,
                                  const std::vector<bool>& keep) {
  std::vector<double> values;
  tensor.for_each_source_value(lang, feat, [&](std::size_t src, double v) {
    if (keep[src]) values.push_back(v);
  });
  return values;
}

}  // namespace

std::vector<std::size_t> scope_features(const FeatureTensor& tensor, const FeatureSelector& features) {
  std::vector<std::size_t> out;
  if (std::holds_alternative<AllFeatures>(features)) {
    for (std::size_t f = 0; f < tensor.features().size(); ++f) out.push_back(f);
  } else if (const auto* cat = std::get_if<CategoryFeatures>(&features)) {
    for (std::size_t f = 0; f < tensor.features().size(); ++f) {
      if (tensor.features()[f].category == cat->category) out.push_back(f);
    }
  } else {
    std::set<std::size_t> seen;
    for (const auto& name : std::get<ExplicitFeatures>(features).names) {
      if (seen.insert(tensor.feature_index(name)).second) out.push_back(tensor.feature_index(name));
    }
    std::sort(out.begin(), out.end());
  }
  if (out.empty()) throw Error(ErrorCode::EmptyScope, "feature scope is empty");
  return out;
}

double missing_fraction(const FeatureTensor& tensor, std::string_view lang,
                        const ConfidenceScope& scope) {
  const auto feats = scope_features(tensor, scope.features);
  const auto keep = source_filter(tensor, scope.sources);
  const std::size_t l = tensor.language_index(lang);
  std::size_t missing = 0;
  for (std::size_t f : feats) {
    if (scoped_values(tensor, l, f, keep).empty()) ++missing;
  }
  return static_cast<double>(missing) / static_cast<double>(feats.size());
}

double completeness(std::string_view lang_a, std::string_view lang_b, const FeatureTensor& tensor,
                    const ConfidenceScope& scope) {
  return 1.0 - (missing_fraction(tensor, lang_a, scope) + missing_fraction(tensor, lang_b, scope)) / 2.0;
}

double agreement(const FeatureTensor& tensor, std::string_view lang, const ConfidenceScope& scope) {
  const auto feats = scope_features(tensor, scope.features);
  const auto keep = source_filter(tensor, scope.sources);
  const std::size_t l = tensor.language_index(lang);
  double sum = 0.0;
  std::size_t k = 0;
  for (std::size_t f : feats) {
    auto values = scoped_values(tensor, l, f, keep);
    if (values.empty()) continue;
    std::sort(values.begin(), values.end());
    // Runs in ascending order; the first longest run is the lowest mode.
    std::size_t best = 0;
    for (std::size_t i = 0; i < values.size();) {
      std::size_t j = i;
      while (j < values.size() && values[j] == values[i]) ++j;
      best = std::max(best, j - i);
      i = j;
    }
    sum += static_cast<double>(best) / static_cast<double>(values.size());
    ++k;
  }
  if (k == 0) {
    throw Error(ErrorCode::NoSourcedFeatures,
                "language " + std::string(lang) + " has no source values in scope");
  }
  return sum / static_cast<double>(k);
}

double consistency(std::string_view lang_a, std::string_view lang_b, const FeatureTensor& tensor,
                   const ConfidenceScope& scope) {
  return (agreement(tensor, lang_a, scope) + agreement(tensor, lang_b, scope)) / 2.0;
}

// ---------------------------------------------------------------------------

void QualityCache::record(const std::string& method_key, AggregationMode mode, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "imputation quality must lie in [0,1]");
  }
  gamma_[{method_key, mode}] = gamma;
}

void QualityCache::record(const QualityReport& report) {
  record(report.method, report.mode, report.gamma());
}

void QualityCache::load_json(const json& j) {
  if (j.is_array()) {
    for (const auto& item : j) load_json(item);
    return;
  }
  try {
    const auto mode = parse_aggregation(j.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::FormatError, "unknown aggregation mode in quality report");
    const auto& metrics = j.at("metrics");
    const double gamma = *mode == AggregationMode::Union
                             ? metrics.at("f1").get<double>()
                             : std::clamp(1.0 - metrics.at("rmse").get<double>(), 0.0, 1.0);
    record(j.at("method").get<std::string>(), *mode, gamma);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed quality report: ") + e.what());
  }
}

void QualityCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  load_json(j);
}

std::optional<double> QualityCache::find(const std::string& method_key, AggregationMode mode) const {
  auto it = gamma_.find({method_key, mode});
  if (it == gamma_.end()) return std::nullopt;
  return it->second;
}

double imputation_quality(const std::string& method_key, AggregationMode mode,
                          const QualityCache& cache) {
  if (method_key.empty()) return 1.0;
  if (auto g = cache.find(method_key, mode)) return *g;
  throw Error(ErrorCode::MissingQualityRun, "no quality run for " + method_key + " on " +
                                                std::string(to_string(mode)) + " data");
}

std::string quality_key(const ImputerSpec& spec) {
  if (spec.kind == ImputerKind::None) return "";
  ImputeMethod m;
  m.kind = spec.kind;
  if (spec.kind == ImputerKind::External) {
    m.external_name = spec.external_name.empty() ? "external" : spec.external_name;
  }
  return m.key();
}

json ConfidenceReport::to_json() const {
  return json{{"pair", {lang_a, lang_b}},
              {"completeness", completeness},
              {"consistency", consistency ? json(*consistency) : json(nullptr)},
              {"imputation_quality", imputation_quality},
              {"feature_count_k", feature_count_k}};
}

ConfidenceReport confidence_report(std::string_view lang_a, std::string_view lang_b,
                                   const FeatureTensor& tensor, const ConfidenceScope& scope,
                                   const ImputerSpec& imputer, AggregationMode mode,
                                   const QualityCache& cache) {
  ConfidenceReport r;
  r.lang_a = tensor.languages()[tensor.language_index(lang_a)].glottocode;
  r.lang_b = tensor.languages()[tensor.language_index(lang_b)].glottocode;
  r.feature_count_k = scope_features(tensor, scope.features).size();
  r.completeness = completeness(lang_a, lang_b, tensor, scope);
  try {
    r.consistency = consistency(lang_a, lang_b, tensor, scope);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoSourcedFeatures) throw;
  }
  r.imputation_quality = imputation_quality(quality_key(imputer), mode, cache);
  return r;
}

}  // namespace typodist
