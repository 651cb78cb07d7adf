#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "typodist/aggregate.hpp"
#include "typodist/impute.hpp"
#include "typodist/kb.hpp"

namespace typodist {

// ---------------------------------------------------------------------------
// Metrics

struct ClassificationMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the corresponding denominator was 0 and the metric reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct RegressionMetrics {
  double rmse = 0.0;
  double mae = 0.0;
};

// Truth counts as positive at >= 0.5, predictions go through binarize_prediction.
ClassificationMetrics classification_metrics(std::span<const double> truth,
                                             std::span<const double> predicted);
RegressionMetrics regression_metrics(std::span<const double> truth,
                                     std::span<const double> predicted);

struct CellMetrics {
  std::size_t count = 0;
  std::optional<ClassificationMetrics> classification;  // Union
  std::optional<RegressionMetrics> regression;          // Average
};

// ---------------------------------------------------------------------------
// Imputation quality test

struct QualityReport {
  AggregationMode mode = AggregationMode::Union;
  std::string method;  // ImputeMethod::key()
  std::string method_detail;
  std::uint64_t seed = 0;
  bool dialect_fill = false;
  std::size_t observed_count = 0;
  std::size_t masked_count = 0;
  CellMetrics overall;
  std::map<FeatureCategory, CellMetrics> per_category;

  // F1 for Union, 1 − RMSE for Average.
  double gamma() const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Indices (row * cols + col) of the cells a quality test with `seed` holds
// out: ⌊0.2·N⌋ observed cells drawn uniformly, in draw order.
std::vector<std::size_t> quality_mask(const AggregatedMatrix& matrix, std::uint64_t seed);

using ImputerFn = std::function<ImputedMatrix(const AggregatedMatrix&)>;

// Holds out 20% of the Known cells, optionally fills dialects from the
// masked copy, imputes and scores the predictions for the held-out cells.
// Throws TooFewObserved below 5 Known cells.
QualityReport quality_test(const AggregatedMatrix& matrix, std::span<const LanguageRecord> registry,
                           const ImputerSpec& spec, std::uint64_t seed, bool dialect_fill = false);
QualityReport quality_test(const AggregatedMatrix& matrix, std::span<const LanguageRecord> registry,
                           const ImputerFn& imputer, const std::string& method,
                           std::uint64_t seed, bool dialect_fill = false);

// ---------------------------------------------------------------------------
// k selection for k-NN

struct KSelection {
  std::size_t k = 0;
  std::map<std::size_t, double> score;  // mean F1 (Union) or RMSE (Average) per k
};

inline const std::vector<std::size_t> kDefaultKCandidates{3, 6, 9, 12, 15};

// Fold f of the observed cells; every observed cell lands in exactly one.
std::vector<std::vector<std::size_t>> cv_folds(const AggregatedMatrix& matrix, std::size_t folds,
                                               std::uint64_t seed);

// Cross-validated k: maximizes mean F1 for Union, minimizes mean RMSE for
// Average; ties go to the smaller k.
KSelection knn_select_k(const AggregatedMatrix& matrix,
                        const std::vector<std::size_t>& candidates = kDefaultKCandidates,
                        std::size_t folds = 5, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Rank correlation and the Perm-Both test

struct CorrelationResult {
  double tau = 0.0;
  std::size_t n_pairs = 0;
};

// Kendall tau-b. Throws DegenerateInput when either list is constant.
CorrelationResult kendall_tau(std::span<const double> x, std::span<const double> y);

struct PermTestResult {
  double observed_delta = 0.0;
  double p_value = 1.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
};

// Index-wise swap permutation test for |τ(a,ref) − τ(b,ref)|. Each iteration
// draws from its own stream derive_seed(seed, i).
PermTestResult perm_both_test(std::span<const double> scores_a, std::span<const double> scores_b,
                              std::span<const double> reference, std::size_t iterations,
                              std::uint64_t seed);

struct CaseStudyRow {
  std::string pair;
  double dist_a = 0.0;
  double dist_b = 0.0;
  double g_d = 0.0;
};

// CSV `pair,dist_a,dist_b,g_d`.
std::vector<CaseStudyRow> read_case_study(std::istream& in, const std::string& origin);

struct CaseStudyResult {
  CorrelationResult tau_a;
  CorrelationResult tau_b;
  PermTestResult perm;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

CaseStudyResult run_case_study(const std::vector<CaseStudyRow>& rows, std::size_t iterations,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Coverage

struct CoverageReport {
  // category -> tier -> languages with at least one Known cell in the category
  std::map<FeatureCategory, std::map<ResourceTier, std::size_t>> counts;
  std::map<FeatureCategory, std::size_t> totals;
  std::size_t languages = 0;
  std::size_t typological_eligible = 0;

  std::size_t count(FeatureCategory category, ResourceTier tier) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

// `tiers` overrides the registry tier per glottocode.
CoverageReport coverage_report(const FeatureTensor& tensor,
                               const std::map<std::string, ResourceTier>& tiers = {});

}  // namespace typodist
