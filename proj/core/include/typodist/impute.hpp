#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "typodist/aggregate.hpp"
#include "typodist/kb.hpp"

namespace typodist {

enum class ImputerKind { None, Mean, Knn, SoftImpute, External };

struct SoftImputeParams {
  double lambda = 0.0;
  std::size_t rank_cap = 100;
  double tol = 1e-4;
  std::size_t max_iter = 200;
};

// Imputer choice as requested by a caller. Unset parameters are resolved by
// resolve_imputer(): k defaults per mode, lambda by validation-grid search.
struct ImputerSpec {
  ImputerKind kind = ImputerKind::None;
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  std::optional<std::size_t> rank_cap;
  double tol = 1e-4;
  std::size_t max_iter = 200;
  std::string external_name;
  const AggregatedMatrix* external = nullptr;  // pre-imputed matrix for External

  static ImputerSpec none() { return {}; }
  static ImputerSpec mean() {
    ImputerSpec s;
    s.kind = ImputerKind::Mean;
    return s;
  }
  static ImputerSpec knn(std::optional<std::size_t> k = std::nullopt) {
    ImputerSpec s;
    s.kind = ImputerKind::Knn;
    s.k = k;
    return s;
  }
  static ImputerSpec softimpute(std::optional<double> lambda = std::nullopt) {
    ImputerSpec s;
    s.kind = ImputerKind::SoftImpute;
    s.lambda = lambda;
    return s;
  }
};

std::string_view to_string(ImputerKind kind);
std::optional<ImputerKind> parse_imputer(std::string_view text);

// Fully resolved method recorded on an ImputedMatrix.
struct ImputeMethod {
  ImputerKind kind = ImputerKind::Mean;
  std::size_t k = 0;
  SoftImputeParams soft;
  std::string external_name;

  // "mean", "knn", "softimpute", "external:<name>": the key quality runs are
  // cached under.
  std::string key() const;
  std::string describe() const;
};

struct SoftImputeDiagnostics {
  bool converged = true;
  std::size_t iterations = 0;
  // Regularized objective after each iteration.
  std::vector<double> objective;
};

class ImputedMatrix {
 public:
  ImputedMatrix(AggregatedMatrix values, std::vector<std::uint8_t> imputed, ImputeMethod method);

  // Every cell Known.
  const AggregatedMatrix& matrix() const { return values_; }
  AggregationMode mode() const { return values_.mode(); }
  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  double value(std::size_t row, std::size_t col) const { return values_.value(row, col); }
  bool imputed(std::size_t row, std::size_t col) const { return imputed_[row * cols() + col] != 0; }
  const std::vector<std::uint8_t>& imputed_mask() const { return imputed_; }
  const ImputeMethod& method() const { return method_; }

  // Columns that had no Known value and were filled with the global mean.
  std::vector<std::string> all_missing_columns;
  SoftImputeDiagnostics softimpute;

 private:
  AggregatedMatrix values_;
  std::vector<std::uint8_t> imputed_;
  ImputeMethod method_;
};

// Threshold for Union-mode outputs; exactly 0.5 maps to 1.
inline double binarize_prediction(double v) { return v >= 0.5 ? 1.0 : 0.0; }

// Missing cells of dialects take the nearest ancestor's Known value.
// Ancestors are looked up in `registry` by glottocode; Known cells are never
// changed and only originally-Known ancestor values propagate.
AggregatedMatrix fill_dialects(const AggregatedMatrix& matrix,
                               std::span<const LanguageRecord> registry);

ImputedMatrix impute_mean(const AggregatedMatrix& matrix);

// Row-to-row distances are the mean absolute difference over mutually Known
// features; they are computed once and reused for every k.
class KnnImputer {
 public:
  explicit KnnImputer(const AggregatedMatrix& matrix);

  ImputedMatrix impute(std::size_t k) const;
  // NaN when two rows share no Known feature.
  double row_distance(std::size_t a, std::size_t b) const { return dist_[a * n_ + b]; }

 private:
  AggregatedMatrix matrix_;
  std::size_t n_;
  std::vector<double> dist_;
  std::vector<std::vector<std::size_t>> order_;  // per row, others by (distance, index)
  std::vector<double> column_mean_;
};

ImputedMatrix impute_knn(const AggregatedMatrix& matrix, std::size_t k);

ImputedMatrix impute_softimpute(const AggregatedMatrix& matrix, const SoftImputeParams& params);

// ½·Σ_observed (x − z)² + λ·‖Z‖_* for a candidate completion Z (row-major).
double softimpute_objective(const AggregatedMatrix& matrix, std::span<const double> z,
                            double lambda);

// Picks lambda from {0.1, 0.5, 1, 2, 5}·σ₁/100 on a seeded 10% validation
// split (σ₁ of the column-mean-filled matrix), rank_cap = min(dims, 100).
SoftImputeParams default_softimpute_params(const AggregatedMatrix& matrix, std::uint64_t seed);

// Takes a pre-imputed dense matrix (matched by language and feature name) and
// restores every Known value of `matrix` on top of it.
ImputedMatrix impute_external(const AggregatedMatrix& matrix, const AggregatedMatrix& pre_imputed,
                              std::string name);

// Default neighbourhood sizes for k-NN: 9 for union, 15 for average data.
std::size_t default_knn_k(AggregationMode mode);

// Fills unset parameters of `spec` for `matrix`.
ImputeMethod resolve_imputer(const AggregatedMatrix& matrix, const ImputerSpec& spec,
                             std::uint64_t seed);

// Runs a resolved method. ImputerKind::None is rejected.
ImputedMatrix run_imputer(const AggregatedMatrix& matrix, const ImputeMethod& method,
                          const AggregatedMatrix* external = nullptr);

// Optional dialect fill followed by the imputer. Dialect-filled cells count
// as imputed in the resulting mask.
ImputedMatrix impute(const AggregatedMatrix& matrix, std::span<const LanguageRecord> registry,
                     const ImputerSpec& spec, bool dialect_fill, std::uint64_t seed);

// Writes values (same layout as an aggregated matrix) and a sibling 0/1 mask.
void write_imputed_csv(std::ostream& values, std::ostream& mask, const ImputedMatrix& imputed);

}  // namespace typodist
