#include "typodist/impute.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "typodist/csv.hpp"
#include "typodist/error.hpp"
#include "typodist/random.hpp"

namespace typodist {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ImputeMethod mean_method() {
  ImputeMethod m;
  m.kind = ImputerKind::Mean;
  return m;
}

ImputeMethod knn_method(std::size_t k) {
  ImputeMethod m;
  m.kind = ImputerKind::Knn;
  m.k = k;
  return m;
}

std::vector<std::uint8_t> missing_mask(const AggregatedMatrix& m) {
  std::vector<std::uint8_t> mask(m.rows() * m.cols(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) mask[i * m.cols() + j] = m.known(i, j) ? 0 : 1;
  }
  return mask;
}

struct ColumnMeans {
  std::vector<double> mean;
  std::vector<std::string> all_missing;
};

// Columns without Known values fall back to the global mean (0 for an empty
// matrix).
ColumnMeans column_means(const AggregatedMatrix& m) {
  ColumnMeans out;
  out.mean.assign(m.cols(), 0.0);
  std::vector<std::size_t> count(m.cols(), 0);
  double total = 0.0;
  std::size_t total_n = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!m.known(i, j)) continue;
      out.mean[j] += m.value(i, j);
      ++count[j];
      total += m.value(i, j);
      ++total_n;
    }
  }
  const double global = total_n ? total / static_cast<double>(total_n) : 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    if (count[j]) {
      out.mean[j] /= static_cast<double>(count[j]);
    } else {
      out.mean[j] = global;
      out.all_missing.push_back(m.features()[j].name);
    }
  }
  return out;
}

// Copies Known cells verbatim and fills the rest from `fill`, applying the
// mode's output rules (clamp; Union rounds at 0.5).
ImputedMatrix finish(const AggregatedMatrix& m, const std::vector<double>& fill,
                     ImputeMethod method) {
  AggregatedMatrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (m.known(i, j)) continue;
      double v = std::clamp(fill[i * m.cols() + j], 0.0, 1.0);
      if (m.mode() == AggregationMode::Union) v = binarize_prediction(v);
      out.set(i, j, v);
    }
  }
  return ImputedMatrix(std::move(out), missing_mask(m), std::move(method));
}

}  // namespace

std::string_view to_string(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::None: return "none";
    case ImputerKind::Mean: return "mean";
    case ImputerKind::Knn: return "knn";
    case ImputerKind::SoftImpute: return "softimpute";
    case ImputerKind::External: return "external";
  }
  return "none";
}

std::optional<ImputerKind> parse_imputer(std::string_view text) {
  if (text == "none") return ImputerKind::None;
  if (text == "mean") return ImputerKind::Mean;
  if (text == "knn" || text == "k-nn") return ImputerKind::Knn;
  if (text == "softimpute" || text == "soft") return ImputerKind::SoftImpute;
  if (text == "external") return ImputerKind::External;
  return std::nullopt;
}

std::string ImputeMethod::key() const {
  if (kind == ImputerKind::External) return "external:" + external_name;
  return std::string(to_string(kind));
}

std::string ImputeMethod::describe() const {
  switch (kind) {
    case ImputerKind::Knn: return "knn(k=" + std::to_string(k) + ")";
    case ImputerKind::SoftImpute:
      return "softimpute(lambda=" + csv::format_number(soft.lambda) +
             ", rank_cap=" + std::to_string(soft.rank_cap) + ")";
    default: return key();
  }
}

ImputedMatrix::ImputedMatrix(AggregatedMatrix values, std::vector<std::uint8_t> imputed,
                             ImputeMethod method)
    : values_(std::move(values)), imputed_(std::move(imputed)), method_(std::move(method)) {
  if (imputed_.size() != values_.rows() * values_.cols()) {
    throw Error(ErrorCode::InvalidArgument, "imputation mask does not match matrix shape");
  }
}

// ---------------------------------------------------------------------------

AggregatedMatrix fill_dialects(const AggregatedMatrix& matrix,
                               std::span<const LanguageRecord> registry) {
  std::unordered_map<std::string, const LanguageRecord*> by_code;
  for (const auto& r : registry) by_code.emplace(r.glottocode, &r);

  AggregatedMatrix out = matrix;
  for (std::size_t row = 0; row < matrix.rows(); ++row) {
    auto self = by_code.find(matrix.languages()[row]);
    if (self == by_code.end() || !self->second->parent) continue;

    // Nearest-first ancestors that have a row in the matrix.
    std::vector<std::size_t> ancestors;
    std::unordered_set<std::string> seen{self->second->glottocode};
    auto parent = self->second->parent;
    while (parent && seen.insert(*parent).second) {
      if (auto r = matrix.find_language(*parent)) ancestors.push_back(*r);
      auto it = by_code.find(*parent);
      parent = it == by_code.end() ? std::nullopt : it->second->parent;
    }
    if (ancestors.empty()) continue;

    for (std::size_t col = 0; col < matrix.cols(); ++col) {
      if (matrix.known(row, col)) continue;
      for (std::size_t a : ancestors) {
        if (matrix.known(a, col)) {
          out.set(row, col, matrix.value(a, col));
          break;
        }
      }
    }
  }
  return out;
}

ImputedMatrix impute_mean(const AggregatedMatrix& matrix) {
  const auto means = column_means(matrix);
  std::vector<double> fill(matrix.rows() * matrix.cols());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) fill[i * matrix.cols() + j] = means.mean[j];
  }
  auto out = finish(matrix, fill, mean_method());
  out.all_missing_columns = means.all_missing;
  return out;
}

// ---------------------------------------------------------------------------

KnnImputer::KnnImputer(const AggregatedMatrix& matrix)
    : matrix_(matrix), n_(matrix.rows()), dist_(n_ * n_, std::numeric_limits<double>::quiet_NaN()) {
  if (n_ < 2) throw Error(ErrorCode::InvalidArgument, "k-NN imputation needs at least 2 languages");
  const std::size_t cols = matrix.cols();
  for (std::size_t a = 0; a < n_; ++a) {
    for (std::size_t b = a + 1; b < n_; ++b) {
      double sum = 0.0;
      std::size_t shared = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        if (matrix.known(a, j) && matrix.known(b, j)) {
          sum += std::abs(matrix.value(a, j) - matrix.value(b, j));
          ++shared;
        }
      }
      if (shared) dist_[a * n_ + b] = dist_[b * n_ + a] = sum / static_cast<double>(shared);
    }
  }
  order_.resize(n_);
  for (std::size_t a = 0; a < n_; ++a) {
    auto& order = order_[a];
    for (std::size_t b = 0; b < n_; ++b) {
      if (b != a && !std::isnan(dist_[a * n_ + b])) order.push_back(b);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      const double dx = dist_[a * n_ + x], dy = dist_[a * n_ + y];
      return dx != dy ? dx < dy : x < y;
    });
  }
  column_mean_ = column_means(matrix).mean;
}

ImputedMatrix KnnImputer::impute(std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  const std::size_t cols = matrix_.cols();
  std::vector<double> fill(n_ * cols, 0.0);
  for (std::size_t l = 0; l < n_; ++l) {
    for (std::size_t f = 0; f < cols; ++f) {
      if (matrix_.known(l, f)) continue;
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t other : order_[l]) {
        if (!matrix_.known(other, f)) continue;
        sum += matrix_.value(other, f);
        if (++used == k) break;
      }
      fill[l * cols + f] = used ? sum / static_cast<double>(used) : column_mean_[f];
    }
  }
  return finish(matrix_, fill, knn_method(k));
}

ImputedMatrix impute_knn(const AggregatedMatrix& matrix, std::size_t k) {
  return KnnImputer(matrix).impute(k);
}

// ---------------------------------------------------------------------------

double softimpute_objective(const AggregatedMatrix& matrix, std::span<const double> z,
                            double lambda) {
  const std::size_t rows = matrix.rows(), cols = matrix.cols();
  if (z.size() != rows * cols) throw Error(ErrorCode::InvalidArgument, "shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!matrix.known(i, j)) continue;
      const double d = matrix.value(i, j) - z[i * cols + j];
      loss += d * d;
    }
  }
  Eigen::Map<const RowMatrix> zm(z.data(), static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(cols));
  const Eigen::MatrixXd dense = zm;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense);
  return 0.5 * loss + lambda * svd.singularValues().sum();
}

ImputedMatrix impute_softimpute(const AggregatedMatrix& matrix, const SoftImputeParams& params) {
  if (!(params.lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (params.rank_cap < 1) throw Error(ErrorCode::InvalidArgument, "rank_cap must be >= 1");
  if (!(params.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");

  ImputeMethod method;
  method.kind = ImputerKind::SoftImpute;
  method.soft = params;
  const std::size_t rows = matrix.rows(), cols = matrix.cols();
  const auto mask = missing_mask(matrix);
  if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) {
    return ImputedMatrix(matrix, mask, method);
  }

  const auto means = column_means(matrix);
  RowMatrix observed = RowMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  RowMatrix z(observed.rows(), observed.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      if (matrix.known(i, j)) {
        observed(ii, jj) = matrix.value(i, j);
        z(ii, jj) = matrix.value(i, j);
      } else {
        z(ii, jj) = means.mean[j];
      }
    }
  }
  Eigen::Map<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      missing(mask.data(), observed.rows(), observed.cols());
  const RowMatrix missing_d = missing.cast<double>();
  const RowMatrix observed_d = RowMatrix::Ones(observed.rows(), observed.cols()) - missing_d;

  const auto rank = static_cast<Eigen::Index>(std::min({params.rank_cap, rows, cols}));
  SoftImputeDiagnostics diag;
  diag.converged = false;
  for (std::size_t iter = 1; iter <= params.max_iter; ++iter) {
    const RowMatrix filled = observed + missing_d.cwiseProduct(z);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(filled),
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = (svd.singularValues().head(rank).array() - params.lambda).max(0.0);
    const RowMatrix next = svd.matrixU().leftCols(rank) * s.asDiagonal() *
                           svd.matrixV().leftCols(rank).transpose();

    const double prev_norm = z.squaredNorm();
    const double delta = (next - z).squaredNorm();
    const double change = prev_norm > 0.0 ? delta / prev_norm : (delta > 0.0 ? 1.0 : 0.0);
    z = next;

    const double fit = observed_d.cwiseProduct(observed - z).squaredNorm();
    diag.objective.push_back(0.5 * fit + params.lambda * s.sum());
    diag.iterations = iter;
    if (change < params.tol) {
      diag.converged = true;
      break;
    }
  }

  std::vector<double> fill(z.data(), z.data() + z.size());
  auto out = finish(matrix, fill, method);
  out.softimpute = std::move(diag);
  return out;
}

SoftImputeParams default_softimpute_params(const AggregatedMatrix& matrix, std::uint64_t seed) {
  SoftImputeParams base;
  base.rank_cap = std::max<std::size_t>(1, std::min({matrix.rows(), matrix.cols(), std::size_t{100}}));
  const auto means = column_means(matrix);
  Eigen::MatrixXd filled(matrix.rows(), matrix.cols());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      filled(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          matrix.known(i, j) ? matrix.value(i, j) : means.mean[j];
    }
  }
  const double sigma1 = filled.size() ? Eigen::BDCSVD<Eigen::MatrixXd>(filled).singularValues()(0) : 0.0;
  const double unit = sigma1 / 100.0;
  base.lambda = unit;

  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (matrix.known(i, j)) cells.emplace_back(i, j);
    }
  }
  const std::size_t holdout = cells.size() / 10;
  if (holdout < 5 || unit <= 0.0) return base;

  Rng rng(derive_seed(seed, 0x50f7));
  AggregatedMatrix train = matrix;
  std::vector<std::pair<std::size_t, std::size_t>> held;
  for (std::size_t idx : rng.sample(cells.size(), holdout)) {
    held.push_back(cells[idx]);
    train.clear(cells[idx].first, cells[idx].second);
  }

  double best_score = std::numeric_limits<double>::infinity();
  for (double factor : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    SoftImputeParams p = base;
    p.lambda = factor * unit;
    const auto imputed = impute_softimpute(train, p);
    double score = 0.0;
    if (matrix.mode() == AggregationMode::Average) {
      for (auto [i, j] : held) {
        const double d = imputed.value(i, j) - matrix.value(i, j);
        score += d * d;
      }
    } else {
      // Negative F1 so that lower is better in both modes.
      std::size_t tp = 0, fp = 0, fn = 0;
      for (auto [i, j] : held) {
        const bool pred = imputed.value(i, j) >= 0.5;
        const bool truth = matrix.value(i, j) >= 0.5;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
      }
      score = tp ? -2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    }
    if (score < best_score) {
      best_score = score;
      base.lambda = p.lambda;
    }
  }
  return base;
}

ImputedMatrix impute_external(const AggregatedMatrix& matrix, const AggregatedMatrix& pre_imputed,
                              std::string name) {
  std::vector<double> fill(matrix.rows() * matrix.cols(), 0.0);
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    auto r = pre_imputed.find_language(matrix.languages()[i]);
    if (!r) {
      throw Error(ErrorCode::FormatError,
                  "external imputation lacks language " + matrix.languages()[i]);
    }
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (matrix.known(i, j)) continue;
      auto c = pre_imputed.find_feature(matrix.features()[j].name);
      if (!c) {
        throw Error(ErrorCode::FormatError,
                    "external imputation lacks feature " + matrix.features()[j].name);
      }
      if (!pre_imputed.known(*r, *c)) {
        throw Error(ErrorCode::FormatError, "external imputation is not dense at (" +
                                                matrix.languages()[i] + ", " +
                                                matrix.features()[j].name + ")");
      }
      fill[i * matrix.cols() + j] = pre_imputed.value(*r, *c);
    }
  }
  ImputeMethod method;
  method.kind = ImputerKind::External;
  method.external_name = std::move(name);
  return finish(matrix, fill, method);
}

std::size_t default_knn_k(AggregationMode mode) { return mode == AggregationMode::Union ? 9 : 15; }

ImputeMethod resolve_imputer(const AggregatedMatrix& matrix, const ImputerSpec& spec,
                             std::uint64_t seed) {
  ImputeMethod m;
  m.kind = spec.kind;
  switch (spec.kind) {
    case ImputerKind::None:
    case ImputerKind::Mean:
      break;
    case ImputerKind::Knn:
      m.k = spec.k.value_or(default_knn_k(matrix.mode()));
      break;
    case ImputerKind::SoftImpute: {
      if (spec.lambda) {
        m.soft.lambda = *spec.lambda;
        m.soft.rank_cap =
            std::max<std::size_t>(1, std::min({matrix.rows(), matrix.cols(), std::size_t{100}}));
      } else {
        m.soft = default_softimpute_params(matrix, seed);
      }
      if (spec.rank_cap) m.soft.rank_cap = *spec.rank_cap;
      m.soft.tol = spec.tol;
      m.soft.max_iter = spec.max_iter;
      break;
    }
    case ImputerKind::External:
      m.external_name = spec.external_name.empty() ? "external" : spec.external_name;
      break;
  }
  return m;
}

ImputedMatrix run_imputer(const AggregatedMatrix& matrix, const ImputeMethod& method,
                          const AggregatedMatrix* external) {
  switch (method.kind) {
    case ImputerKind::Mean: return impute_mean(matrix);
    case ImputerKind::Knn: return impute_knn(matrix, method.k);
    case ImputerKind::SoftImpute: return impute_softimpute(matrix, method.soft);
    case ImputerKind::External:
      if (!external) throw Error(ErrorCode::InvalidArgument, "external imputer needs a matrix file");
      return impute_external(matrix, *external, method.external_name);
    case ImputerKind::None: break;
  }
  throw Error(ErrorCode::InvalidArgument, "no imputer selected");
}

ImputedMatrix impute(const AggregatedMatrix& matrix, std::span<const LanguageRecord> registry,
                     const ImputerSpec& spec, bool dialect_fill, std::uint64_t seed) {
  const AggregatedMatrix prepared = dialect_fill ? fill_dialects(matrix, registry) : matrix;
  const auto method = resolve_imputer(prepared, spec, seed);
  auto result = run_imputer(prepared, method, spec.external);
  if (!dialect_fill) return result;
  ImputedMatrix merged(result.matrix(), missing_mask(matrix), result.method());
  merged.all_missing_columns = std::move(result.all_missing_columns);
  merged.softimpute = std::move(result.softimpute);
  return merged;
}

void write_imputed_csv(std::ostream& values, std::ostream& mask, const ImputedMatrix& imputed) {
  write_matrix_csv(values, imputed.matrix());
  std::vector<std::string> fields{"language"};
  for (const auto& f : imputed.matrix().features()) fields.push_back(f.name);
  csv::write_row(mask, fields);
  for (std::size_t i = 0; i < imputed.rows(); ++i) {
    fields.assign(1, imputed.matrix().languages()[i]);
    for (std::size_t j = 0; j < imputed.cols(); ++j) fields.push_back(imputed.imputed(i, j) ? "1" : "0");
    csv::write_row(mask, fields);
  }
}

}  // namespace typodist
