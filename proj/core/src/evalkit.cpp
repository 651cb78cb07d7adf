#include "typodist/evalkit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "typodist/csv.hpp"
#include "typodist/error.hpp"
#include "typodist/random.hpp"

namespace typodist {
using nlohmann::json;

namespace {

constexpr std::size_t kMinObserved = 5;
constexpr double kDeltaEpsilon = 1e-12;

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<std::size_t> observed_cells(const AggregatedMatrix& m) {
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (m.known(i, j)) cells.push_back(i * m.cols() + j);
    }
  }
  return cells;
}

AggregatedMatrix without(const AggregatedMatrix& m, const std::vector<std::size_t>& cells) {
  AggregatedMatrix out = m;
  for (std::size_t c : cells) out.clear(c / m.cols(), c % m.cols());
  return out;
}

CellMetrics score(AggregationMode mode, std::span<const double> truth,
                  std::span<const double> predicted) {
  CellMetrics m;
  m.count = truth.size();
  if (mode == AggregationMode::Union) {
    m.classification = classification_metrics(truth, predicted);
  } else {
    m.regression = regression_metrics(truth, predicted);
  }
  return m;
}

json metrics_json(const CellMetrics& m) {
  json j{{"count", m.count}};
  if (m.classification) {
    const auto& c = *m.classification;
    j["accuracy"] = c.accuracy;
    j["precision"] = c.precision;
    j["recall"] = c.recall;
    j["f1"] = c.f1;
    j["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
    json flags = json::array();
    if (c.precision_undefined) flags.push_back("precision_undefined");
    if (c.recall_undefined) flags.push_back("recall_undefined");
    if (c.f1_undefined) flags.push_back("f1_undefined");
    j["flags"] = flags;
  }
  if (m.regression) {
    j["rmse"] = m.regression->rmse;
    j["mae"] = m.regression->mae;
  }
  return j;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void metrics_row(std::ostream& os, std::string_view label, const CellMetrics& m) {
  os << std::left << std::setw(16) << label << std::right << std::setw(8) << m.count;
  if (m.classification) {
    const auto& c = *m.classification;
    os << std::setw(10) << fixed(c.accuracy) << std::setw(10) << fixed(c.precision)
       << std::setw(10) << fixed(c.recall) << std::setw(10) << fixed(c.f1);
  }
  if (m.regression) os << std::setw(10) << fixed(m.regression->rmse) << std::setw(10) << fixed(m.regression->mae);
  os << '\n';
}

double kendall_or_zero(std::span<const double> x, std::span<const double> y) {
  try {
    return kendall_tau(x, y).tau;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateInput) throw;
    return 0.0;
  }
}

}  // namespace

ClassificationMetrics classification_metrics(std::span<const double> truth,
                                             std::span<const double> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::InvalidArgument, "truth and prediction lengths differ");
  }
  ClassificationMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] >= 0.5;
    const bool p = binarize_prediction(predicted[i]) == 1.0;
    if (t && p) ++m.tp;
    else if (!t && p) ++m.fp;
    else if (!t && !p) ++m.tn;
    else ++m.fn;
  }
  m.accuracy = ratio(m.tp + m.tn, truth.size());
  m.precision_undefined = m.tp + m.fp == 0;
  m.recall_undefined = m.tp + m.fn == 0;
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1_undefined = m.precision + m.recall == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

RegressionMetrics regression_metrics(std::span<const double> truth,
                                     std::span<const double> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::InvalidArgument, "truth and prediction lengths differ");
  }
  RegressionMetrics m;
  if (truth.empty()) return m;
  double sq = 0.0, abs = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = predicted[i] - truth[i];
    sq += d * d;
    abs += std::fabs(d);
  }
  const auto n = static_cast<double>(truth.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = abs / n;
  return m;
}

// ---------------------------------------------------------------------------

double QualityReport::gamma() const {
  if (mode == AggregationMode::Union) return overall.classification ? overall.classification->f1 : 0.0;
  return overall.regression ? std::clamp(1.0 - overall.regression->rmse, 0.0, 1.0) : 0.0;
}

json QualityReport::to_json() const {
  json per = json::object();
  for (const auto& [cat, m] : per_category) per[std::string(to_string(cat))] = metrics_json(m);
  return json{{"mode", std::string(to_string(mode))},
              {"method", method},
              {"method_detail", method_detail},
              {"seed", seed},
              {"dialect_fill", dialect_fill},
              {"observed_count", observed_count},
              {"masked_count", masked_count},
              {"metrics", metrics_json(overall)},
              {"per_category", per}};
}

std::string QualityReport::to_table() const {
  std::ostringstream os;
  os << "method: " << method_detail << "  mode: " << to_string(mode) << "  seed: " << seed
     << "  dialect_fill: " << (dialect_fill ? "yes" : "no") << '\n';
  os << "observed: " << observed_count << "  masked: " << masked_count << "\n\n";
  os << std::left << std::setw(16) << "scope" << std::right << std::setw(8) << "cells";
  if (mode == AggregationMode::Union) {
    os << std::setw(10) << "accuracy" << std::setw(10) << "precision" << std::setw(10) << "recall"
       << std::setw(10) << "f1";
  } else {
    os << std::setw(10) << "rmse" << std::setw(10) << "mae";
  }
  os << '\n';
  metrics_row(os, "all", overall);
  for (const auto& [cat, m] : per_category) metrics_row(os, to_string(cat), m);
  return os.str();
}

std::vector<std::size_t> quality_mask(const AggregatedMatrix& matrix, std::uint64_t seed) {
  const auto observed = observed_cells(matrix);
  if (observed.size() < kMinObserved) {
    throw Error(ErrorCode::TooFewObserved, "quality test needs at least 5 observed cells, got " +
                                               std::to_string(observed.size()));
  }
  Rng rng(seed);
  auto picks = rng.sample(observed.size(), observed.size() / 5);
  for (auto& p : picks) p = observed[p];
  return picks;
}

QualityReport quality_test(const AggregatedMatrix& matrix, std::span<const LanguageRecord> registry,
                           const ImputerFn& imputer, const std::string& method,
                           std::uint64_t seed, bool dialect_fill) {
  const auto mask = quality_mask(matrix, seed);
  AggregatedMatrix held_out = without(matrix, mask);
  if (dialect_fill) held_out = fill_dialects(held_out, registry);
  const ImputedMatrix imputed = imputer(held_out);
  if (imputed.rows() != matrix.rows() || imputed.cols() != matrix.cols()) {
    throw Error(ErrorCode::InvalidArgument, "imputer changed the matrix shape");
  }

  QualityReport report;
  report.mode = matrix.mode();
  report.method = method;
  report.method_detail = method;
  report.seed = seed;
  report.dialect_fill = dialect_fill;
  report.observed_count = matrix.known_count();
  report.masked_count = mask.size();

  std::vector<double> truth, predicted;
  std::map<FeatureCategory, std::pair<std::vector<double>, std::vector<double>>> by_category;
  for (std::size_t cell : mask) {
    const std::size_t r = cell / matrix.cols(), c = cell % matrix.cols();
    const double t = matrix.value(r, c), p = imputed.value(r, c);
    truth.push_back(t);
    predicted.push_back(p);
    auto& bucket = by_category[matrix.features()[c].category];
    bucket.first.push_back(t);
    bucket.second.push_back(p);
  }
  report.overall = score(report.mode, truth, predicted);
  for (const auto& [cat, bucket] : by_category) {
    report.per_category[cat] = score(report.mode, bucket.first, bucket.second);
  }
  return report;
}

QualityReport quality_test(const AggregatedMatrix& matrix, std::span<const LanguageRecord> registry,
                           const ImputerSpec& spec, std::uint64_t seed, bool dialect_fill) {
  if (spec.kind == ImputerKind::None) {
    throw Error(ErrorCode::InvalidArgument, "quality test needs an imputer");
  }
  std::optional<ImputeMethod> used;
  auto run = [&](const AggregatedMatrix& m) {
    used = resolve_imputer(m, spec, seed);
    return run_imputer(m, *used, spec.external);
  };
  auto report = quality_test(matrix, registry, run, "", seed, dialect_fill);
  report.method = used->key();
  report.method_detail = used->describe();
  return report;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> cv_folds(const AggregatedMatrix& matrix, std::size_t folds,
                                               std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 folds");
  auto observed = observed_cells(matrix);
  if (observed.size() < folds) {
    throw Error(ErrorCode::TooFewObserved, "fewer observed cells than folds");
  }
  Rng rng(seed);
  rng.shuffle(observed);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < observed.size(); ++i) out[i % folds].push_back(observed[i]);
  return out;
}

KSelection knn_select_k(const AggregatedMatrix& matrix, const std::vector<std::size_t>& candidates,
                        std::size_t folds, std::uint64_t seed) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no candidate k");
  std::vector<std::size_t> ks = candidates;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");

  const bool union_mode = matrix.mode() == AggregationMode::Union;
  KSelection sel;
  for (std::size_t k : ks) sel.score[k] = 0.0;

  const auto parts = cv_folds(matrix, folds, seed);
  for (const auto& fold : parts) {
    const KnnImputer imputer(without(matrix, fold));
    std::vector<double> truth;
    for (std::size_t c : fold) truth.push_back(matrix.value(c / matrix.cols(), c % matrix.cols()));
    for (std::size_t k : ks) {
      const auto imputed = imputer.impute(k);
      std::vector<double> predicted;
      for (std::size_t c : fold) predicted.push_back(imputed.value(c / matrix.cols(), c % matrix.cols()));
      sel.score[k] += union_mode ? classification_metrics(truth, predicted).f1
                                 : regression_metrics(truth, predicted).rmse;
    }
  }
  for (auto& [k, s] : sel.score) s /= static_cast<double>(parts.size());

  sel.k = ks.front();
  for (std::size_t k : ks) {
    const double s = sel.score[k], best = sel.score[sel.k];
    if (union_mode ? s > best : s < best) sel.k = k;
  }
  return sel;
}

// ---------------------------------------------------------------------------

CorrelationResult kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "tau inputs differ in length");
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "tau needs at least 2 observations");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) {
    throw Error(ErrorCode::DegenerateInput, "tau is undefined for a constant input");
  }

  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0) ++tied_x;
      if (dy == 0.0) ++tied_y;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0) == (dy > 0)) ++concordant;
      else ++discordant;
    }
  }
  const auto n0 = static_cast<double>(n * (n - 1) / 2);
  const double denom =
      std::sqrt((n0 - static_cast<double>(tied_x)) * (n0 - static_cast<double>(tied_y)));
  return {static_cast<double>(concordant - discordant) / denom, n};
}

PermTestResult perm_both_test(std::span<const double> scores_a, std::span<const double> scores_b,
                              std::span<const double> reference, std::size_t iterations,
                              std::uint64_t seed) {
  const std::size_t n = reference.size();
  if (scores_a.size() != n || scores_b.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "score lists differ in length");
  }
  if (iterations < 100) throw Error(ErrorCode::InvalidArgument, "need at least 100 iterations");

  PermTestResult out;
  out.iterations = iterations;
  out.seed = seed;
  out.observed_delta =
      std::fabs(kendall_tau(scores_a, reference).tau - kendall_tau(scores_b, reference).tau);

  std::size_t extreme = 0;
  std::vector<double> a(n), b(n);
  for (std::size_t it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, it));
    for (std::size_t i = 0; i < n; ++i) {
      const bool swap = rng.coin();
      a[i] = swap ? scores_b[i] : scores_a[i];
      b[i] = swap ? scores_a[i] : scores_b[i];
    }
    const double delta = std::fabs(kendall_or_zero(a, reference) - kendall_or_zero(b, reference));
    if (delta >= out.observed_delta - kDeltaEpsilon) ++extreme;
  }
  out.p_value = static_cast<double>(1 + extreme) / static_cast<double>(1 + iterations);
  return out;
}

std::vector<CaseStudyRow> read_case_study(std::istream& in, const std::string& origin) {
  const auto rows = csv::read_table(in, origin, {"pair", "dist_a", "dist_b", "g_d"});
  std::vector<CaseStudyRow> out;
  for (const auto& row : rows) {
    auto number = [&](std::size_t idx) {
      const std::string& s = row.fields[idx];
      double v = 0.0;
      auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
        csv::fail(origin, row.line, "'" + s + "' is not a number");
      }
      return v;
    };
    out.push_back({row.fields[0], number(1), number(2), number(3)});
  }
  if (out.size() < 2) csv::fail(origin, 1, "case study needs at least 2 rows");
  return out;
}

json CaseStudyResult::to_json() const {
  return json{{"n_pairs", tau_a.n_pairs},
              {"tau_a", tau_a.tau},
              {"tau_b", tau_b.tau},
              {"perm_both",
               {{"observed_delta", perm.observed_delta},
                {"p_value", perm.p_value},
                {"iterations", perm.iterations},
                {"seed", perm.seed}}}};
}

std::string CaseStudyResult::to_table() const {
  std::ostringstream os;
  os << "pairs:              " << tau_a.n_pairs << '\n'
     << "tau(dist_a, g_d):   " << fixed(tau_a.tau) << '\n'
     << "tau(dist_b, g_d):   " << fixed(tau_b.tau) << '\n'
     << "observed |delta|:   " << fixed(perm.observed_delta) << '\n'
     << "perm-both p:        " << fixed(perm.p_value) << "  (" << perm.iterations
     << " iterations, seed " << perm.seed << ")\n";
  return os.str();
}

CaseStudyResult run_case_study(const std::vector<CaseStudyRow>& rows, std::size_t iterations,
                               std::uint64_t seed) {
  std::vector<double> a, b, g;
  for (const auto& r : rows) {
    a.push_back(r.dist_a);
    b.push_back(r.dist_b);
    g.push_back(r.g_d);
  }
  return {kendall_tau(a, g), kendall_tau(b, g), perm_both_test(a, b, g, iterations, seed)};
}

// ---------------------------------------------------------------------------

std::size_t CoverageReport::count(FeatureCategory category, ResourceTier tier) const {
  auto c = counts.find(category);
  if (c == counts.end()) return 0;
  auto t = c->second.find(tier);
  return t == c->second.end() ? 0 : t->second;
}

json CoverageReport::to_json() const {
  json cats = json::object();
  for (const auto& [cat, tiers] : counts) {
    json row = json::object();
    for (const auto& [tier, n] : tiers) row[std::string(to_string(tier))] = n;
    row["total"] = totals.at(cat);
    cats[std::string(to_string(cat))] = row;
  }
  return json{{"languages", languages},
              {"typological_eligible", typological_eligible},
              {"categories", cats}};
}

std::string CoverageReport::to_table() const {
  constexpr std::array tiers{ResourceTier::HRL, ResourceTier::MRL, ResourceTier::LRL,
                             ResourceTier::Unknown};
  std::ostringstream os;
  os << std::left << std::setw(16) << "category" << std::right;
  for (auto t : tiers) os << std::setw(9) << to_string(t);
  os << std::setw(9) << "total" << '\n';
  for (const auto& [cat, row] : counts) {
    os << std::left << std::setw(16) << to_string(cat) << std::right;
    for (auto t : tiers) os << std::setw(9) << count(cat, t);
    os << std::setw(9) << totals.at(cat) << '\n';
  }
  os << "\nlanguages: " << languages << "  eligible for typological distance: "
     << typological_eligible << '\n';
  return os.str();
}

CoverageReport coverage_report(const FeatureTensor& tensor,
                               const std::map<std::string, ResourceTier>& tiers) {
  const auto& langs = tensor.languages();
  std::vector<std::array<bool, kAllCategories.size()>> has(langs.size());
  for (auto& h : has) h.fill(false);
  tensor.for_each_cell([&](std::size_t l, std::size_t f, std::size_t, double) {
    has[l][static_cast<std::size_t>(tensor.features()[f].category)] = true;
  });

  CoverageReport report;
  report.languages = langs.size();
  for (auto cat : kAllCategories) {
    report.totals[cat] = 0;
    for (auto tier : {ResourceTier::HRL, ResourceTier::MRL, ResourceTier::LRL, ResourceTier::Unknown}) {
      report.counts[cat][tier] = 0;
    }
  }
  for (std::size_t l = 0; l < langs.size(); ++l) {
    auto it = tiers.find(langs[l].glottocode);
    const ResourceTier tier = it != tiers.end() ? it->second : langs[l].resource_tier;
    bool typological = false;
    for (auto cat : kAllCategories) {
      if (!has[l][static_cast<std::size_t>(cat)]) continue;
      ++report.counts[cat][tier];
      ++report.totals[cat];
      typological = typological || is_typological(cat);
    }
    if (typological) ++report.typological_eligible;
  }
  return report;
}

}  // namespace typodist
