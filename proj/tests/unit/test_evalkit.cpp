#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "builders.hpp"
#include "typodist/error.hpp"
#include "typodist/evalkit.hpp"

using namespace typodist;
using namespace typodist::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

// tau-b from tie-group sizes: (C − D) / sqrt((n0 − n1)(n0 − n2)).
std::optional<double> tau_b_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double c = 0, d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double s = (x[i] - x[j]) * (y[i] - y[j]);
      if (s > 0) ++c;
      if (s < 0) ++d;
    }
  }
  auto ties = [](const std::vector<double>& v) {
    std::map<double, double> groups;
    for (double a : v) groups[a] += 1;
    double t = 0;
    for (const auto& [_, g] : groups) t += g * (g - 1) / 2;
    return t;
  };
  const double n0 = n * (n - 1) / 2.0;
  const double denom = (n0 - ties(x)) * (n0 - ties(y));
  if (denom == 0) return std::nullopt;
  return (c - d) / std::sqrt(denom);
}

std::vector<CaseStudyRow> case_study_rows() {
  std::ifstream in(std::filesystem::path(TYPODIST_SOURCE_DIR) / "data/case_study.csv");
  return read_case_study(in, "case_study.csv");
}

AggregatedMatrix binary_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double missing) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> data(rows, std::vector<double>(cols));
  for (auto& r : data) {
    for (auto& v : r) v = u(rng) < missing ? NA : (u(rng) < 0.5 ? 0.0 : 1.0);
  }
  return make_matrix(AggregationMode::Union, data);
}

}  // namespace

TEST(Kendall, PerfectConcordanceAndDiscordance) {
  const std::vector<double> x{1, 2, 3}, up{1, 2, 3}, down{3, 2, 1};
  EXPECT_DOUBLE_EQ(kendall_tau(x, up).tau, 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(x, down).tau, -1.0);
  EXPECT_EQ(kendall_tau(x, up).n_pairs, 3u);
}

TEST(Kendall, DegenerateAndInvalidInput) {
  const std::vector<double> x{1, 2, 3}, c{2, 2, 2}, shorter{1, 2};
  EXPECT_EQ(code_of([&] { kendall_tau(x, c); }), ErrorCode::DegenerateInput);
  EXPECT_EQ(code_of([&] { kendall_tau(x, shorter); }), ErrorCode::InvalidArgument);
  const std::vector<double> one{1};
  EXPECT_EQ(code_of([&] { kendall_tau(one, one); }), ErrorCode::InvalidArgument);
}

TEST(Kendall, MatchesTieGroupOracle) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(rng() % 5);
    for (auto& v : y) v = static_cast<double>(rng() % 5);
    const auto expected = tau_b_oracle(x, y);
    if (!expected) {
      EXPECT_THROW(kendall_tau(x, y), Error);
      continue;
    }
    EXPECT_NEAR(kendall_tau(x, y).tau, *expected, 1e-12);
  }
}

TEST(Kendall, AntisymmetricUnderNegation) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(10), y(10), neg(10);
    for (std::size_t i = 0; i < 10; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
      neg[i] = -y[i];
    }
    EXPECT_DOUBLE_EQ(kendall_tau(x, neg).tau, -kendall_tau(x, y).tau);
  }
}

TEST(Kendall, CaseStudyTable) {
  const auto rows = case_study_rows();
  ASSERT_EQ(rows.size(), 20u);
  std::vector<double> a, b, g;
  for (const auto& r : rows) {
    a.push_back(r.dist_a);
    b.push_back(r.dist_b);
    g.push_back(r.g_d);
  }
  EXPECT_NEAR(kendall_tau(a, g).tau, -0.05, 0.01);
  EXPECT_NEAR(kendall_tau(b, g).tau, 0.19, 0.01);
  EXPECT_NEAR(kendall_tau(a, g).tau, *tau_b_oracle(a, g), 1e-12);
  EXPECT_NEAR(kendall_tau(b, g).tau, *tau_b_oracle(b, g), 1e-12);
}

TEST(PermBoth, IdenticalScoresGiveOne) {
  const std::vector<double> a{0.1, 0.5, 0.3, 0.9, 0.7}, ref{1, 2, 3, 4, 5};
  const auto r = perm_both_test(a, a, ref, 500, 3);
  EXPECT_EQ(r.observed_delta, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(PermBoth, ConvergesToExhaustiveEnumeration) {
  const std::vector<double> a{0.1, 0.4, 0.35, 0.8}, b{0.9, 0.2, 0.6, 0.3}, ref{1, 2, 3, 4};
  auto tau0 = [](const std::vector<double>& x, const std::vector<double>& y) {
    return tau_b_oracle(x, y).value_or(0.0);
  };
  const double observed = std::fabs(tau0(a, ref) - tau0(b, ref));
  int extreme = 0;
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<double> x = a, y = b;
    for (int i = 0; i < 4; ++i) {
      if (mask & (1 << i)) std::swap(x[i], y[i]);
    }
    if (std::fabs(tau0(x, ref) - tau0(y, ref)) >= observed - 1e-12) ++extreme;
  }
  const double exact = extreme / 16.0;
  const auto r = perm_both_test(a, b, ref, 200000, 11);
  EXPECT_NEAR(r.observed_delta, observed, 1e-12);
  EXPECT_NEAR(r.p_value, exact, 0.006);
}

TEST(PermBoth, SeededAndSymmetricInDistribution) {
  const auto rows = case_study_rows();
  std::vector<double> a, b, g;
  for (const auto& r : rows) {
    a.push_back(r.dist_a);
    b.push_back(r.dist_b);
    g.push_back(r.g_d);
  }
  const auto first = perm_both_test(a, b, g, 2000, 5);
  const auto again = perm_both_test(a, b, g, 2000, 5);
  EXPECT_EQ(first.p_value, again.p_value);
  const auto swapped = perm_both_test(b, a, g, 2000, 5);
  EXPECT_EQ(swapped.observed_delta, first.observed_delta);
  EXPECT_NEAR(swapped.p_value, first.p_value, 0.05);
  EXPECT_THROW(perm_both_test(a, b, g, 99, 5), Error);
}

TEST(CaseStudy, ReaderValidatesNumbers) {
  std::istringstream bad("pair,dist_a,dist_b,g_d\nx-y,0.1,0.2,0.3\nx-z,abc,0.2,0.3\n");
  try {
    read_case_study(bad, "cs.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
    EXPECT_NE(std::string(e.what()).find("cs.csv:3"), std::string::npos) << e.what();
  }
  std::istringstream one("pair,dist_a,dist_b,g_d\nx-y,0.1,0.2,0.3\n");
  EXPECT_THROW(read_case_study(one, "cs.csv"), Error);
}

TEST(CaseStudy, JsonShape) {
  const auto r = run_case_study(case_study_rows(), 1000, 0);
  const auto j = r.to_json();
  EXPECT_EQ(j["n_pairs"], 20);
  EXPECT_EQ(j["perm_both"]["iterations"], 1000);
  EXPECT_FALSE(r.to_table().empty());
}

TEST(Metrics, ConstantZeroPredictor) {
  const std::vector<double> truth{1, 1, 0, 0}, zeros{0, 0, 0, 0};
  const auto m = classification_metrics(truth, zeros);
  EXPECT_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_FALSE(m.recall_undefined);
  EXPECT_EQ(m.tn, 2u);
  EXPECT_EQ(m.fn, 2u);
}

TEST(Metrics, HalfCountsAsPositive) {
  const std::vector<double> truth{1}, half{0.5};
  EXPECT_EQ(classification_metrics(truth, half).tp, 1u);
}

TEST(Metrics, Regression) {
  const std::vector<double> truth{0, 1}, pred{0.5, 0.5};
  const auto m = regression_metrics(truth, pred);
  EXPECT_DOUBLE_EQ(m.rmse, 0.5);
  EXPECT_DOUBLE_EQ(m.mae, 0.5);
}

TEST(QualityTest, MaskSizeIsFloorOfOneFifth) {
  for (std::size_t n : {5u, 9u, 10u, 14u, 37u}) {
    std::vector<std::vector<double>> rows(1, std::vector<double>(n + 3, NA));
    for (std::size_t j = 0; j < n; ++j) rows[0][j] = static_cast<double>(j % 2);
    const auto m = make_matrix(AggregationMode::Union, rows);
    const auto mask = quality_mask(m, 1);
    EXPECT_EQ(mask.size(), n / 5);
    std::set<std::size_t> unique(mask.begin(), mask.end());
    EXPECT_EQ(unique.size(), mask.size());
    for (std::size_t c : mask) EXPECT_TRUE(m.known(0, c));
  }
  const auto few = make_matrix(AggregationMode::Union, {{1, 0, 1, 0}});
  EXPECT_EQ(code_of([&] { quality_mask(few, 0); }), ErrorCode::TooFewObserved);
}

TEST(QualityTest, PerfectImputerScoresPerfectly) {
  std::mt19937_64 rng(2);
  const auto m = binary_matrix(rng, 10, 8, 0.2);
  const ImputerFn oracle = [&](const AggregatedMatrix& held) {
    AggregatedMatrix full = held;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) full.set(i, j, m.known(i, j) ? m.value(i, j) : 0.0);
    }
    std::vector<std::uint8_t> mask(m.rows() * m.cols(), 0);
    return ImputedMatrix(full, mask, ImputeMethod{});
  };
  const auto r = quality_test(m, {}, oracle, "oracle", 4);
  EXPECT_EQ(r.masked_count, m.known_count() / 5);
  EXPECT_EQ(r.overall.classification->accuracy, 1.0);
  EXPECT_EQ(r.gamma(), r.overall.classification->f1);

  std::vector<std::vector<double>> cont(6, std::vector<double>(5));
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& row : cont) {
    for (auto& v : row) v = u(rng);
  }
  const auto avg = make_matrix(AggregationMode::Average, cont);
  const ImputerFn avg_oracle = [&](const AggregatedMatrix&) {
    return ImputedMatrix(avg, std::vector<std::uint8_t>(30, 0), ImputeMethod{});
  };
  const auto ra = quality_test(avg, {}, avg_oracle, "oracle", 4);
  EXPECT_EQ(ra.overall.regression->rmse, 0.0);
  EXPECT_EQ(ra.gamma(), 1.0);
}

TEST(QualityTest, ConstantZeroImputerMatchesHandCount) {
  std::mt19937_64 rng(6);
  const auto m = binary_matrix(rng, 12, 10, 0.3);
  const ImputerFn zero = [](const AggregatedMatrix& held) {
    AggregatedMatrix full = held;
    for (std::size_t i = 0; i < held.rows(); ++i) {
      for (std::size_t j = 0; j < held.cols(); ++j) {
        if (!held.known(i, j)) full.set(i, j, 0.0);
      }
    }
    return ImputedMatrix(full, std::vector<std::uint8_t>(held.rows() * held.cols(), 0), ImputeMethod{});
  };
  const auto r = quality_test(m, {}, zero, "zero", 8);
  std::size_t ones = 0;
  const auto mask = quality_mask(m, 8);
  for (std::size_t c : mask) ones += m.value(c / m.cols(), c % m.cols()) == 1.0;
  const auto& c = *r.overall.classification;
  EXPECT_EQ(c.tp, 0u);
  EXPECT_EQ(c.fn, ones);
  EXPECT_EQ(c.tn, mask.size() - ones);
  EXPECT_DOUBLE_EQ(c.accuracy, static_cast<double>(mask.size() - ones) / static_cast<double>(mask.size()));
  EXPECT_EQ(c.recall, 0.0);
}

TEST(QualityTest, ImputerNeverSeesHeldOutCells) {
  std::mt19937_64 rng(7);
  const auto m = binary_matrix(rng, 10, 10, 0.1);
  const auto mask = quality_mask(m, 21);
  const ImputerFn spy = [&](const AggregatedMatrix& held) {
    for (std::size_t c : mask) EXPECT_FALSE(held.known(c / m.cols(), c % m.cols()));
    EXPECT_EQ(held.known_count(), m.known_count() - mask.size());
    return impute_mean(held);
  };
  quality_test(m, {}, spy, "mean", 21);
}

TEST(QualityTest, BitReproducibleAndPerCategory) {
  std::mt19937_64 rng(8);
  std::vector<std::vector<double>> rows(15, std::vector<double>(6));
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& r : rows) {
    for (auto& v : r) v = u(rng) < 0.2 ? NA : u(rng);
  }
  const auto m = make_matrix(AggregationMode::Average, rows, {"S_A", "S_B", "P_C", "P_D", "INV_E", "M_F"});
  const auto a = quality_test(m, {}, ImputerSpec::softimpute(), 7);
  const auto b = quality_test(m, {}, ImputerSpec::softimpute(), 7);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.method, "softimpute");
  std::size_t total = 0;
  for (const auto& [cat, cm] : a.per_category) total += cm.count;
  EXPECT_EQ(total, a.masked_count);
  EXPECT_THROW(quality_test(m, {}, ImputerSpec::none(), 7), Error);
}

TEST(QualityTest, DialectFillRecoversHeldOutDialectCells) {
  // Dialect rows copy their parent exactly, so a parent-backed fill is perfect there.
  std::vector<std::vector<double>> rows{{1, 0, 1, 1, 0}, {1, 0, 1, 1, 0}, {0, 1, 0, 0, 1}, {0, 1, 0, 0, 1}};
  const auto m = make_matrix(AggregationMode::Union, rows);
  const std::vector<LanguageRecord> reg{language(code(0)), language(code(1), code(0)), language(code(2)),
                                        language(code(3), code(2))};
  const auto mask = quality_mask(m, 3);
  const ImputerFn check = [&](const AggregatedMatrix& held) {
    for (std::size_t c : mask) {
      const std::size_t r = c / m.cols(), col = c % m.cols();
      const bool dialect = r % 2 == 1;
      const bool parent_known = held.known(r - (dialect ? 1 : 0), col);
      if (dialect && parent_known) EXPECT_TRUE(held.known(r, col));
    }
    return impute_mean(held);
  };
  const auto r = quality_test(m, reg, check, "mean", 3, true);
  EXPECT_TRUE(r.dialect_fill);
}

TEST(SelectK, MatchesBruteForceCrossValidation) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 6; ++trial) {
    const bool union_mode = trial % 2 == 0;
    AggregatedMatrix m;
    if (union_mode) {
      m = binary_matrix(rng, 24, 8, 0.15);
    } else {
      std::vector<std::vector<double>> rows(24, std::vector<double>(8));
      std::uniform_real_distribution<double> u(0, 1);
      for (auto& r : rows) {
        for (auto& v : r) v = u(rng) < 0.15 ? NA : u(rng);
      }
      m = make_matrix(AggregationMode::Average, rows);
    }
    const auto sel = knn_select_k(m, kDefaultKCandidates, 5, trial);
    const auto folds = cv_folds(m, 5, trial);
    std::map<std::size_t, double> score;
    for (std::size_t k : kDefaultKCandidates) {
      double total = 0;
      for (const auto& fold : folds) {
        AggregatedMatrix train = m;
        for (std::size_t c : fold) train.clear(c / m.cols(), c % m.cols());
        const auto imputed = impute_knn(train, k);
        std::vector<double> truth, pred;
        for (std::size_t c : fold) {
          truth.push_back(m.value(c / m.cols(), c % m.cols()));
          pred.push_back(imputed.value(c / m.cols(), c % m.cols()));
        }
        total += union_mode ? classification_metrics(truth, pred).f1 : regression_metrics(truth, pred).rmse;
      }
      score[k] = total / 5;
    }
    std::size_t best = 3;
    for (std::size_t k : kDefaultKCandidates) {
      if (union_mode ? score[k] > score[best] : score[k] < score[best]) best = k;
    }
    EXPECT_EQ(sel.k, best) << "trial " << trial;
    for (std::size_t k : kDefaultKCandidates) EXPECT_NEAR(sel.score.at(k), score[k], 1e-12);
  }
}

TEST(SelectK, TiesGoToSmallestK) {
  std::vector<std::vector<double>> rows(20, std::vector<double>(4, 1.0));
  rows[0][0] = NA;
  const auto m = make_matrix(AggregationMode::Union, rows);
  EXPECT_EQ(knn_select_k(m).k, 3u);
}

TEST(SelectK, FoldsPartitionObservedCells) {
  std::mt19937_64 rng(4);
  const auto m = binary_matrix(rng, 9, 7, 0.3);
  const auto folds = cv_folds(m, 5, 2);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& f : folds) {
    total += f.size();
    seen.insert(f.begin(), f.end());
  }
  EXPECT_EQ(total, m.known_count());
  EXPECT_EQ(seen.size(), m.known_count());
}

TEST(Coverage, EmptyTensor) {
  const auto r = coverage_report(FeatureTensor{});
  EXPECT_EQ(r.languages, 0u);
  EXPECT_EQ(r.typological_eligible, 0u);
  for (auto c : kAllCategories) EXPECT_EQ(r.count(c, ResourceTier::HRL), 0u);
}

TEST(Coverage, HandTally) {
  TensorBuilder b;
  b.lang(language(code(0), std::nullopt, ResourceTier::HRL))
      .lang(language(code(1), std::nullopt, ResourceTier::LRL))
      .lang(language(code(2), std::nullopt, ResourceTier::LRL))
      .lang(language(code(3), std::nullopt, ResourceTier::MRL));
  b.cell(code(0), "S_A", "W", 1).cell(code(0), "P_B", "S", 0).cell(code(0), "INV_C", "S", 1);
  b.cell(code(1), "S_A", "G", 0);
  b.cell(code(2), "GEO_X", "G", 1);
  b.feat("M_D");
  const auto r = coverage_report(b.get());
  EXPECT_EQ(r.languages, 4u);
  EXPECT_EQ(r.typological_eligible, 2u);
  EXPECT_EQ(r.count(FeatureCategory::Syntactic, ResourceTier::HRL), 1u);
  EXPECT_EQ(r.count(FeatureCategory::Syntactic, ResourceTier::LRL), 1u);
  EXPECT_EQ(r.totals.at(FeatureCategory::Syntactic), 2u);
  EXPECT_EQ(r.totals.at(FeatureCategory::Phonological), 1u);
  EXPECT_EQ(r.count(FeatureCategory::Morphological, ResourceTier::HRL), 0u);
  EXPECT_EQ(r.count(FeatureCategory::Geographic, ResourceTier::LRL), 1u);

  const auto overridden = coverage_report(b.get(), {{code(1), ResourceTier::HRL}});
  EXPECT_EQ(overridden.count(FeatureCategory::Syntactic, ResourceTier::HRL), 2u);
  EXPECT_EQ(overridden.to_json()["categories"]["syntactic"]["total"], 2);
}
