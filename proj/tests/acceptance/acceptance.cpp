// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "builders.hpp"
#include "confidence_fixture.hpp"
#include "typodist/aggregate.hpp"
#include "typodist/confidence.hpp"
#include "typodist/distance.hpp"
#include "typodist/error.hpp"
#include "typodist/evalkit.hpp"
#include "typodist/impute.hpp"
#include "typodist/ingest.hpp"
#include "typodist/tensor_io.hpp"

using namespace typodist;
using namespace typodist::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kSource = TYPODIST_SOURCE_DIR;

// Collects failed checks of one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::fabs(got - want) <= tol)) {
      std::ostringstream os;
      os << what << ": got " << got << ", want " << want << " ± " << tol;
      failures.push_back(os.str());
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<CaseStudyRow> case_study_rows() {
  std::ifstream in(kSource / "data/case_study.csv");
  return read_case_study(in, "case_study.csv");
}

// --- 1 ---------------------------------------------------------------------

void case_study_correlations(Check& c) {
  const std::string cmd = std::string("'") + TYPODIST_CLI + "' eval casestudy --input '" +
                          (kSource / "data/case_study.csv").string() + "' 2>/dev/null";
  const auto start = Clock::now();
  FILE* pipe = popen(cmd.c_str(), "r");
  c.expect(pipe != nullptr, "cannot start CLI");
  if (!pipe) return;
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  const double elapsed = seconds_since(start);
  c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "CLI exit status");
  const auto j = nlohmann::json::parse(out);
  c.near(j["tau_a"].get<double>(), -0.05, 0.01, "tau(dist_a, g_d)");
  c.near(j["tau_b"].get<double>(), 0.19, 0.01, "tau(dist_b, g_d)");
  c.expect(elapsed < 1.0, "runtime " + std::to_string(elapsed) + " s");
}

// --- 2 ---------------------------------------------------------------------

void perm_both_significance(Check& c) {
  const auto rows = case_study_rows();
  std::vector<double> a, b, g;
  for (const auto& r : rows) {
    a.push_back(r.dist_a);
    b.push_back(r.dist_b);
    g.push_back(r.g_d);
  }
  const auto start = Clock::now();
  const auto r = perm_both_test(a, b, g, 10000, 0);
  const double elapsed = seconds_since(start);
  c.expect(r.p_value > 0.05, "difference should not be significant, p = " + std::to_string(r.p_value));
  c.expect(r.p_value >= 0.15 && r.p_value <= 0.50, "p = " + std::to_string(r.p_value) + " outside [0.15, 0.50]");
  c.expect(elapsed < 5.0, "runtime " + std::to_string(elapsed) + " s");
}

// --- 3 ---------------------------------------------------------------------

struct Holdout {
  AggregatedMatrix truth;
  AggregatedMatrix observed;
  std::vector<std::size_t> holes;
};

Holdout punch_holes(const AggregatedMatrix& truth, double fraction, std::mt19937_64& rng) {
  Holdout h{truth, truth, {}};
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < truth.rows(); ++i) {
    for (std::size_t j = 0; j < truth.cols(); ++j) {
      if (u(rng) < fraction) {
        h.observed.clear(i, j);
        h.holes.push_back(i * truth.cols() + j);
      }
    }
  }
  return h;
}

std::pair<std::vector<double>, std::vector<double>> held_out(const Holdout& h, const ImputedMatrix& imp) {
  std::vector<double> truth, pred;
  for (std::size_t c : h.holes) {
    truth.push_back(h.truth.value(c / h.truth.cols(), c % h.truth.cols()));
    pred.push_back(imp.value(c / h.truth.cols(), c % h.truth.cols()));
  }
  return {truth, pred};
}

void imputers_beat_mean(Check& c) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t rows = 200, cols = 100, rank = 5;

  std::vector<std::vector<double>> low(rows, std::vector<double>(cols, 0.0));
  std::vector<std::vector<double>> uf(rows, std::vector<double>(rank)), vf(rank, std::vector<double>(cols));
  for (auto& r : uf) {
    for (auto& v : r) v = u(rng);
  }
  for (auto& r : vf) {
    for (auto& v : r) v = u(rng);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t k = 0; k < rank; ++k) low[i][j] += uf[i][k] * vf[k][j] / rank;
    }
  }
  const auto cont = punch_holes(make_matrix(AggregationMode::Average, low), 0.2, rng);
  const auto soft = impute(cont.observed, {}, ImputerSpec::softimpute(), false, 0);
  const auto [t1, p1] = held_out(cont, soft);
  const auto [t2, p2] = held_out(cont, impute_mean(cont.observed));
  const double rmse_soft = regression_metrics(t1, p1).rmse, rmse_mean = regression_metrics(t2, p2).rmse;
  c.expect(rmse_soft < rmse_mean,
           "SoftImpute RMSE " + std::to_string(rmse_soft) + " vs mean " + std::to_string(rmse_mean));

  std::vector<std::vector<double>> protos(5, std::vector<double>(cols));
  for (auto& p : protos) {
    for (auto& v : p) v = u(rng) < 0.5 ? 0.0 : 1.0;
  }
  std::vector<std::vector<double>> bin(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = protos[i % 5][j];
      bin[i][j] = u(rng) < 0.1 ? 1.0 - v : v;
    }
  }
  const auto clusters = punch_holes(make_matrix(AggregationMode::Union, bin), 0.2, rng);
  auto f1_of = [&](const ImputedMatrix& imp) {
    const auto [t, p] = held_out(clusters, imp);
    return classification_metrics(t, p).f1;
  };
  const double f1_mean = f1_of(impute_mean(clusters.observed));
  const double f1_knn = f1_of(impute(clusters.observed, {}, ImputerSpec::knn(), false, 0));
  const double f1_soft = f1_of(impute(clusters.observed, {}, ImputerSpec::softimpute(), false, 0));
  c.expect(f1_knn > f1_mean, "k-NN F1 " + std::to_string(f1_knn) + " vs mean " + std::to_string(f1_mean));
  c.expect(f1_soft > f1_mean, "SoftImpute F1 " + std::to_string(f1_soft) + " vs mean " + std::to_string(f1_mean));
}

// --- 4 ---------------------------------------------------------------------

void quality_protocol(Check& c) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 5 + rng() % 20, cols = 3 + rng() % 12;
    std::vector<std::vector<double>> data(rows, std::vector<double>(cols));
    for (auto& r : data) {
      for (auto& v : r) v = u(rng) < 0.3 ? NA : (u(rng) < 0.5 ? 0.0 : 1.0);
    }
    const auto m = make_matrix(AggregationMode::Union, data);
    if (m.known_count() < 5) continue;
    const std::uint64_t seed = rng();
    const auto mask = quality_mask(m, seed);
    c.expect(mask.size() == m.known_count() / 5, "mask size is floor(N/5)");
    c.expect(std::set<std::size_t>(mask.begin(), mask.end()).size() == mask.size(), "mask cells distinct");
    bool leaked = false, observed = true;
    for (std::size_t cell : mask) observed = observed && m.known(cell / cols, cell % cols);
    const ImputerFn spy = [&](const AggregatedMatrix& held) {
      for (std::size_t cell : mask) leaked = leaked || held.known(cell / cols, cell % cols);
      return impute_mean(held);
    };
    const auto r1 = quality_test(m, {}, spy, "mean", seed);
    const auto r2 = quality_test(m, {}, spy, "mean", seed);
    c.expect(observed, "masked cells were observed");
    c.expect(!leaked, "imputer saw a held-out cell");
    c.expect(r1.masked_count == mask.size(), "report masked count");
    c.expect(r1.to_json().dump() == r2.to_json().dump(), "seeded report reproducible");

    std::vector<double> truth, pred;
    const auto imputed = [&] {
      AggregatedMatrix held = m;
      for (std::size_t cell : mask) held.clear(cell / cols, cell % cols);
      return impute_mean(held);
    }();
    for (std::size_t cell : mask) {
      truth.push_back(m.value(cell / cols, cell % cols));
      pred.push_back(imputed.value(cell / cols, cell % cols));
    }
    if (!truth.empty()) {
      c.near(r1.overall.classification->f1, classification_metrics(truth, pred).f1, 1e-12, "F1 on mask");
    }
  }
  bool threw = false;
  try {
    quality_mask(make_matrix(AggregationMode::Union, {{1, 0, NA, 1}}), 0);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::TooFewObserved;
  }
  c.expect(threw, "fewer than five observed cells rejected");
}

// --- 5 ---------------------------------------------------------------------

std::optional<double> oracle_distance(const AggregatedMatrix& m, std::size_t a, std::size_t b,
                                      DistanceMetric metric) {
  double dot = 0, uu = 0, vv = 0;
  std::size_t shared = 0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    if (!m.known(a, j) || !m.known(b, j)) continue;
    ++shared;
    dot += m.value(a, j) * m.value(b, j);
    uu += m.value(a, j) * m.value(a, j);
    vv += m.value(b, j) * m.value(b, j);
  }
  if (shared == 0 || uu == 0 || vv == 0) return std::nullopt;
  const double sim = std::clamp(dot / std::sqrt(uu * vv), -1.0, 1.0);
  return metric == DistanceMetric::Cosine ? 1.0 - sim : 2.0 / std::numbers::pi * std::acos(sim);
}

void distance_properties(Check& c) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t langs = 2 + rng() % 4, feats = 1 + rng() % 8;
    TensorBuilder b;
    for (std::size_t i = 0; i < langs; ++i) b.lang(language(code(i)));
    for (std::size_t f = 0; f < feats; ++f) b.feat("S_F" + std::to_string(f));
    b.source("A").source("B");
    for (std::size_t i = 0; i < langs; ++i) {
      for (std::size_t f = 0; f < feats; ++f) {
        for (const char* s : {"A", "B"}) {
          if (u(rng) < 0.45) b.cell(code(i), "S_F" + std::to_string(f), s, u(rng) < 0.3 ? u(rng) : rng() % 2);
        }
      }
    }
    const auto& t = b.get();
    const auto uni = aggregate(t, AggregationMode::Union);
    const auto avg = aggregate(t, AggregationMode::Average);
    for (std::size_t i = 0; i < langs; ++i) {
      for (std::size_t f = 0; f < feats; ++f) {
        c.expect(uni.known(i, f) == avg.known(i, f), "modes agree on Known cells");
        if (uni.known(i, f)) c.expect(uni.value(i, f) >= avg.value(i, f), "Union dominates Average");
      }
    }
    const auto metric = trial % 2 ? DistanceMetric::Cosine : DistanceMetric::Angular;
    for (const auto* m : {&uni, &avg}) {
      DistanceRequest req;
      req.metric = metric;
      req.aggregation = m->mode();
      for (std::size_t a = 0; a < langs; ++a) {
        for (std::size_t bb = a; bb < langs; ++bb) {
          req.lang_a = code(a);
          req.lang_b = code(bb);
          const auto ab = language_distance(req, *m);
          std::swap(req.lang_a, req.lang_b);
          const auto ba = language_distance(req, *m);
          const auto want = oracle_distance(*m, a, bb, metric);
          c.expect(ab.computable() == want.has_value(), "NotComputable exactly without usable shared data");
          c.expect(ab.computable() == ba.computable(), "symmetric computability");
          if (!ab.computable()) {
            bool empty = true;
            for (std::size_t j = 0; j < feats; ++j) empty = empty && !(m->known(a, j) && m->known(bb, j));
            c.expect((ab.not_computable().reason == kNoSharedData) == empty, "reason names the empty shared set");
            continue;
          }
          const double d = ab.value().distance;
          c.expect(d == ba.value().distance, "symmetry");
          c.expect(d >= 0.0 && d <= 1.0, "range");
          c.near(d, *want, 1e-12, "per-pair oracle");
          if (a == bb) c.near(d, 0.0, 1e-7, "identity");

          // Cells Known for only one side never affect the pair.
          AggregatedMatrix masked = *m;
          for (std::size_t j = 0; j < feats; ++j) {
            if (masked.known(a, j) != masked.known(bb, j)) {
              const std::size_t side = masked.known(a, j) ? a : bb;
              masked.set(side, j, 1.0 - masked.value(side, j));
            }
          }
          req.lang_a = code(a);
          req.lang_b = code(bb);
          const auto again = language_distance(req, masked);
          c.expect(again.computable() && again.value().distance == d, "masking soundness");
        }
      }
    }
    if (c.failures.size() > 20) return;
  }
}

// --- 6 ---------------------------------------------------------------------

void confidence_oracle(Check& c) {
  const auto t = confidence_tensor();
  for (const auto& k : confidence_cases()) {
    const std::string pair = code(k.a) + "/" + code(k.b);
    c.near(completeness(code(k.a), code(k.b), t, k.scope), k.completeness, 1e-12, "completeness " + pair);
    if (k.consistency) {
      c.near(consistency(code(k.a), code(k.b), t, k.scope), *k.consistency, 1e-12, "consistency " + pair);
    } else {
      bool threw = false;
      try {
        consistency(code(k.a), code(k.b), t, k.scope);
      } catch (const Error& e) {
        threw = e.code() == ErrorCode::NoSourcedFeatures;
      }
      c.expect(threw, "undefined consistency " + pair);
    }
  }
  QualityCache cache;
  cache.record("softimpute", AggregationMode::Union, 0.798);
  const ConfidenceScope all{AllFeatures{}, AllSources{}};
  const auto r = confidence_report(code(1), code(3), t, all, ImputerSpec::softimpute(), AggregationMode::Union, cache);
  c.expect(r.to_json()["consistency"].is_null(), "undefined consistency reported as null");
  c.near(r.imputation_quality, 0.798, 0.0, "imputation quality from cache");
  c.near(imputation_quality("", AggregationMode::Union, cache), 1.0, 0.0, "no imputation means quality 1");
}

// --- 7 ---------------------------------------------------------------------

double top_singular_value(const AggregatedMatrix& m) {
  const auto filled = impute_mean(m);
  std::vector<double> v(m.cols(), 1.0), w(m.rows());
  double sigma = 0;
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      w[i] = 0;
      for (std::size_t j = 0; j < m.cols(); ++j) w[i] += filled.value(i, j) * v[j];
    }
    double norm = 0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      v[j] = 0;
      for (std::size_t i = 0; i < m.rows(); ++i) v[j] += filled.value(i, j) * w[i];
      norm += v[j] * v[j];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

void softimpute_behaviour(Check& c) {
  const auto full = make_matrix(AggregationMode::Average, {{0.1, 0.2}, {0.3, 0.4}});
  const auto same = impute_softimpute(full, {0.5, 2, 1e-4, 100});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) c.expect(same.value(i, j) == full.value(i, j), "fully Known unchanged");
  }

  const auto r1 = make_matrix(AggregationMode::Average, {{0.25, 0.5}, {0.5, NA}});
  c.near(impute_softimpute(r1, {1e-8, 1, 1e-16, 5000}).value(1, 1), 1.0, 1e-6, "rank-1 completion");

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> rows(30, std::vector<double>(12));
  for (auto& r : rows) {
    for (auto& v : r) v = u(rng) < 0.25 ? NA : u(rng);
  }
  const auto m = make_matrix(AggregationMode::Average, rows);
  for (double lambda : {0.05, 0.3, 1.0}) {
    const auto r = impute_softimpute(m, {lambda, 12, 1e-9, 300});
    const auto& obj = r.softimpute.objective;
    bool monotone = !obj.empty();
    for (std::size_t i = 1; i < obj.size(); ++i) monotone = monotone && obj[i] <= obj[i - 1] + 1e-9;
    c.expect(monotone, "objective non-increasing at lambda " + std::to_string(lambda));
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (m.known(i, j)) c.expect(r.value(i, j) == m.value(i, j), "observed cells preserved");
        c.expect(r.value(i, j) >= 0.0 && r.value(i, j) <= 1.0, "output in [0,1]");
      }
    }
  }
  const auto zero = impute_softimpute(m, {1.01 * top_singular_value(m), 12, 1e-6, 50});
  bool all_zero = true;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!m.known(i, j)) all_zero = all_zero && zero.value(i, j) == 0.0;
    }
  }
  c.expect(all_zero, "lambda above the top singular value shrinks every hole to 0");

  const auto a = impute(m, {}, ImputerSpec::softimpute(), false, 3);
  const auto b = impute(m, {}, ImputerSpec::softimpute(), false, 3);
  bool identical = true;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) identical = identical && a.value(i, j) == b.value(i, j);
  }
  c.expect(identical, "seeded SoftImpute reproducible");
}

// --- 8 ---------------------------------------------------------------------

void ingestion_round_trip(Check& c) {
  const fs::path fixtures = kSource / "tests/data/ingest";
  ingest::IngestOptions o;
  o.schema = ingest::IngestSchema::load(fixtures / "schema.json");
  o.rules = ingest::load_rules(fixtures / "rules.csv");
  o.resolution = ingest::IdResolutionTable::load(kSource / "data/iso_resolution.csv");
  o.language_metadata = ingest::load_language_metadata(fixtures / "languages.csv");
  const std::vector<ingest::SourceFile> files{{"WALS", fixtures / "wals.csv"}, {"SAPHON", fixtures / "saphon.csv"}};

  FeatureTensor t;
  const auto report = ingest::ingest_sources(t, files, o);
  c.expect(report.rows_read == 14 && report.cells_written == 21 && report.inferred_cells == 2,
           "ingest report counts");
  c.expect(t.get_cell("stan1318", "S_ORDER_OF_SUBJECT_AND_VERB_VS", "WALS") == 1.0, "one-hot level set");
  c.expect(t.get_cell("stan1318", "S_ORDER_OF_SUBJECT_AND_VERB_SV", "WALS") == 0.0, "one-hot sibling cleared");
  c.expect(t.get_cell("mode1248", "S_DEFINITE_ARTICLES", "WALS") == 1.0, "inferred cell");
  c.expect(t.get_cell("ell", "M_CASE_AFFIXES", "WALS") == 1.0, "retired ISO resolved");

  const fs::path dir = fs::temp_directory_path() / ("typodist-acceptance-" + std::to_string(std::random_device{}()));
  save_tensor(t, dir / "tensor");
  const auto back = load_tensor(dir / "tensor");
  fs::remove_all(dir);
  c.expect(back.known_cell_count() == t.known_cell_count(), "round-trip cell count");
  for (const auto& l : t.languages()) {
    for (const auto& f : t.features()) {
      for (const auto& s : t.sources()) {
        c.expect(back.get_cell(l.glottocode, f.name, s) == t.get_cell(l.glottocode, f.name, s),
                 "round-trip " + l.glottocode + "/" + f.name + "/" + s);
      }
    }
  }
  FeatureTensor again = back;
  c.expect(ingest::ingest_sources(again, files, o).cells_written == 0, "re-ingest writes nothing");

  const std::vector<std::pair<std::string, std::string>> shipped_rows{
      {"alb", "alba1267"}, {"ara", "stan1318"}, {"aze", "nort2697"}, {"zho", "mand1415"}, {"ekk", "esto1258"},
      {"msa", "stan1306"}, {"orm", "east2652"}, {"fas", "west2369"}, {"swa", "swah1253"}};
  for (const auto& [iso, glotto] : shipped_rows) {
    c.expect(ingest::resolve_language(iso, o.resolution) == glotto, "resolution of " + iso);
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"case-study correlations", case_study_correlations},
      {"Perm-Both significance", perm_both_significance},
      {"imputers beat mean imputation", imputers_beat_mean},
      {"quality-test protocol", quality_protocol},
      {"distance properties", distance_properties},
      {"confidence oracle", confidence_oracle},
      {"SoftImpute behaviour", softimpute_behaviour},
      {"ingestion round trip and identifier resolution", ingestion_round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << i + 1 << ". " << criteria[i].first << '\n';
    for (std::size_t k = 0; k < c.failures.size() && k < 5; ++k) std::cout << "    " << c.failures[k] << '\n';
  }
  return failed == 0 ? 0 : 1;
}
