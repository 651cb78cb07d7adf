#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "typodist/aggregate.hpp"
#include "typodist/distance.hpp"
#include "typodist/evalkit.hpp"
#include "typodist/impute.hpp"
#include "typodist/kb.hpp"

using namespace typodist;

namespace {

std::string lang(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "lang%04zu", i);
  return buf;
}

FeatureTensor random_tensor(std::size_t langs, std::size_t feats, std::size_t sources, double density) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  FeatureTensor t;
  Batch batch;
  for (std::size_t i = 0; i < langs; ++i) batch.languages.push_back(LanguageRecord{lang(i)});
  for (std::size_t f = 0; f < feats; ++f) {
    batch.features.push_back(FeatureDescriptor{"S_F" + std::to_string(f), FeatureCategory::Syntactic});
  }
  for (std::size_t i = 0; i < langs; ++i) {
    for (std::size_t f = 0; f < feats; ++f) {
      for (std::size_t s = 0; s < sources; ++s) {
        if (u(rng) < density) {
          batch.cells.push_back({lang(i), "S_F" + std::to_string(f), "SRC" + std::to_string(s),
                                 u(rng) < 0.5 ? 0.0 : 1.0});
        }
      }
    }
  }
  t.extend(batch, WriteMode::KeepExisting);
  return t;
}

const FeatureTensor& tensor() {
  static const FeatureTensor t = random_tensor(400, 150, 4, 0.3);
  return t;
}

void BM_Aggregate(benchmark::State& state) {
  const auto mode = state.range(0) ? AggregationMode::Average : AggregationMode::Union;
  const auto& t = tensor();
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(t, mode));
}
BENCHMARK(BM_Aggregate)->Arg(0)->Arg(1);

void BM_DistanceMatrix(benchmark::State& state) {
  const auto m = aggregate(tensor(), AggregationMode::Union);
  std::vector<std::string> langs(m.languages().begin(), m.languages().begin() + state.range(0));
  DistanceRequest req;
  for (auto _ : state) benchmark::DoNotOptimize(distance_matrix(langs, req, m));
}
BENCHMARK(BM_DistanceMatrix)->Arg(50)->Arg(200);

void BM_Knn(benchmark::State& state) {
  const auto m = aggregate(tensor(), AggregationMode::Union);
  for (auto _ : state) benchmark::DoNotOptimize(impute_knn(m, 9));
}
BENCHMARK(BM_Knn)->Unit(benchmark::kMillisecond);

void BM_SoftImpute(benchmark::State& state) {
  const auto m = aggregate(tensor(), AggregationMode::Average);
  const SoftImputeParams params{1.0, 50, 1e-4, 200};
  for (auto _ : state) benchmark::DoNotOptimize(impute_softimpute(m, params));
}
BENCHMARK(BM_SoftImpute)->Unit(benchmark::kMillisecond);

void BM_PermBoth(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(20), b(20), g(20);
  for (std::size_t i = 0; i < 20; ++i) {
    a[i] = u(rng);
    b[i] = u(rng);
    g[i] = u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(perm_both_test(a, b, g, 10000, 0));
}
BENCHMARK(BM_PermBoth)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
