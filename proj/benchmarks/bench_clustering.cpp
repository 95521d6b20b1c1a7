#include <benchmark/benchmark.h>

#include <vector>

#include "dpnet/dp_core.hpp"
#include "dpnet/random.hpp"

namespace {

std::vector<double> Weights(std::size_t n) {
  dpnet::Rng rng(n);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.Normal(0.0, 0.1);
  return v;
}

// n = row length, K = codebook size
void BM_DpCluster(benchmark::State& state) {
  const auto v = Weights(static_cast<std::size_t>(state.range(0)));
  const auto k = static_cast<std::size_t>(state.range(1));
  const dpnet::SortedWeights w{std::span(v)};
  for (auto _ : state) benchmark::DoNotOptimize(dpnet::dp_cluster(w, k));
}
BENCHMARK(BM_DpCluster)->ArgsProduct({{64, 256, 1024, 1728}, {4, 16}})->Unit(benchmark::kMicrosecond);

void BM_Lloyd(benchmark::State& state) {
  const auto v = Weights(static_cast<std::size_t>(state.range(0)));
  const auto k = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(dpnet::lloyd_cluster(v, k));
}
BENCHMARK(BM_Lloyd)->ArgsProduct({{64, 256, 1024, 1728}, {4, 16}})->Unit(benchmark::kMicrosecond);

}  // namespace
