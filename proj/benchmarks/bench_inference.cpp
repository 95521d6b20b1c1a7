#include <benchmark/benchmark.h>

#include <vector>

#include "dpnet/huffman.hpp"
#include "dpnet/inference.hpp"
#include "dpnet/random.hpp"
#include "dpnet/tensor_quant.hpp"

namespace {

std::vector<float> Input(std::size_t n) {
  dpnet::Rng rng(7);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.Normal());
  return x;
}

void BM_DenseMatvec(benchmark::State& state) {
  const dpnet::LayerShape shape{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1))};
  const auto w = dpnet::dequantize_tensor(dpnet::random_quantized_layer(shape, 16, 1));
  const auto x = Input(shape.cols);
  for (auto _ : state) benchmark::DoNotOptimize(dpnet::dense_matvec(w.data, shape.rows, shape.cols, x));
}

void BM_CompressedMatvec(benchmark::State& state) {
  const dpnet::LayerShape shape{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1))};
  const auto q = dpnet::random_quantized_layer(shape, static_cast<std::size_t>(state.range(2)), 1);
  const auto x = Input(shape.cols);
  for (auto _ : state) benchmark::DoNotOptimize(dpnet::compressed_matvec(q, x));
}

BENCHMARK(BM_DenseMatvec)->Args({1000, 1024})->Args({384, 1728})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CompressedMatvec)->ArgsProduct({{1000}, {1024}, {4, 16}})->ArgsProduct({{384}, {1728}, {4, 16}})
    ->Unit(benchmark::kMicrosecond);

void BM_HuffmanRoundTrip(benchmark::State& state) {
  dpnet::Rng rng(3);
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(state.range(0)));
  for (auto& v : idx) v = static_cast<std::uint32_t>(std::min(rng.Below(16), rng.Below(16)));
  for (auto _ : state) {
    const auto payload = dpnet::serialize_huffman_payload(dpnet::huffman_encode(idx));
    benchmark::DoNotOptimize(dpnet::deserialize_huffman_payload(payload, idx.size()));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HuffmanRoundTrip)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

}  // namespace
