#ifndef DPNET_INFERENCE_HPP
#define DPNET_INFERENCE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpnet/tensor_quant.hpp"

namespace dpnet {

/// Arithmetic performed by a kernel, tallied per loop trip.
struct OpCounter {
  std::uint64_t multiplications = 0;
  std::uint64_t additions = 0;
};

struct OpCountReport {
  std::uint64_t multiplications = 0;
  std::uint64_t additions = 0;
  std::uint64_t baseline_multiplications = 0;
  double reduction_factor = 0.0;  ///< baseline_multiplications / multiplications
};

/// aᵀb for b[i] = codebook[indices[i]]: activations are summed per cluster
/// in input order, then the K partial sums are scaled and reduced in
/// ascending cluster order. K multiplications, n + K - 1 additions.
double grouped_dot(std::span<const float> activations, std::span<const float> codebook,
                   std::span<const std::uint32_t> indices, OpCounter* counter = nullptr);

/// Plain dot product, the n-multiplication baseline.
double dense_dot(std::span<const float> a, std::span<const float> b, OpCounter* counter = nullptr);

/// y = W·x with one grouped_dot per group. The tensor must be grouped per
/// row or per filter so each group is one row of its matrix view.
std::vector<double> compressed_matvec(const QuantizedTensor& weights, std::span<const float> x,
                                      OpCounter* counter = nullptr);

/// Dense reference: y = W·x over a row-major rows x cols matrix.
std::vector<double> dense_matvec(std::span<const float> matrix, std::size_t rows, std::size_t cols,
                                 std::span<const float> x, OpCounter* counter = nullptr);

/// Channel-major feature map [channels, height, width].
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
};

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output spatial size of a convolution.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, const ConvParams& params);

/// Convolution of a per-filter quantized [out, in, kh, kw] kernel. Each
/// output position gathers its zero-padded (in, kh, kw) patch in the
/// kernel's row-major order and runs a compressed matvec on it.
FeatureMap conv_as_matmul(const QuantizedTensor& kernel, const FeatureMap& input, const ConvParams& params,
                          OpCounter* counter = nullptr);

struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct BenchOptions {
  std::size_t k = 16;
  int repetitions = 10;
  std::uint64_t seed = 0;
};

struct BenchResult {
  LayerShape shape;
  std::size_t k = 0;
  OpCountReport ops;
  double dense_ms = 0.0;       ///< mean wall-clock per matvec, informational
  double compressed_ms = 0.0;  ///< mean wall-clock per matvec, informational
  double max_relative_deviation = 0.0;
};

/// Counts for one compressed matvec of `weights` against the dense baseline.
OpCountReport count_matvec_ops(const QuantizedTensor& weights);

/// Random row-quantized layer with exactly K distinct entries per codebook.
QuantizedTensor random_quantized_layer(const LayerShape& shape, std::size_t k, std::uint64_t seed);

/// Times dense and compressed matvecs on a random layer of this shape.
BenchResult bench(const LayerShape& shape, const BenchOptions& options);
/// Same, for an existing quantized tensor.
BenchResult bench(const QuantizedTensor& weights, const BenchOptions& options);

std::string bench_csv_header();
std::string bench_csv_row(const std::string& label, const BenchResult& result);

}  // namespace dpnet

#endif  // DPNET_INFERENCE_HPP
