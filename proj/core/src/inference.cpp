#include "dpnet/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "dpnet/error.hpp"
#include "dpnet/random.hpp"

namespace dpnet {

namespace {

// grouped_dot with caller-owned partial-sum storage.
double GroupedDotInto(std::span<const float> a, std::span<const float> codebook, std::span<const std::uint32_t> idx,
                      std::vector<double>& partial, OpCounter* counter) {
  const std::size_t k = codebook.size();
  partial.assign(k, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) partial[idx[i]] += a[i];
  double result = static_cast<double>(codebook[0]) * partial[0];
  for (std::size_t c = 1; c < k; ++c) result += static_cast<double>(codebook[c]) * partial[c];
  if (counter != nullptr) {
    counter->multiplications += k;
    counter->additions += a.size() + k - 1;
  }
  return result;
}

void RequireRowGrouped(const QuantizedTensor& weights) {
  const auto mode = weights.scheme.mode;
  if (mode != GroupingMode::kPerRow && mode != GroupingMode::kPerFilter) {
    throw ContractError("compressed matvec needs per-row or per-filter grouping, got " + to_string(mode));
  }
}

double MillisecondsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

double grouped_dot(std::span<const float> activations, std::span<const float> codebook,
                   std::span<const std::uint32_t> indices, OpCounter* counter) {
  if (activations.size() != indices.size()) {
    throw ContractError("grouped_dot: " + std::to_string(activations.size()) + " activations but " +
                        std::to_string(indices.size()) + " indices");
  }
  if (codebook.empty()) throw ContractError("grouped_dot: empty codebook");
  for (auto p : indices) {
    if (p >= codebook.size()) throw ContractError("grouped_dot: index " + std::to_string(p) + " outside codebook");
  }
  std::vector<double> partial;
  return GroupedDotInto(activations, codebook, indices, partial, counter);
}

double dense_dot(std::span<const float> a, std::span<const float> b, OpCounter* counter) {
  if (a.size() != b.size()) throw ContractError("dense_dot: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  if (counter != nullptr) {
    counter->multiplications += a.size();
    counter->additions += a.size();
  }
  return sum;
}

std::vector<double> compressed_matvec(const QuantizedTensor& weights, std::span<const float> x, OpCounter* counter) {
  RequireRowGrouped(weights);
  const std::size_t rows = weights.scheme.group_count;
  const std::size_t cols = weights.scheme.group_size;
  if (x.size() != cols) {
    throw ContractError("compressed_matvec: matrix has " + std::to_string(cols) + " columns, vector has " +
                        std::to_string(x.size()));
  }
  if (weights.codebooks.size() != rows || weights.indices.size() != rows * cols) {
    throw ContractError("compressed_matvec: malformed quantized tensor");
  }
  std::vector<double> y(rows);
  std::vector<double> partial;
  const std::span<const std::uint32_t> all(weights.indices);
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = GroupedDotInto(x, weights.codebooks[r], all.subspan(r * cols, cols), partial, counter);
  }
  return y;
}

std::vector<double> dense_matvec(std::span<const float> matrix, std::size_t rows, std::size_t cols,
                                 std::span<const float> x, OpCounter* counter) {
  if (matrix.size() != rows * cols || x.size() != cols) throw ContractError("dense_matvec: dimension mismatch");
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) y[r] = dense_dot(matrix.subspan(r * cols, cols), x, counter);
  return y;
}

std::size_t conv_output_size(std::size_t input, std::size_t kernel, const ConvParams& params) {
  if (params.stride == 0) throw ContractError("convolution stride must be positive");
  if (input + 2 * params.padding < kernel) throw ContractError("kernel larger than padded input");
  return (input + 2 * params.padding - kernel) / params.stride + 1;
}

FeatureMap conv_as_matmul(const QuantizedTensor& kernel, const FeatureMap& input, const ConvParams& params,
                          OpCounter* counter) {
  if (kernel.meta.rank() != 4 || kernel.scheme.mode != GroupingMode::kPerFilter) {
    throw ContractError("conv_as_matmul needs a per-filter quantized rank-4 kernel");
  }
  const std::size_t out_c = kernel.meta.shape[0];
  const std::size_t in_c = kernel.meta.shape[1];
  const std::size_t kh = kernel.meta.shape[2];
  const std::size_t kw = kernel.meta.shape[3];
  if (input.channels != in_c) {
    throw ContractError("conv_as_matmul: kernel expects " + std::to_string(in_c) + " channels, input has " +
                        std::to_string(input.channels));
  }
  if (input.data.size() != input.channels * input.height * input.width) {
    throw ContractError("conv_as_matmul: input data does not match its shape");
  }
  const std::size_t out_h = conv_output_size(input.height, kh, params);
  const std::size_t out_w = conv_output_size(input.width, kw, params);

  FeatureMap out{out_c, out_h, out_w, std::vector<float>(out_c * out_h * out_w, 0.0f)};
  std::vector<float> patch(in_c * kh * kw);
  std::vector<double> partial;
  const std::span<const std::uint32_t> all(kernel.indices);
  const std::size_t patch_size = patch.size();
  const auto pad = static_cast<std::ptrdiff_t>(params.padding);

  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      std::size_t p = 0;
      for (std::size_t c = 0; c < in_c; ++c) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * params.stride + ky) - pad;
            const auto ix = static_cast<std::ptrdiff_t>(ox * params.stride + kx) - pad;
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(input.height) &&
                                ix < static_cast<std::ptrdiff_t>(input.width);
            patch[p++] = inside ? input.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) : 0.0f;
          }
        }
      }
      for (std::size_t o = 0; o < out_c; ++o) {
        const double v = GroupedDotInto(patch, kernel.codebooks[o], all.subspan(o * patch_size, patch_size), partial, counter);
        out.data[(o * out_h + oy) * out_w + ox] = static_cast<float>(v);
      }
    }
  }
  return out;
}

OpCountReport count_matvec_ops(const QuantizedTensor& weights) {
  RequireRowGrouped(weights);
  OpCountReport report;
  const std::size_t cols = weights.scheme.group_size;
  for (const auto& cb : weights.codebooks) {
    report.multiplications += cb.size();
    report.additions += cols + cb.size() - 1;
  }
  report.baseline_multiplications = static_cast<std::uint64_t>(weights.scheme.group_count) * cols;
  report.reduction_factor = static_cast<double>(report.baseline_multiplications) / static_cast<double>(report.multiplications);
  return report;
}

QuantizedTensor random_quantized_layer(const LayerShape& shape, std::size_t k, std::uint64_t seed) {
  if (shape.rows == 0 || shape.cols == 0) throw ContractError("layer shape must be positive");
  if (k == 0 || k > shape.cols) throw ContractError("K must lie in [1, cols]");
  Rng rng(seed);
  QuantizedTensor q;
  q.meta = TensorMeta{"random", {shape.rows, shape.cols}, LayerKind::kFullyConnected};
  q.scheme = make_grouping_scheme(q.meta, GroupingMode::kPerRow);
  q.codebooks.resize(shape.rows);
  q.indices.resize(shape.rows * shape.cols);
  for (std::size_t r = 0; r < shape.rows; ++r) {
    auto& cb = q.codebooks[r];
    while (true) {
      cb.clear();
      for (std::size_t c = 0; c < k; ++c) cb.push_back(static_cast<float>(rng.Normal(0.0, 0.1)));
      std::sort(cb.begin(), cb.end());
      if (std::adjacent_find(cb.begin(), cb.end()) == cb.end()) break;
    }
    for (std::size_t c = 0; c < shape.cols; ++c) q.indices[r * shape.cols + c] = static_cast<std::uint32_t>(rng.Below(k));
  }
  return q;
}

BenchResult bench(const LayerShape& shape, const BenchOptions& options) {
  return bench(random_quantized_layer(shape, options.k, options.seed), options);
}

BenchResult bench(const QuantizedTensor& weights, const BenchOptions& options) {
  RequireRowGrouped(weights);
  const std::size_t rows = weights.scheme.group_count;
  const std::size_t cols = weights.scheme.group_size;
  Rng rng(options.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<float> x(cols);
  for (auto& v : x) v = static_cast<float>(rng.Uniform(-1.0, 1.0));
  const Tensor dense = dequantize_tensor(weights);

  BenchResult result;
  result.shape = {rows, cols};
  result.k = weights.max_codebook_size();

  OpCounter compressed_ops;
  OpCounter dense_ops;
  const auto y_compressed = compressed_matvec(weights, x, &compressed_ops);
  const auto y_dense = dense_matvec(dense.data, rows, cols, x, &dense_ops);
  result.ops.multiplications = compressed_ops.multiplications;
  result.ops.additions = compressed_ops.additions;
  result.ops.baseline_multiplications = dense_ops.multiplications;
  result.ops.reduction_factor =
      static_cast<double>(dense_ops.multiplications) / static_cast<double>(compressed_ops.multiplications);

  for (std::size_t r = 0; r < rows; ++r) {
    double scale = 0.0;
    for (std::size_t c = 0; c < cols; ++c) scale += std::abs(static_cast<double>(dense.data[r * cols + c]) * x[c]);
    if (scale > 0.0) {
      result.max_relative_deviation = std::max(result.max_relative_deviation, std::abs(y_compressed[r] - y_dense[r]) / scale);
    }
  }

  const int reps = std::max(1, options.repetitions);
  double sink = 0.0;
  auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) sink += dense_matvec(dense.data, rows, cols, x)[0];
  result.dense_ms = MillisecondsSince(start) / reps;
  start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) sink += compressed_matvec(weights, x)[0];
  result.compressed_ms = MillisecondsSince(start) / reps;
  // Keeps the timed loops from being optimized away.
  if (std::isnan(sink)) result.dense_ms = -1.0;
  return result;
}

std::string bench_csv_header() {
  return "label,rows,cols,k,multiplications,additions,baseline_multiplications,reduction_factor,dense_ms,compressed_ms,"
         "max_relative_deviation";
}

std::string bench_csv_row(const std::string& label, const BenchResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%llu,%llu,%llu,%.6f,%.6f,%.6f,%.3e", label.c_str(), r.shape.rows,
                r.shape.cols, r.k, static_cast<unsigned long long>(r.ops.multiplications),
                static_cast<unsigned long long>(r.ops.additions),
                static_cast<unsigned long long>(r.ops.baseline_multiplications), r.ops.reduction_factor, r.dense_ms,
                r.compressed_ms, r.max_relative_deviation);
  return buf;
}

}  // namespace dpnet
