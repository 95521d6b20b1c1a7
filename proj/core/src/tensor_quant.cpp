#include "dpnet/tensor_quant.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <functional>
#include <thread>

#include "dpnet/dp_core.hpp"
#include "dpnet/error.hpp"

namespace dpnet {

namespace {

void RequireAscending(const Codebook& codebook) {
  if (codebook.empty()) throw ContractError("codebook must not be empty");
  for (std::size_t i = 1; i < codebook.size(); ++i) {
    if (!(codebook[i - 1] < codebook[i])) throw ContractError("codebook entries must be strictly ascending");
  }
}

// Runs body(i) for i in [0, count) on up to `threads` workers.
void ParallelFor(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
          try {
            body(i);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::size_t TensorMeta::element_count() const noexcept {
  if (shape.empty()) return 0;
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  return count;
}

LayerKind TensorMeta::InferKind(std::span<const std::size_t> shape) noexcept {
  if (shape.size() == 2) return LayerKind::kFullyConnected;
  if (shape.size() == 4) return LayerKind::kConvolutional;
  return LayerKind::kOther;
}

Tensor::Tensor(TensorMeta m, std::vector<float> d) : meta(std::move(m)), data(std::move(d)) {
  if (meta.element_count() == 0) throw ContractError("tensor '" + meta.name + "' must have a positive shape");
  if (data.size() != meta.element_count()) {
    throw ContractError("tensor '" + meta.name + "' data length does not match its shape");
  }
}

Tensor::Tensor(std::string name, std::vector<std::size_t> shape, std::vector<float> d)
    : Tensor(TensorMeta{std::move(name), shape, TensorMeta::InferKind(shape)}, std::move(d)) {}

std::string to_string(GroupingMode mode) {
  switch (mode) {
    case GroupingMode::kPerRow: return "per-row";
    case GroupingMode::kPerFilter: return "per-filter";
    case GroupingMode::kWholeTensor: return "whole-tensor";
  }
  return "unknown";
}

GroupingMode parse_grouping_mode(const std::string& text) {
  if (text == "per-row") return GroupingMode::kPerRow;
  if (text == "per-filter") return GroupingMode::kPerFilter;
  if (text == "whole-tensor" || text == "whole") return GroupingMode::kWholeTensor;
  throw ContractError("unknown grouping mode '" + text + "'");
}

GroupingMode default_grouping_mode(const TensorMeta& meta) noexcept {
  switch (meta.rank()) {
    case 2: return GroupingMode::kPerRow;
    case 4: return GroupingMode::kPerFilter;
    default: return GroupingMode::kWholeTensor;
  }
}

GroupingScheme make_grouping_scheme(const TensorMeta& meta, GroupingMode mode) {
  const std::size_t total = meta.element_count();
  if (total == 0) throw ContractError("tensor '" + meta.name + "' has no elements");
  switch (mode) {
    case GroupingMode::kPerRow:
      if (meta.rank() != 2) throw ContractError("per-row grouping needs a rank-2 tensor, '" + meta.name + "' has rank " + std::to_string(meta.rank()));
      return {mode, meta.shape[0], meta.shape[1]};
    case GroupingMode::kPerFilter:
      if (meta.rank() != 4) throw ContractError("per-filter grouping needs a rank-4 tensor, '" + meta.name + "' has rank " + std::to_string(meta.rank()));
      return {mode, meta.shape[0], meta.shape[1] * meta.shape[2] * meta.shape[3]};
    case GroupingMode::kWholeTensor:
      return {mode, 1, total};
  }
  throw ContractError("unknown grouping mode");
}

std::size_t QuantizedTensor::max_codebook_size() const noexcept {
  std::size_t k = 0;
  for (const auto& cb : codebooks) k = std::max(k, cb.size());
  return k;
}

void QuantizedTensor::Validate() const {
  if (make_grouping_scheme(meta, scheme.mode) != scheme) throw ContractError("grouping scheme does not match shape");
  if (codebooks.size() != scheme.group_count) throw ContractError("one codebook per group required");
  if (indices.size() != meta.element_count()) throw ContractError("one index per element required");
  for (std::size_t g = 0; g < scheme.group_count; ++g) {
    RequireAscending(codebooks[g]);
    for (std::size_t j = 0; j < scheme.group_size; ++j) {
      if (indices[g * scheme.group_size + j] >= codebooks[g].size()) {
        throw ContractError("index out of range for codebook of group " + std::to_string(g));
      }
    }
  }
}

std::vector<std::span<const float>> partition_tensor(const Tensor& tensor, GroupingMode mode) {
  const auto scheme = make_grouping_scheme(tensor.meta, mode);
  std::vector<std::span<const float>> groups;
  groups.reserve(scheme.group_count);
  const std::span<const float> all(tensor.data);
  for (std::size_t g = 0; g < scheme.group_count; ++g) {
    groups.push_back(all.subspan(g * scheme.group_size, scheme.group_size));
  }
  return groups;
}

QuantizedTensor quantize_tensor(const Tensor& tensor, GroupingMode mode, const QuantizeOptions& options) {
  if (options.k == 0) throw ContractError("K must be positive");
  QuantizedTensor out;
  out.meta = tensor.meta;
  out.scheme = make_grouping_scheme(tensor.meta, mode);
  out.codebooks.resize(out.scheme.group_count);
  out.indices.resize(tensor.data.size());
  const auto groups = partition_tensor(tensor, mode);

  ParallelFor(groups.size(), options.threads, [&](std::size_t g) {
    const auto group = groups[g];
    const SortedWeights sorted(group);
    const auto solution = dp_cluster(sorted, std::min(options.k, group.size()));

    // Distinct doubles may collapse onto one float; dedupe at storage width.
    Codebook codebook;
    codebook.reserve(solution.centers.size());
    for (double c : solution.centers) {
      const auto f = static_cast<float>(c);
      if (codebook.empty() || codebook.back() != f) codebook.push_back(f);
    }
    const std::vector<double> wide(codebook.begin(), codebook.end());
    const std::size_t offset = g * out.scheme.group_size;
    for (std::size_t j = 0; j < group.size(); ++j) out.indices[offset + j] = nearest_center(group[j], wide);
    out.codebooks[g] = std::move(codebook);
  });
  return out;
}

std::vector<double> group_losses(const Tensor& tensor, const QuantizedTensor& quantized) {
  const auto groups = partition_tensor(tensor, quantized.scheme.mode);
  if (groups.size() != quantized.codebooks.size()) throw ContractError("tensor and quantized tensor disagree on groups");
  std::vector<double> losses(groups.size(), 0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t offset = g * quantized.scheme.group_size;
    for (std::size_t j = 0; j < groups[g].size(); ++j) {
      const double d = static_cast<double>(groups[g][j]) - quantized.codebooks[g][quantized.indices[offset + j]];
      losses[g] += d * d;
    }
  }
  return losses;
}

Tensor dequantize_tensor(const QuantizedTensor& quantized) {
  std::vector<float> data(quantized.indices.size());
  const std::size_t size = quantized.scheme.group_size;
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = quantized.codebooks[i / size][quantized.indices[i]];
  return Tensor(quantized.meta, std::move(data));
}

double quantization_error(const Tensor& tensor, GroupingMode mode, std::span<const Codebook> codebooks) {
  const auto groups = partition_tensor(tensor, mode);
  if (groups.size() != codebooks.size()) {
    throw ContractError("tensor '" + tensor.meta.name + "' has " + std::to_string(groups.size()) + " groups but " +
                        std::to_string(codebooks.size()) + " codebooks were given");
  }
  double error = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    RequireAscending(codebooks[g]);
    const std::vector<double> centers(codebooks[g].begin(), codebooks[g].end());
    for (float v : groups[g]) {
      const double d = static_cast<double>(v) - centers[nearest_center(v, centers)];
      error += d * d;
    }
  }
  return error;
}

double quantization_error(std::span<const Tensor> tensors, std::span<const GroupingMode> modes,
                          std::span<const std::vector<Codebook>> codebooks) {
  if (tensors.size() != modes.size() || tensors.size() != codebooks.size()) {
    throw ContractError("tensor, mode and codebook lists must have equal length");
  }
  double error = 0.0;
  for (std::size_t t = 0; t < tensors.size(); ++t) error += quantization_error(tensors[t], modes[t], codebooks[t]);
  return error;
}

unsigned index_bits(std::size_t k) {
  if (k <= 2) return 1;
  return static_cast<unsigned>(std::bit_width(k - 1));
}

double compression_ratio(std::span<const LayerGroups> layers, std::size_t k) {
  if (k < 2) throw ContractError("compression ratio needs K >= 2");
  double elements = 0.0;
  double groups = 0.0;
  for (const auto& layer : layers) {
    if (layer.group_count == 0 || layer.group_size == 0) throw ContractError("layer group counts must be positive");
    elements += static_cast<double>(layer.group_count) * static_cast<double>(layer.group_size);
    groups += static_cast<double>(layer.group_count);
  }
  if (layers.empty()) throw ContractError("compression ratio needs at least one layer");
  const double kk = static_cast<double>(k);
  return 32.0 * elements / (index_bits(k) * elements + 32.0 * groups * kk);
}

}  // namespace dpnet
