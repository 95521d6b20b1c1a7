#ifndef DPNET_TENSOR_QUANT_HPP
#define DPNET_TENSOR_QUANT_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpnet {

enum class LayerKind : std::uint8_t { kFullyConnected, kConvolutional, kOther };

struct TensorMeta {
  std::string name;
  std::vector<std::size_t> shape;
  LayerKind layer_kind = LayerKind::kOther;

  std::size_t element_count() const noexcept;
  std::size_t rank() const noexcept { return shape.size(); }

  /// Rank 2 is fully connected, rank 4 convolutional, anything else other.
  static LayerKind InferKind(std::span<const std::size_t> shape) noexcept;

  friend bool operator==(const TensorMeta&, const TensorMeta&) = default;
};

/// Dense row-major float32 tensor.
struct Tensor {
  TensorMeta meta;
  std::vector<float> data;

  Tensor() = default;
  Tensor(TensorMeta m, std::vector<float> d);
  Tensor(std::string name, std::vector<std::size_t> shape, std::vector<float> d);

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// The numeric values are the on-disk mode byte.
enum class GroupingMode : std::uint8_t { kPerRow = 0, kPerFilter = 1, kWholeTensor = 2 };

std::string to_string(GroupingMode mode);
GroupingMode parse_grouping_mode(const std::string& text);

/// m groups of equal size; every supported mode slices the leading axis.
struct GroupingScheme {
  GroupingMode mode = GroupingMode::kWholeTensor;
  std::size_t group_count = 1;
  std::size_t group_size = 0;

  friend bool operator==(const GroupingScheme&, const GroupingScheme&) = default;
};

/// Per-row for matrices, per-filter for rank-4 kernels, whole-tensor otherwise.
GroupingMode default_grouping_mode(const TensorMeta& meta) noexcept;

/// Validates that `mode` fits the shape and returns the resulting scheme.
GroupingScheme make_grouping_scheme(const TensorMeta& meta, GroupingMode mode);

using Codebook = std::vector<float>;

/// Codebooks (strictly ascending, at most K entries each) plus one index per
/// element in the tensor's own row-major order.
struct QuantizedTensor {
  TensorMeta meta;
  GroupingScheme scheme;
  std::vector<Codebook> codebooks;
  std::vector<std::uint32_t> indices;

  /// Largest codebook; the K written to the container header.
  std::size_t max_codebook_size() const noexcept;

  /// Throws ContractError if an index or codebook breaks the invariants.
  void Validate() const;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

/// Groups are contiguous row-major slices: rows of a matrix, filters of a
/// rank-4 kernel (each filter is in_channels*kh*kw values), or everything.
std::vector<std::span<const float>> partition_tensor(const Tensor& tensor, GroupingMode mode);

struct QuantizeOptions {
  std::size_t k = 8;
  /// Groups are independent; >1 spreads them over worker threads.
  unsigned threads = 1;
};

/// Optimal per-group scalar quantization. A group with fewer elements than
/// K (or fewer distinct values) gets a correspondingly smaller codebook.
QuantizedTensor quantize_tensor(const Tensor& tensor, GroupingMode mode, const QuantizeOptions& options);

/// Per-group squared error of the quantization above, in group order.
std::vector<double> group_losses(const Tensor& tensor, const QuantizedTensor& quantized);

Tensor dequantize_tensor(const QuantizedTensor& quantized);

/// Σ over elements of the squared distance to the nearest entry of that
/// element's group codebook.
double quantization_error(const Tensor& tensor, GroupingMode mode, std::span<const Codebook> codebooks);
double quantization_error(std::span<const Tensor> tensors, std::span<const GroupingMode> modes,
                          std::span<const std::vector<Codebook>> codebooks);

/// Group count and per-group size of one layer.
struct LayerGroups {
  std::size_t group_count = 0;
  std::size_t group_size = 0;
};

/// ⌈log₂K⌉, the fixed index width; never below 1.
unsigned index_bits(std::size_t k);

/// 32·Σnᵢ / (⌈log₂K⌉·Σnᵢ + 32·m·K) over every group of every layer.
double compression_ratio(std::span<const LayerGroups> layers, std::size_t k);

}  // namespace dpnet

#endif  // DPNET_TENSOR_QUANT_HPP
