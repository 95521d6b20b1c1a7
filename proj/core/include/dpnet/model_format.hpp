#ifndef DPNET_MODEL_FORMAT_HPP
#define DPNET_MODEL_FORMAT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpnet/tensor_quant.hpp"

namespace dpnet {

// Index coding of one record. Stored in the low bits of the coding byte;
// bit 7 of that byte flags a trailing prune mask.
enum class Coding : std::uint8_t {
  kFixedWidth = 0,
  kHuffman = 1,
  kRaw = 2,  ///< unquantized float32 passthrough (biases and other excluded tensors)
};

std::string to_string(Coding coding);
Coding parse_coding(const std::string& text);

/// Survivor flags for the columns of a tensor's rank-2 view.
struct PruneMask {
  std::vector<bool> keep;

  std::size_t survivors() const noexcept;
  friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

struct TensorRecord {
  Coding coding = Coding::kFixedWidth;
  /// Meaningful for kFixedWidth and kHuffman.
  QuantizedTensor quantized;
  /// Meaningful for kRaw; the meta lives in `quantized.meta` either way.
  std::vector<float> raw;
  std::optional<PruneMask> mask;

  const TensorMeta& meta() const noexcept { return quantized.meta; }

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr char kMagic[4] = {'D', 'P', 'N', 'Q'};

struct CompressedModel {
  std::uint16_t format_version = kFormatVersion;
  std::vector<TensorRecord> tensors;

  friend bool operator==(const CompressedModel&, const CompressedModel&) = default;
};

/// Layout, every integer little-endian:
///
///   "DPNQ" | version u16 | tensor count u32
///   per tensor:
///     name length u16 | name bytes (UTF-8) | rank u8 | dims u32 x rank
///     mode u8 | m u32 | K u16 | coding u8
///     codebooks f32 x (m*K), row g is group g's codebook, a codebook shorter
///       than K is padded by repeating its last entry
///     payload length u64 | payload
///     if coding bit 7: column count u32 | survivor bits packed LSB first
///
/// Payload by coding: fixed-width is pack_indices at ⌈log₂K⌉ bits; Huffman
/// is serialize_huffman_payload; raw has m = K = 0 and float32 values.
std::vector<std::uint8_t> serialize_model(const CompressedModel& model);
CompressedModel deserialize_model(std::span<const std::uint8_t> bytes);

/// Serialized size of each part of one record, for reports.
struct RecordSizes {
  std::size_t header_bytes = 0;
  std::size_t codebook_bytes = 0;
  std::size_t payload_bytes = 0;
  std::size_t mask_bytes = 0;
  std::size_t total() const noexcept { return header_bytes + codebook_bytes + payload_bytes + mask_bytes; }
};

RecordSizes record_sizes(const TensorRecord& record);
inline constexpr std::size_t kFileHeaderBytes = 4 + 2 + 4;

/// Index bits of a fixed-width record before byte padding: ⌈log₂K⌉·Σnᵢ.
std::uint64_t fixed_width_index_bits(const QuantizedTensor& quantized);
/// Codebook bits as stored: 32·m·K.
std::uint64_t codebook_bits(const QuantizedTensor& quantized);

/// Builds a record, choosing the payload coding.
TensorRecord make_record(QuantizedTensor quantized, Coding coding, std::optional<PruneMask> mask = std::nullopt);
TensorRecord make_raw_record(const Tensor& tensor);

/// Dense tensor reconstructed from a record of any coding.
Tensor decode_record(const TensorRecord& record);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Rows x columns view for pruning: rank-2 as is, rank-4 as
/// out_channels x (in_channels*kh*kw), anything else as 1 x n.
std::pair<std::size_t, std::size_t> matrix_view(const TensorMeta& meta) noexcept;

struct PruneResult {
  Tensor pruned;
  PruneMask mask;
};

/// Zeroes the ⌊sparsity·columns⌋ columns with the smallest L2 norm,
/// lower column index first on ties.
PruneResult prune_columns(const Tensor& tensor, double sparsity);

/// Uncompressed model stored as a JSON manifest beside a raw blob of
/// little-endian float32 values in row-major order:
///
///   {"format": "dpnet-dense", "version": 1, "blob": "<file name>",
///    "tensors": [{"name": ..., "shape": [...], "dtype": "float32",
///                 "offset": <byte offset>, "count": <elements>}, ...]}
///
/// The blob path is relative to the manifest's directory.
struct DenseModel {
  std::vector<Tensor> tensors;
  friend bool operator==(const DenseModel&, const DenseModel&) = default;
};

DenseModel read_dense_model(const std::filesystem::path& manifest_path);
/// Writes the manifest and a blob named after it with a ".bin" extension.
void write_dense_model(const DenseModel& model, const std::filesystem::path& manifest_path);

}  // namespace dpnet

#endif  // DPNET_MODEL_FORMAT_HPP
