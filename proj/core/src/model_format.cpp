#include "dpnet/model_format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dpnet/bitpack.hpp"
#include "dpnet/error.hpp"
#include "dpnet/huffman.hpp"

namespace dpnet {

namespace {

constexpr std::uint8_t kMaskFlag = 0x80;
constexpr std::uint8_t kCodingBits = 0x7F;

class ByteWriter {
 public:
  void U8(std::uint8_t v) { out_.push_back(v); }
  void U16(std::uint16_t v) { Le(v, 2); }
  void U32(std::uint32_t v) { Le(v, 4); }
  void U64(std::uint64_t v) { Le(v, 8); }
  void F32(float v) { U32(std::bit_cast<std::uint32_t>(v)); }
  void Bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t> Take() && { return std::move(out_); }

 private:
  void Le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

  std::uint8_t U8(const char* field) { return static_cast<std::uint8_t>(Le(1, field)); }
  std::uint16_t U16(const char* field) { return static_cast<std::uint16_t>(Le(2, field)); }
  std::uint32_t U32(const char* field) { return static_cast<std::uint32_t>(Le(4, field)); }
  std::uint64_t U64(const char* field) { return Le(8, field); }
  float F32(const char* field) { return std::bit_cast<float>(U32(field)); }

  std::span<const std::uint8_t> Bytes(std::uint64_t n, const char* field) {
    Need(n, field);
    auto out = bytes_.subspan(offset_, static_cast<std::size_t>(n));
    offset_ += static_cast<std::size_t>(n);
    return out;
  }

 private:
  void Need(std::uint64_t n, const char* field) const {
    if (n > remaining()) {
      throw FormatError(FormatError::Kind::kTruncated, offset_,
                        std::string("need ") + std::to_string(n) + " bytes for " + field + ", " +
                            std::to_string(remaining()) + " left");
    }
  }
  std::uint64_t Le(int n, const char* field) {
    Need(static_cast<std::uint64_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> EncodePayload(const TensorRecord& record) {
  switch (record.coding) {
    case Coding::kFixedWidth: {
      const unsigned bits = index_bits(record.quantized.max_codebook_size());
      return pack_indices(record.quantized.indices, bits);
    }
    case Coding::kHuffman:
      return serialize_huffman_payload(huffman_encode(record.quantized.indices));
    case Coding::kRaw: {
      ByteWriter w;
      for (float v : record.raw) w.F32(v);
      return std::move(w).Take();
    }
  }
  throw ContractError("unknown coding");
}

std::vector<std::uint8_t> PackMask(const PruneMask& mask) {
  BitWriter w;
  for (bool b : mask.keep) w.WriteBit(b);
  return std::move(w).Finish();
}

void RequireEncodable(const TensorRecord& record) {
  const auto& meta = record.meta();
  if (meta.name.size() > 0xFFFF) throw ContractError("tensor name longer than 65535 bytes");
  if (meta.rank() > 0xFF) throw ContractError("tensor rank above 255");
  for (auto d : meta.shape) {
    if (d == 0 || d > 0xFFFFFFFFu) throw ContractError("tensor dimension out of u32 range");
  }
  if (record.coding == Coding::kRaw) {
    if (record.raw.size() != meta.element_count()) throw ContractError("raw record length does not match shape");
  } else {
    record.quantized.Validate();
    const std::size_t k = record.quantized.max_codebook_size();
    if (k > 0xFFFF) throw ContractError("K above 65535 cannot be stored");
    if (record.coding == Coding::kFixedWidth && index_bits(k) > 8) {
      throw ContractError("fixed-width coding supports at most 256 codebook entries");
    }
  }
  if (record.mask && record.mask->keep.size() != matrix_view(meta).second) {
    throw ContractError("prune mask length does not match the column count");
  }
}

}  // namespace

std::string to_string(Coding coding) {
  switch (coding) {
    case Coding::kFixedWidth: return "fixed";
    case Coding::kHuffman: return "huffman";
    case Coding::kRaw: return "raw";
  }
  return "unknown";
}

Coding parse_coding(const std::string& text) {
  if (text == "fixed" || text == "fixed-width") return Coding::kFixedWidth;
  if (text == "huffman") return Coding::kHuffman;
  if (text == "raw") return Coding::kRaw;
  throw ContractError("unknown coding '" + text + "'");
}

std::size_t PruneMask::survivors() const noexcept {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
}

TensorRecord make_record(QuantizedTensor quantized, Coding coding, std::optional<PruneMask> mask) {
  if (coding == Coding::kRaw) throw ContractError("use make_raw_record for unquantized tensors");
  TensorRecord record;
  record.coding = coding;
  record.quantized = std::move(quantized);
  record.mask = std::move(mask);
  RequireEncodable(record);
  return record;
}

TensorRecord make_raw_record(const Tensor& tensor) {
  TensorRecord record;
  record.coding = Coding::kRaw;
  record.quantized.meta = tensor.meta;
  record.quantized.scheme = make_grouping_scheme(tensor.meta, GroupingMode::kWholeTensor);
  record.raw = tensor.data;
  return record;
}

Tensor decode_record(const TensorRecord& record) {
  if (record.coding == Coding::kRaw) return Tensor(record.meta(), record.raw);
  return dequantize_tensor(record.quantized);
}

std::uint64_t fixed_width_index_bits(const QuantizedTensor& quantized) {
  return static_cast<std::uint64_t>(index_bits(quantized.max_codebook_size())) * quantized.indices.size();
}

std::uint64_t codebook_bits(const QuantizedTensor& quantized) {
  return 32ull * quantized.scheme.group_count * quantized.max_codebook_size();
}

RecordSizes record_sizes(const TensorRecord& record) {
  RecordSizes sizes;
  const auto& meta = record.meta();
  sizes.header_bytes = 2 + meta.name.size() + 1 + 4 * meta.rank() + 1 + 4 + 2 + 1 + 8;
  if (record.coding != Coding::kRaw) sizes.codebook_bytes = codebook_bits(record.quantized) / 8;
  sizes.payload_bytes = EncodePayload(record).size();
  if (record.mask) sizes.mask_bytes = 4 + (record.mask->keep.size() + 7) / 8;
  return sizes;
}

std::vector<std::uint8_t> serialize_model(const CompressedModel& model) {
  if (model.format_version != kFormatVersion) throw ContractError("only format version 1 can be written");
  if (model.tensors.size() > 0xFFFFFFFFu) throw ContractError("too many tensors");
  ByteWriter w;
  for (char c : kMagic) w.U8(static_cast<std::uint8_t>(c));
  w.U16(model.format_version);
  w.U32(static_cast<std::uint32_t>(model.tensors.size()));

  for (const auto& record : model.tensors) {
    RequireEncodable(record);
    const auto& meta = record.meta();
    w.U16(static_cast<std::uint16_t>(meta.name.size()));
    w.Bytes({reinterpret_cast<const std::uint8_t*>(meta.name.data()), meta.name.size()});
    w.U8(static_cast<std::uint8_t>(meta.rank()));
    for (auto d : meta.shape) w.U32(static_cast<std::uint32_t>(d));

    const bool raw = record.coding == Coding::kRaw;
    const auto& q = record.quantized;
    const std::size_t k = raw ? 0 : q.max_codebook_size();
    w.U8(static_cast<std::uint8_t>(q.scheme.mode));
    w.U32(raw ? 0u : static_cast<std::uint32_t>(q.scheme.group_count));
    w.U16(static_cast<std::uint16_t>(k));
    w.U8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(record.coding) | (record.mask ? kMaskFlag : 0)));
    if (!raw) {
      for (const auto& cb : q.codebooks) {
        for (std::size_t i = 0; i < k; ++i) w.F32(i < cb.size() ? cb[i] : cb.back());
      }
    }
    const auto payload = EncodePayload(record);
    w.U64(payload.size());
    w.Bytes(payload);
    if (record.mask) {
      w.U32(static_cast<std::uint32_t>(record.mask->keep.size()));
      w.Bytes(PackMask(*record.mask));
    }
  }
  return std::move(w).Take();
}

CompressedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.Bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic), [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
    throw FormatError(FormatError::Kind::kBadMagic, 0, "expected \"DPNQ\"");
  }
  CompressedModel model;
  model.format_version = r.U16("version");
  if (model.format_version != kFormatVersion) {
    throw FormatError(FormatError::Kind::kBadVersion, 4, "version " + std::to_string(model.format_version));
  }
  const std::uint32_t count = r.U32("tensor count");

  for (std::uint32_t t = 0; t < count; ++t) {
    TensorRecord record;
    TensorMeta meta;
    const std::uint16_t name_len = r.U16("name length");
    const auto name = r.Bytes(name_len, "name");
    meta.name.assign(name.begin(), name.end());
    const std::uint8_t rank = r.U8("rank");
    if (rank == 0) throw FormatError(FormatError::Kind::kInvalidField, r.offset() - 1, "rank 0 tensor '" + meta.name + "'");
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.U32("dimension");
      if (dim == 0) throw FormatError(FormatError::Kind::kInvalidField, r.offset() - 4, "zero dimension");
      elements *= dim;
      if (elements > (std::uint64_t{1} << 40)) {
        throw FormatError(FormatError::Kind::kInvalidField, r.offset() - 4, "tensor too large");
      }
      meta.shape.push_back(dim);
    }
    meta.layer_kind = TensorMeta::InferKind(meta.shape);

    const std::size_t mode_offset = r.offset();
    const std::uint8_t mode_byte = r.U8("mode");
    const std::uint32_t m = r.U32("group count");
    const std::uint16_t k = r.U16("K");
    const std::size_t coding_offset = r.offset();
    const std::uint8_t coding_byte = r.U8("coding");
    const std::uint8_t coding_value = coding_byte & kCodingBits;
    if (coding_value > static_cast<std::uint8_t>(Coding::kRaw)) {
      throw FormatError(FormatError::Kind::kInvalidField, coding_offset, "coding " + std::to_string(coding_value));
    }
    record.coding = static_cast<Coding>(coding_value);
    if (mode_byte > static_cast<std::uint8_t>(GroupingMode::kWholeTensor)) {
      throw FormatError(FormatError::Kind::kInvalidField, mode_offset, "mode " + std::to_string(mode_byte));
    }

    GroupingScheme scheme;
    try {
      scheme = make_grouping_scheme(meta, static_cast<GroupingMode>(mode_byte));
    } catch (const ContractError& e) {
      throw FormatError(FormatError::Kind::kInvalidField, mode_offset, e.what());
    }
    record.quantized.meta = meta;
    record.quantized.scheme = scheme;

    if (record.coding == Coding::kRaw) {
      if (m != 0 || k != 0) throw FormatError(FormatError::Kind::kInvalidField, mode_offset, "raw record with codebooks");
    } else {
      if (m != scheme.group_count) {
        throw FormatError(FormatError::Kind::kInvalidField, mode_offset + 1,
                          "group count " + std::to_string(m) + " does not match shape (" +
                              std::to_string(scheme.group_count) + ")");
      }
      if (k == 0) throw FormatError(FormatError::Kind::kInvalidField, mode_offset + 5, "K is zero");
      if (static_cast<std::uint64_t>(m) * k * 4 > r.remaining()) {
        throw FormatError(FormatError::Kind::kTruncated, r.offset(), "codebooks exceed remaining bytes");
      }
      record.quantized.codebooks.resize(m);
      for (auto& cb : record.quantized.codebooks) {
        cb.reserve(k);
        for (std::uint16_t i = 0; i < k; ++i) {
          const float v = r.F32("codebook");
          // Padding repeats the last real entry; real entries strictly ascend.
          if (cb.empty() || v != cb.back()) cb.push_back(v);
        }
      }
    }

    const std::uint64_t payload_len = r.U64("payload length");
    const std::size_t payload_offset = r.offset();
    const auto payload = r.Bytes(payload_len, "payload");
    const std::size_t n = static_cast<std::size_t>(elements);
    try {
      switch (record.coding) {
        case Coding::kFixedWidth:
          record.quantized.indices = unpack_indices(payload, index_bits(k), n);
          break;
        case Coding::kHuffman:
          record.quantized.indices = deserialize_huffman_payload(payload, n);
          break;
        case Coding::kRaw: {
          if (payload.size() != 4 * n) throw ContractError("raw payload length does not match shape");
          ByteReader pr(payload);
          record.raw.resize(n);
          for (auto& v : record.raw) v = pr.F32("raw value");
          break;
        }
      }
      if (record.coding != Coding::kRaw) record.quantized.Validate();
    } catch (const ContractError& e) {
      throw FormatError(FormatError::Kind::kInvalidField, payload_offset, "tensor '" + meta.name + "': " + e.what());
    } catch (const DecodeError& e) {
      throw FormatError(FormatError::Kind::kInvalidField, payload_offset, "tensor '" + meta.name + "': " + e.what());
    }

    if ((coding_byte & kMaskFlag) != 0) {
      const std::uint32_t columns = r.U32("mask column count");
      if (columns != matrix_view(meta).second) {
        throw FormatError(FormatError::Kind::kInvalidField, r.offset() - 4, "mask column count mismatch");
      }
      const auto mask_bytes = r.Bytes((static_cast<std::uint64_t>(columns) + 7) / 8, "mask");
      BitReader br(mask_bytes);
      PruneMask mask;
      mask.keep.resize(columns);
      for (std::uint32_t c = 0; c < columns; ++c) mask.keep[c] = br.ReadBit();
      record.mask = std::move(mask);
    }
    model.tensors.push_back(std::move(record));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::kInvalidField, r.offset(),
                      std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  }
  return model;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "failed writing " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::pair<std::size_t, std::size_t> matrix_view(const TensorMeta& meta) noexcept {
  const std::size_t total = meta.element_count();
  if (meta.rank() == 2 || meta.rank() == 4) return {meta.shape[0], total / meta.shape[0]};
  return {1, total};
}

PruneResult prune_columns(const Tensor& tensor, double sparsity) {
  if (!(sparsity >= 0.0) || sparsity >= 1.0) {
    throw ContractError("sparsity must lie in [0, 1), got " + std::to_string(sparsity));
  }
  const auto [rows, cols] = matrix_view(tensor.meta);
  std::vector<double> norms(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = tensor.data[r * cols + c];
      norms[c] += v * v;
    }
  }
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });

  const auto drop = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(cols)));
  PruneResult result{tensor, PruneMask{std::vector<bool>(cols, true)}};
  for (std::size_t i = 0; i < drop; ++i) {
    const std::size_t c = order[i];
    result.mask.keep[c] = false;
    for (std::size_t r = 0; r < rows; ++r) result.pruned.data[r * cols + c] = 0.0f;
  }
  return result;
}

DenseModel read_dense_model(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(FormatError::Kind::kInvalidField, e.byte, std::string("manifest is not valid JSON: ") + e.what());
  }

  DenseModel model;
  try {
    if (manifest.value("format", "") != "dpnet-dense") {
      throw FormatError(FormatError::Kind::kBadMagic, 0, "manifest format must be \"dpnet-dense\"");
    }
    if (manifest.value("version", 0) != 1) throw FormatError(FormatError::Kind::kBadVersion, 0, "manifest version must be 1");
    const auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    const auto blob = read_file(blob_path);
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      if (entry.value("dtype", "float32") != "float32") {
        throw FormatError(FormatError::Kind::kInvalidField, 0, "tensor '" + name + "' is not float32");
      }
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      if (shape.empty() || count == 0) throw FormatError(FormatError::Kind::kInvalidField, 0, "tensor '" + name + "' has an empty shape");
      if (entry.contains("count") && entry.at("count").get<std::size_t>() != count) {
        throw FormatError(FormatError::Kind::kInvalidField, 0, "tensor '" + name + "' count does not match shape");
      }
      if (offset % 4 != 0 || offset + 4 * static_cast<std::uint64_t>(count) > blob.size()) {
        throw FormatError(FormatError::Kind::kTruncated, static_cast<std::size_t>(offset),
                          "tensor '" + name + "' lies outside the blob");
      }
      std::vector<float> data(count);
      ByteReader reader(std::span<const std::uint8_t>(blob).subspan(static_cast<std::size_t>(offset), 4 * count));
      for (auto& v : data) v = reader.F32("blob value");
      model.tensors.emplace_back(name, std::move(shape), std::move(data));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kInvalidField, 0, std::string("malformed manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(FormatError::Kind::kInvalidField, 0, std::string("malformed manifest: ") + e.what());
  }
  return model;
}

void write_dense_model(const DenseModel& model, const std::filesystem::path& manifest_path) {
  auto blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  nlohmann::json manifest;
  manifest["format"] = "dpnet-dense";
  manifest["version"] = 1;
  manifest["blob"] = blob_path.filename().string();
  manifest["tensors"] = nlohmann::json::array();

  ByteWriter blob;
  std::uint64_t offset = 0;
  for (const auto& t : model.tensors) {
    manifest["tensors"].push_back({{"name", t.meta.name},
                                   {"shape", t.meta.shape},
                                   {"dtype", "float32"},
                                   {"offset", offset},
                                   {"count", t.data.size()}});
    for (float v : t.data) blob.F32(v);
    offset += 4 * t.data.size();
  }
  write_file(blob_path, std::move(blob).Take());
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + manifest_path.string() + " for writing");
  out << manifest.dump(2) << '\n';
}

}  // namespace dpnet
