#include "dpnet/bitpack.hpp"

#include <string>

#include "dpnet/error.hpp"

namespace dpnet {

void BitWriter::WriteBit(bool bit) {
  if (bits_ % 8 == 0) bytes_.push_back(0);
  if (bit) bytes_.back() |= static_cast<std::uint8_t>(1u << (bits_ % 8));
  ++bits_;
}

void BitWriter::Write(std::uint64_t value, unsigned count) {
  for (unsigned b = 0; b < count; ++b) WriteBit(((value >> b) & 1u) != 0);
}

std::vector<std::uint8_t> BitWriter::Finish() && { return std::move(bytes_); }

bool BitReader::ReadBit() {
  if (exhausted()) throw ContractError("bit reader ran past the end of its buffer");
  const bool bit = ((bytes_[position_ / 8] >> (position_ % 8)) & 1u) != 0;
  ++position_;
  return bit;
}

std::uint64_t BitReader::Read(unsigned count) {
  std::uint64_t value = 0;
  for (unsigned b = 0; b < count; ++b) value |= static_cast<std::uint64_t>(ReadBit()) << b;
  return value;
}

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, unsigned bits) {
  if (bits < 1 || bits > 8) throw ContractError("index width must be within 1..8 bits, got " + std::to_string(bits));
  const std::uint32_t limit = 1u << bits;
  std::vector<std::uint8_t> out(packed_size(indices.size(), bits), 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint32_t v = indices[i];
    if (v >= limit) {
      throw ContractError("index " + std::to_string(v) + " at position " + std::to_string(i) + " does not fit in " +
                          std::to_string(bits) + " bits");
    }
    // A value of at most 8 bits spans at most two bytes.
    const std::size_t byte = bit / 8;
    const unsigned shift = bit % 8;
    const std::uint32_t shifted = v << shift;
    out[byte] |= static_cast<std::uint8_t>(shifted & 0xFFu);
    if (shift + bits > 8) out[byte + 1] |= static_cast<std::uint8_t>(shifted >> 8);
    bit += bits;
  }
  return out;
}

std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, unsigned bits, std::size_t n) {
  if (bits < 1 || bits > 8) throw ContractError("index width must be within 1..8 bits, got " + std::to_string(bits));
  if (bytes.size() != packed_size(n, bits)) {
    throw ContractError("packed buffer has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(packed_size(n, bits)));
  }
  const std::uint32_t mask = (1u << bits) - 1u;
  std::vector<std::uint32_t> out(n);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t byte = bit / 8;
    const unsigned shift = bit % 8;
    std::uint32_t window = bytes[byte];
    if (shift + bits > 8) window |= static_cast<std::uint32_t>(bytes[byte + 1]) << 8;
    out[i] = (window >> shift) & mask;
    bit += bits;
  }
  return out;
}

}  // namespace dpnet
