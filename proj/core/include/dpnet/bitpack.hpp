#ifndef DPNET_BITPACK_HPP
#define DPNET_BITPACK_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpnet {

/// Packs each index into `bits` bits (1..8), least significant bit first,
/// filling each byte from bit 0 upward. The final byte is zero padded, so
/// the output is ⌈n·bits/8⌉ bytes.
std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, unsigned bits);

/// Inverse of pack_indices. `bytes` must be exactly ⌈n·bits/8⌉ long.
std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, unsigned bits, std::size_t n);

inline constexpr std::size_t packed_size(std::size_t n, unsigned bits) noexcept { return (n * bits + 7) / 8; }

/// LSB-first bit sink shared by the packer and the Huffman coder.
class BitWriter {
 public:
  /// Appends the low `count` bits of `value`, lowest bit first.
  void Write(std::uint64_t value, unsigned count);
  /// Appends one bit.
  void WriteBit(bool bit);

  std::size_t bit_count() const noexcept { return bits_; }
  std::vector<std::uint8_t> Finish() &&;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool exhausted() const noexcept { return position_ >= bytes_.size() * 8; }
  std::size_t position() const noexcept { return position_; }
  bool ReadBit();
  std::uint64_t Read(unsigned count);

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t position_ = 0;
};

}  // namespace dpnet

#endif  // DPNET_BITPACK_HPP
