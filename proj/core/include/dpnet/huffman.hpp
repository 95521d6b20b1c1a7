#ifndef DPNET_HUFFMAN_HPP
#define DPNET_HUFFMAN_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpnet {

/// Canonical Huffman code described by its per-symbol code lengths alone.
///
/// Symbols absent from the stream have length 0. Codes are assigned in
/// (length, symbol) order, each code one more than the previous shifted
/// left by the length difference. In a bitstream every code is emitted most
/// significant bit first; the bits themselves fill bytes LSB first.
struct HuffmanTable {
  std::vector<std::uint8_t> code_lengths;

  /// Code of each symbol (meaningless where the length is 0).
  std::vector<std::uint64_t> Codes() const;
  /// Code of `symbol` as a '0'/'1' string, for diagnostics and tests.
  std::string CodeString(std::uint32_t symbol) const;

  /// Table bytes as stored: u16 symbol count then one u8 length per symbol.
  std::size_t serialized_size() const noexcept { return 2 + code_lengths.size(); }

  friend bool operator==(const HuffmanTable&, const HuffmanTable&) = default;
};

inline constexpr unsigned kMaxHuffmanCodeLength = 32;

struct HuffmanEncoded {
  HuffmanTable table;
  std::vector<std::uint8_t> bitstream;
  std::size_t bit_count = 0;
};

/// Builds the optimal length-limited prefix code for `indices` and encodes
/// them. A stream with one distinct symbol gets a 1-bit code.
HuffmanEncoded huffman_encode(std::span<const std::uint32_t> indices);

/// Decodes exactly `n` symbols. Throws DecodeError (with the bit position)
/// on an invalid code, a short stream, or more than padding left over.
std::vector<std::uint32_t> huffman_decode(const HuffmanTable& table, std::span<const std::uint8_t> bitstream,
                                          std::size_t n);

/// Table followed by the bitstream; the Huffman payload layout of a DPNQ record.
std::vector<std::uint8_t> serialize_huffman_payload(const HuffmanEncoded& encoded);
std::vector<std::uint32_t> deserialize_huffman_payload(std::span<const std::uint8_t> payload, std::size_t n);

}  // namespace dpnet

#endif  // DPNET_HUFFMAN_HPP
