#include "dpnet/huffman.hpp"

#include <algorithm>
#include <queue>

#include "dpnet/bitpack.hpp"
#include "dpnet/error.hpp"

namespace dpnet {

namespace {

constexpr std::size_t kMaxAlphabet = 0xFFFF;

// Code lengths of a plain Huffman tree. Ties between equal weights break
// toward the lower node id, leaves (ids = symbols) before merged nodes.
std::vector<std::uint8_t> TreeLengths(const std::vector<std::uint64_t>& freq) {
  const std::size_t alphabet = freq.size();
  std::vector<std::uint8_t> lengths(alphabet, 0);
  std::size_t used = 0;
  for (auto f : freq) used += (f > 0);
  if (used == 0) return lengths;
  if (used == 1) {
    for (std::size_t s = 0; s < alphabet; ++s) {
      if (freq[s] > 0) lengths[s] = 1;
    }
    return lengths;
  }

  using Entry = std::pair<std::uint64_t, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  std::vector<std::uint32_t> parent(alphabet + used, 0);
  for (std::size_t s = 0; s < alphabet; ++s) {
    if (freq[s] > 0) heap.emplace(freq[s], static_cast<std::uint32_t>(s));
  }
  auto next_id = static_cast<std::uint32_t>(alphabet);
  while (heap.size() > 1) {
    const auto a = heap.top();
    heap.pop();
    const auto b = heap.top();
    heap.pop();
    parent[a.second] = next_id;
    parent[b.second] = next_id;
    heap.emplace(a.first + b.first, next_id);
    ++next_id;
  }
  const std::uint32_t root = heap.top().second;
  // Internal ids increase toward the root, so one descending sweep sets depths.
  std::vector<std::uint32_t> depth(next_id, 0);
  for (std::uint32_t id = root; id-- > alphabet;) depth[id] = depth[parent[id]] + 1;
  for (std::size_t s = 0; s < alphabet; ++s) {
    if (freq[s] > 0) {
      const std::uint32_t d = depth[parent[s]] + 1;
      lengths[s] = static_cast<std::uint8_t>(std::min<std::uint32_t>(d, 255));
    }
  }
  return lengths;
}

// First canonical code of each length given the per-length code counts.
std::vector<std::uint64_t> FirstCodes(const std::vector<std::uint64_t>& count) {
  std::vector<std::uint64_t> first(count.size(), 0);
  std::uint64_t code = 0;
  for (std::size_t len = 1; len < count.size(); ++len) {
    code = (code + count[len - 1]) << 1;
    first[len] = code;
  }
  return first;
}

struct DecodeTable {
  // Per length L: first canonical code, number of codes, offset into `symbols`.
  std::vector<std::uint64_t> first_code;
  std::vector<std::uint64_t> count;
  std::vector<std::size_t> offset;
  std::vector<std::uint32_t> symbols;
  unsigned max_length = 0;
};

DecodeTable BuildDecodeTable(const HuffmanTable& table) {
  DecodeTable dt;
  for (auto len : table.code_lengths) {
    if (len > kMaxHuffmanCodeLength) throw DecodeError(0, "code length " + std::to_string(len) + " exceeds limit");
    dt.max_length = std::max<unsigned>(dt.max_length, len);
  }
  if (dt.max_length == 0) throw DecodeError(0, "code table has no symbols");

  dt.count.assign(dt.max_length + 1, 0);
  for (auto len : table.code_lengths) {
    if (len > 0) ++dt.count[len];
  }
  // Kraft inequality; an over-full table cannot be a prefix code.
  std::uint64_t kraft = 0;
  for (unsigned len = 1; len <= dt.max_length; ++len) kraft += dt.count[len] << (dt.max_length - len);
  if (kraft > (std::uint64_t{1} << dt.max_length)) throw DecodeError(0, "code lengths violate the Kraft inequality");

  dt.first_code = FirstCodes(dt.count);
  dt.offset.assign(dt.max_length + 1, 0);
  std::size_t offset = 0;
  for (unsigned len = 1; len <= dt.max_length; ++len) {
    dt.offset[len] = offset;
    offset += dt.count[len];
  }
  dt.symbols.resize(offset);
  std::vector<std::size_t> fill(dt.offset);
  for (std::size_t s = 0; s < table.code_lengths.size(); ++s) {
    const auto len = table.code_lengths[s];
    if (len > 0) dt.symbols[fill[len]++] = static_cast<std::uint32_t>(s);
  }
  return dt;
}

}  // namespace

std::vector<std::uint64_t> HuffmanTable::Codes() const {
  unsigned max_length = 0;
  for (auto len : code_lengths) max_length = std::max<unsigned>(max_length, len);
  std::vector<std::uint64_t> count(max_length + 1, 0);
  for (auto len : code_lengths) {
    if (len > 0) ++count[len];
  }
  auto next = FirstCodes(count);
  std::vector<std::uint64_t> codes(code_lengths.size(), 0);
  for (std::size_t s = 0; s < code_lengths.size(); ++s) {
    if (code_lengths[s] > 0) codes[s] = next[code_lengths[s]]++;
  }
  return codes;
}

std::string HuffmanTable::CodeString(std::uint32_t symbol) const {
  const unsigned len = code_lengths.at(symbol);
  const std::uint64_t code = Codes()[symbol];
  std::string out;
  for (unsigned b = len; b-- > 0;) out.push_back(((code >> b) & 1u) ? '1' : '0');
  return out;
}

HuffmanEncoded huffman_encode(std::span<const std::uint32_t> indices) {
  if (indices.empty()) throw ContractError("huffman_encode needs a non-empty stream");
  const std::uint32_t max_symbol = *std::max_element(indices.begin(), indices.end());
  if (max_symbol >= kMaxAlphabet) throw ContractError("symbol " + std::to_string(max_symbol) + " exceeds the alphabet limit");

  std::vector<std::uint64_t> freq(static_cast<std::size_t>(max_symbol) + 1, 0);
  for (auto s : indices) ++freq[s];

  auto lengths = TreeLengths(freq);
  // Flatten the distribution until the deepest code fits the limit.
  while (*std::max_element(lengths.begin(), lengths.end()) > kMaxHuffmanCodeLength) {
    for (auto& f : freq) {
      if (f > 0) f = (f >> 1) | 1u;
    }
    lengths = TreeLengths(freq);
  }

  HuffmanEncoded out;
  out.table.code_lengths = std::move(lengths);
  const auto codes = out.table.Codes();
  BitWriter writer;
  for (auto s : indices) {
    const unsigned len = out.table.code_lengths[s];
    for (unsigned b = len; b-- > 0;) writer.WriteBit(((codes[s] >> b) & 1u) != 0);
  }
  out.bit_count = writer.bit_count();
  out.bitstream = std::move(writer).Finish();
  return out;
}

std::vector<std::uint32_t> huffman_decode(const HuffmanTable& table, std::span<const std::uint8_t> bitstream,
                                          std::size_t n) {
  const auto dt = BuildDecodeTable(table);
  BitReader reader(bitstream);
  std::vector<std::uint32_t> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::size_t symbol_start = reader.position();
    std::uint64_t code = 0;
    unsigned len = 0;
    while (true) {
      if (reader.exhausted()) {
        throw DecodeError(reader.position(), "stream ended after " + std::to_string(out.size()) + " of " +
                                                 std::to_string(n) + " symbols");
      }
      code = (code << 1) | static_cast<std::uint64_t>(reader.ReadBit());
      ++len;
      if (len > dt.max_length) throw DecodeError(symbol_start, "bit pattern matches no code");
      if (code - dt.first_code[len] < dt.count[len] && code >= dt.first_code[len]) {
        out.push_back(dt.symbols[dt.offset[len] + (code - dt.first_code[len])]);
        break;
      }
    }
  }
  const std::size_t total_bits = bitstream.size() * 8;
  if (total_bits - reader.position() >= 8) {
    throw DecodeError(reader.position(), "unexpected trailing data after " + std::to_string(n) + " symbols");
  }
  return out;
}

std::vector<std::uint8_t> serialize_huffman_payload(const HuffmanEncoded& encoded) {
  const auto& lengths = encoded.table.code_lengths;
  std::vector<std::uint8_t> out;
  out.reserve(encoded.table.serialized_size() + encoded.bitstream.size());
  const auto count = static_cast<std::uint16_t>(lengths.size());
  out.push_back(static_cast<std::uint8_t>(count & 0xFF));
  out.push_back(static_cast<std::uint8_t>(count >> 8));
  out.insert(out.end(), lengths.begin(), lengths.end());
  out.insert(out.end(), encoded.bitstream.begin(), encoded.bitstream.end());
  return out;
}

std::vector<std::uint32_t> deserialize_huffman_payload(std::span<const std::uint8_t> payload, std::size_t n) {
  if (payload.size() < 2) throw DecodeError(0, "payload too short for a code table");
  const std::size_t count = payload[0] | (static_cast<std::size_t>(payload[1]) << 8);
  if (payload.size() < 2 + count) throw DecodeError(16, "payload truncated inside the code table");
  HuffmanTable table;
  table.code_lengths.assign(payload.begin() + 2, payload.begin() + 2 + static_cast<std::ptrdiff_t>(count));
  return huffman_decode(table, payload.subspan(2 + count), n);
}

}  // namespace dpnet
