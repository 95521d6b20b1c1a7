#ifndef DPNET_ERROR_HPP
#define DPNET_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpnet {

/// Raised when a caller violates an operation's precondition
/// (bad index, incompatible shapes, K out of range, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structured failure while decoding a DPNQ container or a dense manifest.
class FormatError : public std::runtime_error {
 public:
  enum class Kind {
    kBadMagic,
    kBadVersion,
    kTruncated,
    kInvalidField,
    kIo,
  };

  FormatError(Kind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(Describe(kind) + " at byte " + std::to_string(offset) + ": " + what),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

  static std::string Describe(Kind kind) {
    switch (kind) {
      case Kind::kBadMagic: return "bad magic";
      case Kind::kBadVersion: return "unsupported version";
      case Kind::kTruncated: return "truncated input";
      case Kind::kInvalidField: return "invalid field";
      case Kind::kIo: return "i/o error";
    }
    return "format error";
  }

 private:
  Kind kind_;
  std::size_t offset_;
};

/// Huffman bitstream that does not decode to the expected symbol count.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::size_t bit_position, const std::string& what)
      : std::runtime_error("huffman decode failed at bit " + std::to_string(bit_position) + ": " + what),
        bit_position_(bit_position) {}

  std::size_t bit_position() const noexcept { return bit_position_; }

 private:
  std::size_t bit_position_;
};

/// Non-finite values showed up in a numerical routine (diverged training, NaN input).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpnet

#endif  // DPNET_ERROR_HPP
