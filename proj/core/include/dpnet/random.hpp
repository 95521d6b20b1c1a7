#ifndef DPNET_RANDOM_HPP
#define DPNET_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace dpnet {

// std:: distributions are implementation-defined, so results would differ
// between standard libraries. These helpers only rely on the engine's
// output sequence, which the standard does pin down.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Uniform integer in [0, bound).
  std::uint64_t Below(std::uint64_t bound) {
    // Lemire's multiply-shift; bias is < bound / 2^64.
    __extension__ using u128 = unsigned __int128;
    const u128 product = static_cast<u128>(engine_()) * bound;
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// Standard normal via Box-Muller (one draw per call, the pair's twin is cached).
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  /// Fisher-Yates with Below(); std::shuffle's draw pattern is unspecified.
  template <typename It>
  void Shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = Below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dpnet

#endif  // DPNET_RANDOM_HPP
