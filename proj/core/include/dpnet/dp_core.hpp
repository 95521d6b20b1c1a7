#ifndef DPNET_DP_CORE_HPP
#define DPNET_DP_CORE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpnet {

/// Sorted copy of a weight group with 64-bit prefix sums.
///
/// `values()` is ascending; `order()[i]` is the position in the original
/// input that `values()[i]` came from (stable for duplicates). The prefix
/// arrays are inclusive: `prefix_sum()[i] == values()[0] + ... + values()[i]`.
class SortedWeights {
 public:
  SortedWeights() = default;
  explicit SortedWeights(std::span<const double> values);
  explicit SortedWeights(std::span<const float> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> prefix_sum() const noexcept { return prefix_sum_; }
  std::span<const double> prefix_sq_sum() const noexcept { return prefix_sq_sum_; }
  std::span<const std::size_t> order() const noexcept { return order_; }

  /// Σ values[l..q] and Σ values[l..q]², inclusive bounds.
  double RangeSum(std::size_t l, std::size_t q) const noexcept;
  double RangeSqSum(std::size_t l, std::size_t q) const noexcept;

  /// Scatters a per-sorted-position array back to input order.
  template <typename T>
  std::vector<T> ToInputOrder(std::span<const T> sorted) const {
    std::vector<T> out(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) out[order_[i]] = sorted[i];
    return out;
  }

 private:
  void Build(std::vector<double> data);

  std::vector<double> values_;
  std::vector<double> prefix_sum_;
  std::vector<double> prefix_sq_sum_;
  std::vector<std::size_t> order_;
};

/// K centers, one index per element and the squared-error loss.
///
/// `assignment` is aligned with whatever sequence the producing routine
/// received: sorted order for dp_cluster (it takes SortedWeights), input
/// order for the routines that take a raw array.
struct ClusteringSolution {
  std::vector<double> centers;
  std::vector<std::uint32_t> assignment;
  double loss = 0.0;

  friend bool operator==(const ClusteringSolution&, const ClusteringSolution&) = default;
};

/// Minimum squared error of clustering values[l..q] into a single cluster.
/// Constant time from the prefix arrays; never negative.
double segment_cost(const SortedWeights& w, std::size_t l, std::size_t q);

/// Populated by dp_cluster when the caller wants the work counted.
struct DpCounters {
  std::uint64_t relaxations = 0;
};

/// Globally optimal 1-D k-means with K clusters.
///
/// Fills an (n+1)x(K+1) table where entry (i, k) is the smallest loss of
/// splitting the first i sorted values into k contiguous segments, along
/// with the start of the last segment for backtracking. Ties in the split
/// choice go to the smallest split index. Centers are segment means and
/// come out non-decreasing; they repeat only if K exceeds the number of
/// distinct values. The reported loss is recomputed directly from the
/// centers rather than read from the table.
ClusteringSolution dp_cluster(const SortedWeights& w, std::size_t k, DpCounters* counters = nullptr);

enum class BruteForceMode {
  kContiguous,      ///< every split of the sorted values into K segments, n <= 12
  kAllAssignments,  ///< every one of the K^n labelings with no empty cluster, n <= 8
};

inline constexpr std::size_t kBruteForceContiguousCap = 12;
inline constexpr std::size_t kBruteForceAllAssignmentsCap = 8;

/// Exhaustive reference solver. Assignment is in input order; centers ascend.
ClusteringSolution brute_force_cluster(std::span<const double> values, std::size_t k,
                                       BruteForceMode mode = BruteForceMode::kContiguous);

enum class LloydInit { kKmeansPlusPlus, kUniformQuantile };

struct LloydOptions {
  LloydInit init = LloydInit::kKmeansPlusPlus;
  int restarts = 10;
  int max_iters = 300;
  std::uint64_t seed = 0;
};

/// Classical Lloyd iteration, best of `restarts` seeded starts.
///
/// A cluster that empties out during iteration is re-seeded at the point
/// farthest from its current center. Assignment is in input order; centers
/// are sorted on return.
ClusteringSolution lloyd_cluster(std::span<const double> values, std::size_t k,
                                 const LloydOptions& options = {});

/// Nearest-center index for every value. A value exactly on the midpoint
/// between two centers goes to the lower index. Centers must be non-decreasing.
std::vector<std::uint32_t> assign(std::span<const double> values, std::span<const double> centers);

/// Nearest-center index for one value; same tie rule as assign().
std::uint32_t nearest_center(double value, std::span<const double> centers);

/// Σ (values[i] - centers[assignment[i]])², accumulated in input order.
double clustering_loss(std::span<const double> values, std::span<const double> centers,
                       std::span<const std::uint32_t> assignment);

/// Merges equal adjacent centers and remaps the assignment. The result's
/// centers are strictly ascending; centers.size() is the effective K.
ClusteringSolution collapse_duplicate_centers(const ClusteringSolution& solution);

}  // namespace dpnet

#endif  // DPNET_DP_CORE_HPP
