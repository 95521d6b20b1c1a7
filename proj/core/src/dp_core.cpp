#include "dpnet/dp_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dpnet/error.hpp"
#include "dpnet/random.hpp"

namespace dpnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void RequireFinite(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ContractError("non-finite value at position " + std::to_string(i));
    }
  }
}

void RequireClusterCount(std::size_t n, std::size_t k) {
  if (n == 0) throw ContractError("cannot cluster an empty input");
  if (k == 0) throw ContractError("cluster count must be positive");
  if (k > n) {
    throw ContractError("more clusters than points (K=" + std::to_string(k) + ", n=" + std::to_string(n) +
                        ")");
  }
}

double Mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Sorts centers ascending and relabels the assignment to match.
ClusteringSolution Canonicalize(std::vector<double> centers, std::vector<std::uint32_t> assignment,
                                std::span<const double> values) {
  std::vector<std::uint32_t> perm(centers.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::stable_sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) { return centers[a] < centers[b]; });
  std::vector<std::uint32_t> rank(centers.size());
  for (std::uint32_t r = 0; r < perm.size(); ++r) rank[perm[r]] = r;

  ClusteringSolution out;
  out.centers.resize(centers.size());
  for (std::size_t r = 0; r < perm.size(); ++r) out.centers[r] = centers[perm[r]];
  out.assignment.resize(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) out.assignment[i] = rank[assignment[i]];
  out.loss = clustering_loss(values, out.centers, out.assignment);
  return out;
}

}  // namespace

SortedWeights::SortedWeights(std::span<const double> values) {
  Build(std::vector<double>(values.begin(), values.end()));
}

SortedWeights::SortedWeights(std::span<const float> values) {
  Build(std::vector<double>(values.begin(), values.end()));
}

void SortedWeights::Build(std::vector<double> data) {
  RequireFinite(data);
  const std::size_t n = data.size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return data[a] < data[b]; });

  values_.resize(n);
  prefix_sum_.resize(n);
  prefix_sq_sum_.resize(n);
  double sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = data[order_[i]];
    values_[i] = x;
    sum += x;
    sq_sum += x * x;
    prefix_sum_[i] = sum;
    prefix_sq_sum_[i] = sq_sum;
  }
}

double SortedWeights::RangeSum(std::size_t l, std::size_t q) const noexcept {
  return prefix_sum_[q] - (l > 0 ? prefix_sum_[l - 1] : 0.0);
}

double SortedWeights::RangeSqSum(std::size_t l, std::size_t q) const noexcept {
  return prefix_sq_sum_[q] - (l > 0 ? prefix_sq_sum_[l - 1] : 0.0);
}

double segment_cost(const SortedWeights& w, std::size_t l, std::size_t q) {
  if (l > q || q >= w.size()) {
    throw ContractError("segment [" + std::to_string(l) + ", " + std::to_string(q) + "] out of range for n=" +
                        std::to_string(w.size()));
  }
  // Constant runs are exactly zero; the prefix form would leave round-off.
  if (w.values()[l] == w.values()[q]) return 0.0;
  const double count = static_cast<double>(q - l + 1);
  const double sum = w.RangeSum(l, q);
  const double cost = w.RangeSqSum(l, q) - sum * sum / count;
  return cost > 0.0 ? cost : 0.0;
}

ClusteringSolution dp_cluster(const SortedWeights& w, std::size_t k, DpCounters* counters) {
  const std::size_t n = w.size();
  RequireClusterCount(n, k);

  // best[i][c]: minimum loss over the first i values in c clusters.
  // start[i][c]: 1-based index of the first value of the last cluster.
  const std::size_t stride = k + 1;
  std::vector<double> best((n + 1) * stride, kInf);
  std::vector<std::uint32_t> start((n + 1) * stride, 0);
  best[0] = 0.0;

  std::uint64_t relaxations = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    // Prefixes that leave fewer values than remaining clusters are useless.
    const std::size_t c_hi = std::min(k, i);
    const std::size_t c_lo = (n - i >= k) ? 1 : k - (n - i);
    for (std::size_t c = c_lo; c <= c_hi; ++c) {
      double best_value = kInf;
      std::uint32_t best_start = 0;
      // c == 1 has exactly one legal split: everything in one segment.
      const std::size_t j_hi = (c == 1) ? 1 : i;
      for (std::size_t j = c; j <= j_hi; ++j) {
        const double prev = best[(j - 1) * stride + (c - 1)];
        ++relaxations;
        if (prev == kInf) continue;
        const double candidate = prev + segment_cost(w, j - 1, i - 1);
        if (candidate < best_value) {
          best_value = candidate;
          best_start = static_cast<std::uint32_t>(j);
        }
      }
      best[i * stride + c] = best_value;
      start[i * stride + c] = best_start;
    }
  }
  if (counters != nullptr) counters->relaxations += relaxations;

  ClusteringSolution out;
  out.centers.assign(k, 0.0);
  out.assignment.assign(n, 0);
  std::size_t end = n;
  const auto values = w.values();
  for (std::size_t c = k; c > 0; --c) {
    const std::size_t first = start[end * stride + c];
    const auto segment = values.subspan(first - 1, end - first + 1);
    out.centers[c - 1] = Mean(segment);
    std::fill(out.assignment.begin() + static_cast<std::ptrdiff_t>(first - 1),
              out.assignment.begin() + static_cast<std::ptrdiff_t>(end), static_cast<std::uint32_t>(c - 1));
    end = first - 1;
  }
  out.loss = clustering_loss(values, out.centers, out.assignment);
  return out;
}

ClusteringSolution brute_force_cluster(std::span<const double> values, std::size_t k, BruteForceMode mode) {
  const std::size_t n = values.size();
  RequireClusterCount(n, k);
  RequireFinite(values);

  if (mode == BruteForceMode::kContiguous) {
    if (n > kBruteForceContiguousCap) {
      throw ContractError("brute force over contiguous partitions is capped at n=" +
                          std::to_string(kBruteForceContiguousCap));
    }
    const SortedWeights sorted(values);
    const auto x = sorted.values();
    // cuts[c] is the first sorted index of cluster c; cuts[0] = 0.
    std::vector<std::size_t> cuts(k + 1, 0);
    cuts[k] = n;
    std::vector<std::size_t> best_cuts;
    double best_loss = kInf;

    auto evaluate = [&] {
      double loss = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const auto segment = x.subspan(cuts[c], cuts[c + 1] - cuts[c]);
        const double mean = Mean(segment);
        for (double v : segment) loss += (v - mean) * (v - mean);
      }
      if (loss < best_loss) {
        best_loss = loss;
        best_cuts = cuts;
      }
    };
    // Recursive enumeration of strictly increasing cut positions.
    auto recurse = [&](auto&& self, std::size_t c) -> void {
      if (c == k) {
        evaluate();
        return;
      }
      const std::size_t lo = cuts[c - 1] + 1;
      const std::size_t hi = n - (k - c);
      for (std::size_t pos = lo; pos <= hi; ++pos) {
        cuts[c] = pos;
        self(self, c + 1);
      }
    };
    if (k == 1) {
      evaluate();
    } else {
      recurse(recurse, 1);
    }

    std::vector<double> centers(k);
    std::vector<std::uint32_t> sorted_assignment(n);
    for (std::size_t c = 0; c < k; ++c) {
      centers[c] = Mean(x.subspan(best_cuts[c], best_cuts[c + 1] - best_cuts[c]));
      for (std::size_t i = best_cuts[c]; i < best_cuts[c + 1]; ++i) sorted_assignment[i] = static_cast<std::uint32_t>(c);
    }
    ClusteringSolution out;
    out.centers = std::move(centers);
    out.assignment = sorted.ToInputOrder<std::uint32_t>(sorted_assignment);
    out.loss = clustering_loss(values, out.centers, out.assignment);
    return out;
  }

  if (n > kBruteForceAllAssignmentsCap) {
    throw ContractError("brute force over all assignments is capped at n=" +
                        std::to_string(kBruteForceAllAssignmentsCap));
  }
  std::vector<std::uint32_t> labels(n, 0);
  std::vector<std::uint32_t> best_labels;
  double best_loss = kInf;
  std::vector<double> sums(k);
  std::vector<double> sq_sums(k);
  std::vector<std::size_t> counts(k);
  while (true) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sq_sums.begin(), sq_sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[labels[i]] += values[i];
      ++counts[labels[i]];
    }
    if (std::find(counts.begin(), counts.end(), std::size_t{0}) == counts.end()) {
      // Two-pass loss; the cancellation-prone form is what we are checking against.
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = values[i] - sums[labels[i]] / static_cast<double>(counts[labels[i]]);
        loss += d * d;
      }
      if (loss < best_loss) {
        best_loss = loss;
        best_labels = labels;
      }
    }
    // Odometer increment over base-k digits.
    std::size_t digit = 0;
    while (digit < n && ++labels[digit] == k) labels[digit++] = 0;
    if (digit == n) break;
  }

  std::vector<double> centers(k, 0.0);
  std::fill(counts.begin(), counts.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    centers[best_labels[i]] += values[i];
    ++counts[best_labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c) centers[c] /= static_cast<double>(counts[c]);
  return Canonicalize(std::move(centers), std::move(best_labels), values);
}

ClusteringSolution lloyd_cluster(std::span<const double> values, std::size_t k, const LloydOptions& options) {
  const std::size_t n = values.size();
  RequireClusterCount(n, k);
  RequireFinite(values);

  if (k == 1) {
    ClusteringSolution out;
    out.centers = {Mean(values)};
    out.assignment.assign(n, 0);
    out.loss = clustering_loss(values, out.centers, out.assignment);
    return out;
  }

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  Rng rng(options.seed);
  const int restarts = options.init == LloydInit::kUniformQuantile ? 1 : std::max(1, options.restarts);
  ClusteringSolution best;
  best.loss = kInf;

  for (int r = 0; r < restarts; ++r) {
    std::vector<double> centers;
    centers.reserve(k);
    if (options.init == LloydInit::kUniformQuantile) {
      for (std::size_t c = 0; c < k; ++c) {
        const auto pos = static_cast<std::size_t>((static_cast<double>(c) + 0.5) * static_cast<double>(n) /
                                                  static_cast<double>(k));
        centers.push_back(sorted[std::min(pos, n - 1)]);
      }
    } else {
      centers.push_back(values[rng.Below(n)]);
      std::vector<double> dist2(n);
      while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double nearest = kInf;
          for (double c : centers) nearest = std::min(nearest, (values[i] - c) * (values[i] - c));
          dist2[i] = nearest;
          total += nearest;
        }
        if (total <= 0.0) {
          centers.push_back(values[rng.Below(n)]);
          continue;
        }
        double target = rng.Uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          target -= dist2[i];
          if (target < 0.0 && dist2[i] > 0.0) {
            pick = i;
            break;
          }
        }
        centers.push_back(values[pick]);
      }
    }

    std::vector<std::uint32_t> labels;
    std::vector<double> sums(k);
    std::vector<std::size_t> counts(k);
    for (int iter = 0; iter < options.max_iters; ++iter) {
      std::sort(centers.begin(), centers.end());
      auto next = assign(values, centers);

      std::fill(counts.begin(), counts.end(), 0);
      for (auto label : next) ++counts[label];
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        // Empty cluster: move it onto the worst-served point.
        std::size_t far = 0;
        double far_dist = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = std::abs(values[i] - centers[next[i]]);
          if (d > far_dist) {
            far_dist = d;
            far = i;
          }
        }
        --counts[next[far]];
        centers[c] = values[far];
        next[far] = static_cast<std::uint32_t>(c);
        ++counts[c];
      }

      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) sums[next[i]] += values[i];
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
      }
      const bool converged = (next == labels);
      labels = std::move(next);
      if (converged) break;
    }

    auto candidate = Canonicalize(centers, labels, values);
    if (candidate.loss < best.loss) best = std::move(candidate);
  }
  return best;
}

std::uint32_t nearest_center(double value, std::span<const double> centers) {
  // Binary search for the number of midpoints strictly below value.
  std::size_t lo = 0;
  std::size_t hi = centers.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const double boundary = 0.5 * (centers[mid] + centers[mid + 1]);
    if (value > boundary) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return static_cast<std::uint32_t>(lo);
}

std::vector<std::uint32_t> assign(std::span<const double> values, std::span<const double> centers) {
  if (centers.empty()) throw ContractError("assign needs at least one center");
  for (std::size_t c = 1; c < centers.size(); ++c) {
    if (centers[c] < centers[c - 1]) throw ContractError("centers must be non-decreasing");
  }
  RequireFinite(values);
  RequireFinite(centers);
  std::vector<std::uint32_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = nearest_center(values[i], centers);
  return out;
}

double clustering_loss(std::span<const double> values, std::span<const double> centers,
                       std::span<const std::uint32_t> assignment) {
  if (values.size() != assignment.size()) throw ContractError("assignment length does not match values");
  double loss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (assignment[i] >= centers.size()) throw ContractError("assignment index out of range");
    const double d = values[i] - centers[assignment[i]];
    loss += d * d;
  }
  return loss;
}

ClusteringSolution collapse_duplicate_centers(const ClusteringSolution& solution) {
  ClusteringSolution out;
  std::vector<std::uint32_t> remap(solution.centers.size());
  for (std::size_t c = 0; c < solution.centers.size(); ++c) {
    if (out.centers.empty() || solution.centers[c] != out.centers.back()) out.centers.push_back(solution.centers[c]);
    remap[c] = static_cast<std::uint32_t>(out.centers.size() - 1);
  }
  out.assignment.resize(solution.assignment.size());
  for (std::size_t i = 0; i < solution.assignment.size(); ++i) out.assignment[i] = remap[solution.assignment[i]];
  out.loss = solution.loss;
  return out;
}

}  // namespace dpnet
