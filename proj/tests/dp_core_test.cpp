#include "dpnet/dp_core.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "dpnet/error.hpp"
#include "dpnet/random.hpp"
#include "oracles.hpp"

namespace dpnet {
namespace {

ClusteringSolution Dp(const std::vector<double>& v, std::size_t k) { return dp_cluster(SortedWeights(std::span(v)), k); }

TEST(SegmentCost, Examples) {
  const std::vector<double> v{1, 2, 3};
  const SortedWeights w{std::span(v)};
  EXPECT_DOUBLE_EQ(segment_cost(w, 0, 2), 2.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(segment_cost(w, i, i), 0.0);
  const std::vector<double> twos{2, 2};
  EXPECT_EQ(segment_cost(SortedWeights(std::span(twos)), 0, 1), 0.0);
}

TEST(SegmentCost, NeverNegativeOnNearConstantRuns) {
  // Large offset, tiny spread: prefix sums cancel catastrophically.
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.push_back(1e8 + (i % 2) * 1e-7);
  const SortedWeights w{std::span(v)};
  for (std::size_t l = 0; l < v.size(); ++l) {
    for (std::size_t q = l; q < v.size(); ++q) EXPECT_GE(segment_cost(w, l, q), 0.0);
  }
}

TEST(SegmentCost, MatchesDirectEvaluation) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(20);
    for (auto& x : v) x = rng.Normal(0.0, 3.0);
    const SortedWeights w{std::span(v)};
    const std::vector<double> sorted(w.values().begin(), w.values().end());
    for (std::size_t l = 0; l < v.size(); l += 3) {
      for (std::size_t q = l; q < v.size(); q += 2) {
        EXPECT_NEAR(segment_cost(w, l, q), oracle::SegmentCost(sorted, l, q), 1e-9);
      }
    }
  }
}

TEST(SortedWeights, RejectsNonFinite) {
  const std::vector<double> v{1.0, std::nan("")};
  EXPECT_THROW(SortedWeights{std::span(v)}, ContractError);
}

TEST(DpCluster, Examples) {
  auto s = Dp({1, 2, 3, 4}, 2);
  EXPECT_EQ(s.centers, (std::vector<double>{1.5, 3.5}));
  EXPECT_DOUBLE_EQ(s.loss, 1.0);
  EXPECT_EQ(s.assignment, (std::vector<std::uint32_t>{0, 0, 1, 1}));

  s = Dp({1, 7, 9}, 3);
  EXPECT_EQ(s.centers, (std::vector<double>{1, 7, 9}));
  EXPECT_EQ(s.loss, 0.0);

  s = Dp({0, 0, 1, 1}, 2);
  EXPECT_EQ(s.centers, (std::vector<double>{0, 1}));
  EXPECT_EQ(s.loss, 0.0);
}

TEST(DpCluster, AssignmentMapsBackToInputOrder) {
  const std::vector<double> v{4, 1, 3, 2};
  const SortedWeights w{std::span(v)};
  const auto s = dp_cluster(w, 2);
  EXPECT_EQ(s.assignment, (std::vector<std::uint32_t>{0, 0, 1, 1}));
  EXPECT_EQ(w.ToInputOrder<std::uint32_t>(s.assignment), (std::vector<std::uint32_t>{1, 0, 1, 0}));
}

TEST(DpCluster, Errors) {
  EXPECT_THROW(Dp({1, 2}, 3), ContractError);
  EXPECT_THROW(Dp({}, 1), ContractError);
  EXPECT_THROW(Dp({1, 2}, 0), ContractError);
}

TEST(DpCluster, KEqualsNIsExact) {
  const std::vector<double> v{3.5, -1, 2, 8, 0.25};
  const auto s = Dp(v, v.size());
  EXPECT_EQ(s.loss, 0.0);
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(s.centers, sorted);
}

TEST(DpCluster, DuplicatesYieldEqualCenters) {
  // Three clusters over two distinct values: one center repeats.
  const auto s = Dp({5, 5, 5, 9}, 3);
  EXPECT_EQ(s.loss, 0.0);
  const auto c = collapse_duplicate_centers(s);
  EXPECT_EQ(c.centers, (std::vector<double>{5, 9}));
  EXPECT_EQ(c.loss, 0.0);
}

TEST(DpCluster, TiesPickSmallestSplit) {
  // [0, 1, 2] into 2: splits after 0 or after 1 cost the same, the first wins.
  const auto s = Dp({0, 1, 2}, 2);
  EXPECT_EQ(s.centers, (std::vector<double>{0, 1.5}));
}

TEST(DpCluster, Deterministic) {
  Rng rng(11);
  std::vector<double> v(100);
  for (auto& x : v) x = rng.Normal();
  EXPECT_EQ(Dp(v, 6), Dp(v, 6));
}

TEST(DpCluster, CostIsQuadraticTimesK) {
  // The table relaxes at most K·n²/2 candidate splits.
  for (std::size_t n : {50u, 100u, 200u}) {
    std::vector<double> v(n);
    Rng rng(n);
    for (auto& x : v) x = rng.Uniform();
    DpCounters counters;
    dp_cluster(SortedWeights(std::span(v)), 8, &counters);
    EXPECT_LE(counters.relaxations, 8ull * n * n / 2);
    EXPECT_GT(counters.relaxations, 0u);
  }
}

TEST(DpCluster, LossNonIncreasingInK) {
  Rng rng(3);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.Normal();
  double prev = Dp(v, 1).loss;
  for (std::size_t k = 2; k <= 10; ++k) {
    const double cur = Dp(v, k).loss;
    EXPECT_LE(cur, prev + 1e-12);
    prev = cur;
  }
}

TEST(DpCluster, InvariantUnderShiftAndPermutation) {
  Rng rng(17);
  std::vector<double> v(30);
  for (auto& x : v) x = rng.Normal();
  const auto base = Dp(v, 4);
  std::vector<double> shifted = v;
  for (auto& x : shifted) x += 10.0;
  EXPECT_NEAR(Dp(shifted, 4).loss, base.loss, 1e-9);
  std::vector<double> shuffled = v;
  rng.Shuffle(shuffled.begin(), shuffled.end());
  EXPECT_NEAR(Dp(shuffled, 4).loss, base.loss, 1e-12);
}

TEST(DpCluster, MatchesOracleOnSmallInstances) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.Below(10);
    const std::size_t k = 1 + rng.Below(std::min<std::size_t>(n, 4));
    std::vector<double> v(n);
    for (auto& x : v) x = trial % 2 ? rng.Normal() : rng.Uniform(-5, 5);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double expected = oracle::BestContiguous(sorted, k);
    EXPECT_NEAR(Dp(v, k).loss, expected, 1e-9 * std::max(1.0, expected));
  }
}

TEST(BruteForce, Examples) {
  EXPECT_DOUBLE_EQ(brute_force_cluster(std::vector<double>{1, 2, 3, 4}, 2).loss, 1.0);
  EXPECT_EQ(brute_force_cluster(std::vector<double>{4, 2, 9}, 3).loss, 0.0);
  const std::vector<double> v{0, 1, 2};
  EXPECT_DOUBLE_EQ(brute_force_cluster(v, 2, BruteForceMode::kAllAssignments).loss,
                   brute_force_cluster(v, 2, BruteForceMode::kContiguous).loss);
}

TEST(BruteForce, EnforcesCaps) {
  const std::vector<double> thirteen(13, 1.0);
  EXPECT_THROW(brute_force_cluster(thirteen, 2), ContractError);
  const std::vector<double> nine(9, 1.0);
  EXPECT_THROW(brute_force_cluster(nine, 2, BruteForceMode::kAllAssignments), ContractError);
  EXPECT_THROW(brute_force_cluster(std::vector<double>{1, 2}, 3), ContractError);
}

TEST(BruteForce, AgreesWithOracles) {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.Below(7);
    const std::size_t k = 1 + rng.Below(std::min<std::size_t>(n, 3));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.Normal();
    const double all = oracle::BestAnyAssignment(v, k);
    const auto bf = brute_force_cluster(v, k, BruteForceMode::kAllAssignments);
    EXPECT_NEAR(bf.loss, all, 1e-9);
    EXPECT_NEAR(clustering_loss(v, bf.centers, bf.assignment), bf.loss, 1e-9);
  }
}

TEST(Lloyd, Examples) {
  const std::vector<double> pm{0, 0, 1, 1};
  for (auto init : {LloydInit::kKmeansPlusPlus, LloydInit::kUniformQuantile}) {
    LloydOptions o;
    o.init = init;
    EXPECT_EQ(lloyd_cluster(pm, 2, o).loss, 0.0);
  }
  EXPECT_GE(lloyd_cluster(std::vector<double>{1, 2, 3, 4}, 2).loss, 1.0);
  const auto one = lloyd_cluster(std::vector<double>{1, 2, 6}, 1);
  ASSERT_EQ(one.centers.size(), 1u);
  EXPECT_DOUBLE_EQ(one.centers[0], 3.0);
  EXPECT_DOUBLE_EQ(one.loss, 14.0);
}

TEST(Lloyd, NeverBeatsDp) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(5 + rng.Below(60));
    for (auto& x : v) x = rng.Normal();
    const std::size_t k = std::min<std::size_t>(v.size(), 2 + rng.Below(6));
    LloydOptions o;
    o.seed = static_cast<std::uint64_t>(trial);
    EXPECT_LE(Dp(v, k).loss, lloyd_cluster(v, k, o).loss + 1e-12);
  }
}

TEST(Lloyd, SeededIsDeterministic) {
  Rng rng(1);
  std::vector<double> v(50);
  for (auto& x : v) x = rng.Uniform();
  LloydOptions o;
  o.seed = 42;
  EXPECT_EQ(lloyd_cluster(v, 5, o), lloyd_cluster(v, 5, o));
}

TEST(Assign, Examples) {
  EXPECT_EQ(assign(std::vector<double>{1, 4}, std::vector<double>{1, 4}), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(nearest_center(2.5, std::vector<double>{2, 3}), 0u);
  EXPECT_EQ(assign(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1.5, 3.5}),
            (std::vector<std::uint32_t>{0, 0, 1, 1}));
}

TEST(Assign, MatchesLinearScan) {
  Rng rng(8);
  std::vector<double> centers(9);
  for (auto& c : centers) c = rng.Normal();
  std::sort(centers.begin(), centers.end());
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.Normal(0, 2);
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < centers.size(); ++c) {
      if (std::abs(x - centers[c]) < std::abs(x - centers[best])) best = c;
    }
    EXPECT_EQ(nearest_center(x, centers), best);
  }
}

TEST(Assign, RejectsUnsortedOrEmpty) {
  EXPECT_THROW(assign(std::vector<double>{1}, std::vector<double>{}), ContractError);
  EXPECT_THROW(assign(std::vector<double>{1}, std::vector<double>{3, 1}), ContractError);
}

}  // namespace
}  // namespace dpnet
