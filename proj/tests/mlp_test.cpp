#include "dpnet/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "dpnet/error.hpp"
#include "gradcheck.hpp"

namespace dpnet {
namespace {

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 5u, 10u}) {
    Mlp m;
    m.layers.push_back({Matrix(c, 3), std::vector<double>(c, 0.0)});
    const Matrix x(4, 3, 1.0);
    const Labels y(4, 1);
    EXPECT_NEAR(ce_loss(forward(m, x), y), std::log(static_cast<double>(c)), 1e-12);
  }
}

TEST(CrossEntropy, ConfidentCorrectPredictionGoesToZero) {
  Mlp m;
  m.layers.push_back({Matrix(3, 1), {0.0, 40.0, 0.0}});
  const Matrix x(2, 1, 1.0);
  EXPECT_LT(ce_loss(forward(m, x), Labels{1, 1}), 1e-15);
}

TEST(CrossEntropy, RejectsBadLabels) {
  Mlp m;
  m.layers.push_back({Matrix(2, 1), {0.0, 0.0}});
  const Matrix x(1, 1, 1.0);
  EXPECT_THROW(ce_loss(forward(m, x), Labels{2}), ContractError);
  EXPECT_THROW(ce_loss(forward(m, x), Labels{0, 1}), ContractError);
}

TEST(Forward, NonFiniteIsNumericalError) {
  Mlp m;
  m.layers.push_back({Matrix(2, 1, 1.0), {0.0, 0.0}});
  Matrix x(1, 1, std::numeric_limits<double>::infinity());
  EXPECT_THROW(forward(m, x), NumericalError);
}

TEST(Forward, StableWithHugeLogits) {
  Mlp m;
  m.layers.push_back({Matrix(2, 1), {1000.0, -1000.0}});
  const auto c = forward_cached(m, Matrix(1, 1, 0.0));
  EXPECT_DOUBLE_EQ(c.probs(0, 0), 1.0);
  EXPECT_TRUE(std::isfinite(c.log_probs(0, 1)));
}

TEST(Predict, TiesGoToLowerClass) {
  Mlp m;
  m.layers.push_back({Matrix(3, 1), {0.0, 1.0, 1.0}});
  EXPECT_EQ(predict(m, Matrix(1, 1, 0.0)), (Labels{1}));
}

TEST(Init, SeededAndShaped) {
  const std::size_t sizes[] = {4, 6, 3};
  const auto a = Mlp::Init(sizes, 5);
  EXPECT_EQ(a, Mlp::Init(sizes, 5));
  EXPECT_NE(a, Mlp::Init(sizes, 6));
  EXPECT_EQ(a.layers[0].weight.rows, 6u);
  EXPECT_EQ(a.layers[0].weight.cols, 4u);
  EXPECT_EQ(a.parameter_count(), 4u * 6 + 6 + 6 * 3 + 3);
}

class GradientCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientCheck, CrossEntropyBackward) { EXPECT_LT(gradcheck::CrossEntropyError(GetParam()), 1e-6); }
TEST_P(GradientCheck, PenaltyGradient) { EXPECT_LT(gradcheck::PenaltyError(GetParam()), 1e-6); }
TEST_P(GradientCheck, RobustObjectiveAtFixedAdversary) { EXPECT_LT(gradcheck::RobustObjectiveError(GetParam()), 1e-6); }

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Values(1u, 2u, 3u));

TEST(KlGradients, ZeroWhenDistributionsMatch) {
  Matrix lp(2, 3);
  lp.data = {std::log(0.2), std::log(0.3), std::log(0.5), std::log(0.6), std::log(0.3), std::log(0.1)};
  EXPECT_NEAR(mean_kl(lp, lp), 0.0, 1e-15);
  const auto g = kl_logit_gradients(lp, lp);
  for (double v : g.clean.data) EXPECT_NEAR(v, 0.0, 1e-15);
  for (double v : g.adversarial.data) EXPECT_NEAR(v, 0.0, 1e-15);
}

}  // namespace
}  // namespace dpnet
