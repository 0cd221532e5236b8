#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "reactor/categorical.hpp"
#include "reactor/cli/selftest.hpp"
#include "reactor/random.hpp"

using namespace reactor;

TEST(SupportGrid, AtomsAndValidation) {
  const SupportGrid g(-1.0, 1.0, 5);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.5);
  EXPECT_EQ(g.atoms(), (std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0}));
  EXPECT_THROW(SupportGrid(1.0, 1.0, 5), std::invalid_argument);
  EXPECT_THROW(SupportGrid(0.0, 1.0, 1), std::invalid_argument);
}

TEST(Project, OnAtomGivesUnitWeight) {
  const SupportGrid g(-1.0, 1.0, 51);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Projection p = project(g.atom(i), g);
    EXPECT_EQ(p.lower, i);
    EXPECT_EQ(p.lower_weight, 1.0);
    EXPECT_EQ(p.upper_weight, 0.0);
  }
}

TEST(Project, ClampsOutsideRange) {
  const SupportGrid g(0.0, 2.0, 3);
  EXPECT_EQ(project(-5.0, g).lower, 0u);
  EXPECT_EQ(project(7.0, g).lower, 2u);
  EXPECT_EQ(project(7.0, g).lower_weight, 1.0);
}

TEST(Project, LinearInterpolationPreservesMeanInside) {
  const SupportGrid g(-2.0, 3.0, 11);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = -2.0 + 5.0 * rng.uniform();
    const CategoricalDist d = CategoricalDist::projected(x, g);
    EXPECT_NEAR(mean(d), x, 1e-12);
    int support = 0;
    for (double p : d.probs()) support += p > 0.0;
    EXPECT_LE(support, 2);
  }
  const Projection p = project(-1.25, g);
  EXPECT_EQ(p.lower, 1u);
  EXPECT_EQ(p.upper, 2u);
  EXPECT_NEAR(p.lower_weight, 0.5, 1e-12);
}

TEST(CategoricalDist, Validation) {
  const SupportGrid g(0.0, 1.0, 2);
  EXPECT_THROW(CategoricalDist(g, {0.5}), std::invalid_argument);
  EXPECT_THROW(CategoricalDist(g, {1.5, -0.5}), std::invalid_argument);
  EXPECT_THROW(CategoricalDist(g, {0.5, 0.4}), std::invalid_argument);
  EXPECT_NO_THROW(SignedTarget(g, {1.5, -0.5}));
  EXPECT_THROW(SignedTarget(g, {1.5, -0.4}), std::invalid_argument);
}

TEST(Softmax, StableAndNormalized) {
  const std::vector<double> logits = {1000.0, 1000.0, -1000.0};
  const auto p = softmax(logits);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
  EXPECT_EQ(p[2], 0.0);
  const std::vector<double> shifted = {1.0, 2.0, 3.0};
  const std::vector<double> plus = {11.0, 12.0, 13.0};
  const auto a = softmax(shifted);
  const auto b = softmax(plus);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  EXPECT_NEAR(a[2] / a[1], std::exp(1.0), 1e-12);
}

TEST(KlLoss, ValueAndGradientAgainstHandComputation) {
  const std::vector<double> target = {0.2, 0.8};
  const std::vector<double> logits = {0.0, std::log(3.0)};
  const KlLossAndGrad r = kl_loss_and_grad(target, logits);
  // softmax = (1/4, 3/4)
  EXPECT_NEAR(r.loss, -(0.2 * std::log(0.25) + 0.8 * std::log(0.75)), 1e-12);
  EXPECT_NEAR(r.grad[0], 0.25 - 0.2, 1e-12);
  EXPECT_NEAR(r.grad[1], 0.75 - 0.8, 1e-12);
}

TEST(KlLoss, MinimizedAtTarget) {
  const SupportGrid g(0.0, 1.0, 3);
  const SignedTarget t(g, {0.2, 0.3, 0.5});
  Logits at{{std::log(0.2), std::log(0.3), std::log(0.5)}};
  const KlLossAndGrad r = kl_loss_and_grad(t, at);
  for (double v : r.grad) EXPECT_NEAR(v, 0.0, 1e-12);
  Logits off{{0.0, 0.0, 0.0}};
  EXPECT_GT(kl_loss_and_grad(t, off).loss, r.loss);
}

TEST(KlLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(cli::kl_gradient_rel_error(seed), 1e-6);
}

TEST(TotalVariation, SumOfAbsoluteDifferences) {
  const SupportGrid g(0.0, 1.0, 3);
  const CategoricalDist a(g, {0.5, 0.5, 0.0});
  const SignedTarget b(g, {1.2, -0.2, 0.0});
  EXPECT_NEAR(total_variation(a, b), 1.4, 1e-12);
  EXPECT_NEAR(total_variation(a, a), 0.0, 0.0);
  const CategoricalDist other(SupportGrid(0.0, 2.0, 3), {1.0, 0.0, 0.0});
  EXPECT_THROW(total_variation(a, other), std::invalid_argument);
}

TEST(DistTable, SetAndMean) {
  const SupportGrid g(-1.0, 1.0, 3);
  DistTable t(g, 2, 2);
  const std::vector<double> p = {0.0, 0.25, 0.75};
  t.set(1, 0, p);
  EXPECT_NEAR(t.mean(1, 0), 0.75, 1e-12);
  EXPECT_EQ(t.dist(1, 0)[2], 0.75);
  const std::vector<double> bad = {1.0};
  EXPECT_THROW(t.set(0, 0, bad), std::invalid_argument);
}
