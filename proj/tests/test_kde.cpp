#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "smc2fw/kde.hpp"
#include "test_util.hpp"

using namespace smc2fw;

namespace {

KdeBridge make_bridge(Vec u, Vec x, std::size_t d, double h) {
  KdeBridge b;
  b.dim_theta = d;
  b.dim_state = 1;
  b.n = u.size() / d;
  b.u = std::move(u);
  b.x = std::move(x);
  b.h = h;
  return b;
}

double log_phi(double x) { return -0.5 * std::log(2 * std::numbers::pi) - 0.5 * x * x; }

}  // namespace

TEST(Bandwidth, RuleA3Examples) {
  EXPECT_DOUBLE_EQ(bandwidth_rule_a3(16, 1), 0.5);
  EXPECT_DOUBLE_EQ(bandwidth_rule_a3(1, 3), 1.0);
  EXPECT_NEAR(bandwidth_rule_a3(10000, 2), std::pow(1e4, -1.0 / 6.0), 1e-15);
  EXPECT_NEAR(bandwidth_rule_a3(10000, 2), 0.21544, 1e-5);
}

TEST(Bandwidth, RuleA3ShrinksWithN) {
  for (std::size_t d = 1; d <= 5; ++d) {
    double prev = 2.0;
    for (std::size_t n = 1; n <= 1 << 16; n *= 2) {
      const double h = bandwidth_rule_a3(n, d);
      EXPECT_LE(h, prev);
      EXPECT_GT(h, 0.0);
      prev = h;
    }
  }
}

TEST(Kde, SampleAroundSinglePoint) {
  // h is the kernel variance.
  const auto b = make_bridge({0.0}, {0.0}, 1, 4.0);
  Engine eng = stream(1, StreamTag::test);
  std::vector<double> draws(20000);
  for (auto& v : draws) {
    const auto d = kde_sample_theta(b, eng);
    EXPECT_EQ(d.index, 0u);
    v = d.u[0];
  }
  double mean;
  const double tol = smc2fw::testing::three_se(draws, &mean);
  EXPECT_NEAR(mean, 0.0, tol);
  double var = 0;
  for (double v : draws) var += v * v;
  var /= draws.size();
  EXPECT_NEAR(var, 4.0, 0.2);
}

TEST(Kde, SampleIndexIsUniform) {
  const auto b = make_bridge({-5.0, 0.0, 5.0, 10.0}, {0, 0, 0, 0}, 1, 0.01);
  Engine eng = stream(2, StreamTag::test);
  std::vector<int> c(4, 0);
  const int n = 40000;
  for (int k = 0; k < n; ++k) {
    const auto d = kde_sample_theta(b, eng);
    ++c[d.index];
    EXPECT_LT(std::abs(d.u[0] - b.u[d.index]), 1.0);
  }
  for (int k : c) EXPECT_NEAR(k / double(n), 0.25, 3 * std::sqrt(0.25 * 0.75 / n));
}

TEST(Kde, MarginalDensityExamples) {
  const auto one = make_bridge({0.0}, {0.0}, 1, 1.0);
  const double zero[] = {0.0};
  EXPECT_NEAR(kde_marginal_logdensity(one, zero), log_phi(0.0), 1e-14);

  const auto two = make_bridge({-1.0, 1.0}, {0, 0}, 1, 1.0);
  EXPECT_NEAR(kde_marginal_logdensity(two, zero), log_phi(1.0), 1e-14);
  const double a[] = {0.37}, b[] = {-0.37};
  EXPECT_NEAR(kde_marginal_logdensity(two, a), kde_marginal_logdensity(two, b), 1e-14);

  // Two dimensions: product of per-coordinate kernels with sd sqrt(h) = 0.5.
  const auto d2 = make_bridge({0.0, 0.0}, {0.0}, 2, 0.25);
  const double pt[] = {0.5, -1.0};
  const double expect = log_phi(1.0) - std::log(0.5) + log_phi(-2.0) - std::log(0.5);
  EXPECT_NEAR(kde_marginal_logdensity(d2, pt), expect, 1e-13);
  // At the support point: -(d/2) log(2 pi h).
  EXPECT_NEAR(kde_marginal_logdensity(d2, std::vector<double>{0.0, 0.0}),
              -std::log(2 * std::numbers::pi * 0.25), 1e-14);
}

TEST(Kde, LogSumExpMatchesDirectSum) {
  Engine eng = stream(3, StreamTag::test);
  Vec u(3 * 50);
  for (auto& v : u) v = standard_normal(eng);
  const auto b = make_bridge(u, Vec(50, 0.0), 3, 0.49);
  for (int trial = 0; trial < 20; ++trial) {
    const double p[] = {standard_normal(eng), standard_normal(eng), standard_normal(eng)};
    double direct = 0;
    for (std::size_t j = 0; j < 50; ++j) {
      double lk = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        lk += log_phi((p[c] - u[3 * j + c]) / 0.7) - std::log(0.7);
      }
      direct += std::exp(lk);
    }
    EXPECT_NEAR(kde_marginal_logdensity(b, p), std::log(direct / 50), 1e-12);
    const auto terms = kde_kernel_logterms(b, p);
    ASSERT_EQ(terms.size(), 50u);
    EXPECT_NEAR(log_mean_exp(terms), std::log(direct / 50), 1e-12);
  }
}

TEST(Kde, FarPointsStayFinite) {
  const auto b = make_bridge({0.0}, {0.0}, 1, 1e-4);
  const double far[] = {50.0};
  const double lc = kde_marginal_logdensity(b, far);
  EXPECT_TRUE(std::isfinite(lc));
  EXPECT_NEAR(lc, log_phi(5000.0) - std::log(0.01), 1e-6);
}

TEST(Kde, IntegratesToOneAndIsBounded) {
  const auto b = make_bridge({-0.3, 0.1, 0.2, 1.5}, {0, 0, 0, 0}, 1, 0.04);
  const double sup = std::exp(log_phi(0.0)) / 0.2;
  double integral = 0;
  const double step = 1e-3;
  for (double t = -4; t <= 4; t += step) {
    const double p[] = {t};
    const double c = std::exp(kde_marginal_logdensity(b, p));
    EXPECT_LE(c, sup * (1 + 1e-12));
    integral += c * step;
  }
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(Bridge, StateFromStiffTransitionCopiesSupport) {
  const auto model = lg_model({1.0, 1e12, 1.0});
  const auto b = make_bridge({0.0, 0.0, 0.0}, {-3.0, 0.0, 3.0}, 1, 0.1);
  const double theta[] = {1e12, 1.0};
  Engine eng = stream(4, StreamTag::test);
  std::vector<int> c(3, 0);
  const int n = 30000;
  for (int k = 0; k < n; ++k) {
    double x;
    bridge_sample_state(b, theta, model, std::span<double>(&x, 1), eng);
    const int j = static_cast<int>(std::lround(x / 3.0)) + 1;
    ASSERT_GE(j, 0);
    ASSERT_LE(j, 2);
    EXPECT_NEAR(x, b.x[j], 1e-4);
    ++c[j];
  }
  for (int k : c) EXPECT_NEAR(k / double(n), 1.0 / 3, 3 * std::sqrt(2.0 / 9 / n));
}

TEST(Bridge, ConditionalCouplingFollowsKernelWeights) {
  const auto model = lg_model({1.0, 1e12, 1.0});
  // Support u^0 = 0 and u^1 = 1 with h = 1; at u = 0 the weights are
  // phi(0) : phi(1).
  const auto b = make_bridge({0.0, 1.0}, {-1.0, 1.0}, 1, 1.0);
  const double theta[] = {1e12, 1.0};
  const double u[] = {0.0};
  Engine eng = stream(5, StreamTag::test);
  const std::size_t n = 40000;
  const Vec xs = bridge_sample_states(b, theta, u, model, n, BridgeCoupling::conditional, eng);
  double first = 0;
  for (double x : xs) first += x < 0 ? 1 : 0;
  const double p = 1.0 / (1.0 + std::exp(log_phi(1.0) - log_phi(0.0)));
  EXPECT_NEAR(first / n, p, 3 * std::sqrt(p * (1 - p) / n));

  const Vec ys = bridge_sample_states(b, theta, u, model, n, BridgeCoupling::product, eng);
  double first_p = 0;
  for (double x : ys) first_p += x < 0 ? 1 : 0;
  EXPECT_NEAR(first_p / n, 0.5, 3 * std::sqrt(0.25 / n));
}

TEST(Bridge, ValidateRejectsBadShapes) {
  auto b = make_bridge({0.0, 1.0}, {0.0}, 1, 0.1);
  EXPECT_THROW(b.validate(), std::invalid_argument);
  b = make_bridge({0.0}, {0.0}, 1, 0.0);
  EXPECT_THROW(b.validate(), std::invalid_argument);
}
