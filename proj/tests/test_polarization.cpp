#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mappg/errors.hpp"
#include "mappg/polarization.hpp"

namespace mappg {
namespace {

const std::vector<double> kPayoff{15, -12, -12, -12, 10, 10, -12, 10, 10};

std::vector<SoftmaxPolicy> uniform(int agents, int actions) {
  return std::vector<SoftmaxPolicy>(static_cast<std::size_t>(agents), SoftmaxPolicy(1, actions));
}

PolarizationParams unit() { return {1.0, 1.0, 10.0, 0.9}; }

TEST(Params, Validation) {
  EXPECT_NO_THROW(unit().validate());
  EXPECT_THROW((PolarizationParams{0.0, 1, 10, 0.9}).validate(), ConfigError);
  EXPECT_THROW((PolarizationParams{1, -1, 10, 0.9}).validate(), ConfigError);
  EXPECT_THROW((PolarizationParams{1, 1, 0, 0.9}).validate(), ConfigError);
  EXPECT_THROW((PolarizationParams{1, 1, 10, 0.4}).validate(), ConfigError);
  EXPECT_THROW((PolarizationParams{1, 1, 10, 1.0}).validate(), ConfigError);
}

TEST(Hard, OnlyOptimumMapsToOne) {
  const auto star = JointAction::discrete({0, 0});
  int ones = 0;
  for (std::size_t i = 0; i < 9; ++i) ones += static_cast<int>(q_ppg_hard(JointAction::discrete(unflatten(i, 2, 3)), star));
  EXPECT_EQ(ones, 1);
  EXPECT_EQ(q_ppg_hard(star, star), 1.0);
  EXPECT_EQ(q_ppg_hard(JointAction::discrete({0, 1}), star), 0.0);
}

TEST(Soft, Values) {
  EXPECT_EQ(q_ppg_soft(0.0, 1.0), 1.0);
  EXPECT_NEAR(q_ppg_soft(10.0, 1.0), 22026.465794806718, 1e-8);
  EXPECT_GT(q_ppg_soft(1.0 + 1e-9, 3.0), q_ppg_soft(1.0, 3.0));
}

TEST(Soft, SaturatesAndCounts) {
  PolarizationStats stats;
  EXPECT_EQ(q_ppg_soft(1000.0, 1.0, &stats), std::numeric_limits<double>::max());
  EXPECT_EQ(stats.saturations, 1);
  EXPECT_TRUE(std::isfinite(q_ppg_soft(709.0, 1.0, &stats)));
  EXPECT_EQ(stats.saturations, 1);
  EXPECT_THROW(q_ppg_soft(std::nan(""), 1.0), InputError);
}

TEST(Baseline, Values) {
  EXPECT_EQ(q_ppg_baseline(3.0, 3.0, unit()), 1.0);
  EXPECT_NEAR(q_ppg_baseline(15, 10, unit()), 148.4131591025766, 1e-10);
  EXPECT_NEAR(q_ppg_baseline(-12, 10, unit()), 2.7894680928689246e-10, 1e-22);
  auto p = unit();
  p.beta = 4.0;
  EXPECT_NEAR(q_ppg_baseline(15, 10, p), 148.4131591025766 / 4, 1e-10);
}

TEST(Baseline, LargeBetaRescuesOverflow) {
  auto p = unit();
  p.beta = std::exp(20.0);
  PolarizationStats stats;
  const double v = q_ppg_baseline(715.0, 0.0, p, &stats);
  EXPECT_EQ(stats.saturations, 0);
  EXPECT_NEAR(std::log(v), 695.0, 1e-9);
}

TEST(Baseline, RangeSplit) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    PolarizationParams p{uniform_real(rng, 0.01, 3), uniform_real(rng, 0.1, 10), 10, 0.9};
    const double curr = uniform_real(rng, -10, 10);
    const double below = curr - uniform_real(rng, 1e-3, 10);
    const double above = curr + uniform_real(rng, 1e-3, 10);
    const double lo = q_ppg_baseline(below, curr, p);
    ASSERT_GT(lo, 0.0);
    ASSERT_LT(lo, 1.0 / p.beta);
    ASSERT_GT(q_ppg_baseline(above, curr, p), 1.0 / p.beta);
  }
}

TEST(Transforms, PreserveArgmaxAndWidenGaps) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double alpha = uniform_real(rng, 0.01, 2);
    std::vector<double> q(6);
    for (auto& v : q) v = uniform_real(rng, -10, 10);
    const auto best = std::max_element(q.begin(), q.end()) - q.begin();
    std::vector<double> t(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) t[k] = q_ppg_soft(q[k], alpha);
    ASSERT_EQ(std::max_element(t.begin(), t.end()) - t.begin(), best);

    const double step = uniform_real(rng, 0.1, 3), top = uniform_real(rng, -5, 5);
    const PolarizationParams p{alpha, uniform_real(rng, 0.5, 2), 10, 0.9};
    const double curr = uniform_real(rng, -5, 5);
    const auto soft = [&](double x) { return q_ppg_soft(x, alpha); };
    const auto base = [&](double x) { return q_ppg_baseline(x, curr, p); };
    ASSERT_GT(soft(top) - soft(top - step), soft(top - step) - soft(top - 2 * step));
    ASSERT_GT(base(top) - base(top - step), base(top - step) - base(top - 2 * step));
  }
}

TEST(Pessimistic, BoundsAndValues) {
  CriticEnsemble ens(std::make_unique<TabularCritic>(1, 1, 2, 0.1), std::make_unique<TabularCritic>(1, 1, 2, 0.1));
  const auto u = JointAction::discrete({0}), cur = JointAction::discrete({1});
  EXPECT_EQ(q_hat_ppg(ens, 0, u, u, unit()), 1.0);
  auto& t0 = dynamic_cast<TabularCritic&>(ens.target(0));
  auto& t1 = dynamic_cast<TabularCritic&>(ens.target(1));
  t0.set(0, u, 3);
  t1.set(0, u, 5);
  t0.set(0, cur, 1);
  t1.set(0, cur, 2);
  EXPECT_NEAR(q_hat_ppg(ens, 0, u, cur, unit()), std::exp(1.0), 1e-12);
  EXPECT_DOUBLE_EQ(pessimistic_gap(ens, 0, u, cur), 1.0);
  auto p = unit();
  p.beta = 3.0;
  for (const auto* t : {&t0, &t1}) {
    EXPECT_LE(q_hat_ppg(ens, 0, u, cur, p), q_ppg_baseline(t->predict(0, u), t->predict(0, cur), p) * p.beta);
  }
  // beta is not applied inside q_hat
  EXPECT_NEAR(q_hat_ppg(ens, 0, u, cur, p), std::exp(1.0), 1e-12);
}

TEST(Clipping, Rules) {
  const auto p = unit();
  const std::vector<double> low{0.3, 0.3}, high{0.95, 0.97}, mixed{0.95, 0.5};
  EXPECT_EQ(clipped_coefficient(0.5, low, p), 0.0);
  EXPECT_EQ(clipped_coefficient(1000, low, p), 10.0);
  EXPECT_EQ(clipped_coefficient(5, high, p), 0.0);
  EXPECT_EQ(clipped_coefficient(5, mixed, p), 5.0);
  EXPECT_EQ(clipped_coefficient(1.0, low, p), 1.0);
  EXPECT_EQ(clipped_coefficient(5, {}, p), 5.0);
  auto b = p;
  b.beta = 2.0;
  EXPECT_EQ(clipped_coefficient(1000, low, b), 5.0);
}

TEST(Marginal, MatrixGameUniform) {
  const auto q = table_q(kPayoff, 3);
  const auto pols = uniform(2, 3);
  EXPECT_NEAR(marginal(q, 0, 0, 0, pols), -3.0, 1e-12);
  EXPECT_NEAR(marginal(q, 0, 0, 1, pols), 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(marginal(q, 0, 1, 0, pols), -3.0, 1e-12);
}

TEST(Marginal, SingleAgentAndDeterministicCoPlayer) {
  const std::vector<double> v{4.0, -1.0, 2.5};
  const auto q1 = table_q(v, 3);
  const auto one = uniform(1, 3);
  for (int a = 0; a < 3; ++a) EXPECT_EQ(marginal(q1, 0, 0, a, one), v[static_cast<std::size_t>(a)]);

  auto pols = uniform(2, 3);
  const std::vector<double> peaked{0.0, 800.0, 0.0};
  pols[1].set_logits(0, peaked);
  const auto q = table_q(kPayoff, 3);
  EXPECT_EQ(marginal(q, 0, 0, 0, pols), -12.0);
  EXPECT_EQ(marginal(q, 0, 0, 2, pols), 10.0);
}

TEST(MarginalPpg, RankingFlips) {
  const auto q = table_q(kPayoff, 3);
  const auto pols = uniform(2, 3);
  const double a = marginal_ppg(q, 10.0, 0, 0, 0, pols, unit());
  const double b = marginal_ppg(q, 10.0, 0, 0, 1, pols, unit());
  EXPECT_NEAR(a, (std::exp(5.0) + 2 * std::exp(-22.0)) / 3, 1e-12);
  EXPECT_NEAR(a, 49.47, 5e-3);
  EXPECT_NEAR(b, (std::exp(-22.0) + 2) / 3, 1e-12);
  EXPECT_GT(a, b);
  EXPECT_NEAR(std::log(a), log_marginal_ppg(q, 10.0, 0, 0, 0, pols, unit()), 1e-12);
}

TEST(MarginalPpg, SmallAlphaFlattens) {
  const auto q = table_q(kPayoff, 3);
  const auto pols = uniform(2, 3);
  auto p = unit();
  p.alpha = 1e-9;
  for (int u = 0; u < 3; ++u) EXPECT_NEAR(marginal_ppg(q, 10.0, 0, 0, u, pols, p), 1.0, 1e-6);
}

TEST(MarginalPpg, ArgmaxStableAboveThreshold) {
  const auto q = table_q(kPayoff, 3);
  const auto pols = uniform(2, 3);
  const double threshold = alpha_threshold(kPayoff, 0, pols);
  for (double alpha : {0.25, 1.0, 5.0}) {
    ASSERT_GT(alpha, threshold);
    auto p = unit();
    p.alpha = alpha;
    for (int agent = 0; agent < 2; ++agent) {
      int best = 0;
      for (int u = 1; u < 3; ++u) {
        if (log_marginal_ppg(q, 10.0, 0, agent, u, pols, p) > log_marginal_ppg(q, 10.0, 0, agent, best, pols, p)) best = u;
      }
      EXPECT_EQ(best, 0) << "alpha " << alpha;
    }
  }
}

TEST(LogMarginalPpg, FiniteWhenDirectFormOverflows) {
  const auto q = table_q(kPayoff, 3);
  const auto pols = uniform(2, 3);
  auto p = unit();
  p.alpha = 200.0;
  const double direct = marginal_ppg(q, 10.0, 0, 0, 0, pols, p);
  EXPECT_NEAR(std::log(direct), std::log(std::numeric_limits<double>::max() / 3), 1e-12);
  EXPECT_NEAR(log_marginal_ppg(q, 10.0, 0, 0, 0, pols, p), 1000.0 - std::log(3.0), 1e-9);
}

TEST(Threshold, MatrixGame) {
  EXPECT_NEAR(alpha_threshold(kPayoff, 0, uniform(2, 3)), std::log(1.0 / 3.0) / (10.0 - 15.0), 1e-12);
}

TEST(Threshold, CertainCoPlayersGiveZero) {
  auto pols = uniform(2, 3);
  const std::vector<double> sure{1000.0, 0.0, 0.0};
  pols[0].set_logits(0, sure);
  pols[1].set_logits(0, sure);
  EXPECT_NEAR(alpha_threshold(kPayoff, 0, pols), 0.0, 1e-12);
}

TEST(Threshold, Errors) {
  EXPECT_THROW(alpha_threshold(std::vector<double>{1, 5, 5, 0}, 0, uniform(2, 2)), AssumptionViolation);
  auto pols = uniform(2, 2);
  const std::vector<double> dead{-1e6, 0.0};
  pols[1].set_logits(0, dead);
  EXPECT_THROW(alpha_threshold(std::vector<double>{9, 1, 2, 0}, 0, pols), DegeneratePolicyError);
}

TEST(Threshold, SharperGapLowersThreshold) {
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> q(9);
    for (auto& v : q) v = uniform_real(rng, -5, 5);
    q[0] = 6.0;
    std::vector<SoftmaxPolicy> pols = uniform(2, 3);
    for (auto& pol : pols) {
      std::vector<double> row{uniform_real(rng, -2, 2), uniform_real(rng, -2, 2), uniform_real(rng, -2, 2)};
      pol.set_logits(0, row);
    }
    const double base = alpha_threshold(q, 0, pols);
    auto sharper = q;
    sharper[0] += uniform_real(rng, 0.1, 5);
    ASSERT_LT(alpha_threshold(sharper, 0, pols), base);
  }
}

TEST(Threshold, BelowThresholdCanMisrank) {
  const auto q = table_q(kPayoff, 3);
  const auto pols = uniform(2, 3);
  auto p = unit();
  p.alpha = 0.01;
  EXPECT_LT(marginal_ppg(q, 10.0, 0, 0, 0, pols, p), marginal_ppg(q, 10.0, 0, 0, 1, pols, p));
}

TEST(Marginal, MonteCarloErrorShrinksAsRootN) {
  const QFunction q = [](StateId, const JointAction& u) {
    const auto& x = u.values();
    return -(x[0] - 1) * (x[0] - 1) - (x[1] - 2) * (x[1] - 2);
  };
  const std::vector<GaussianPolicy> pols{GaussianPolicy(ActionBounds{}, 0.0, 0.0),
                                         GaussianPolicy(ActionBounds{}, 0.5, std::log(1.5))};
  // E over x1 ~ N(0.5, 1.5^2) of -(x1 - 2)^2 = -(1.5^2 + 1.5^2)
  const double exact = -4.5;
  Rng rng(13);
  const auto spread = [&](int n) {
    const int reps = 200;
    double mean = 0.0, sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double e = marginal(q, 0, 0, 1.0, pols, n, rng) - exact;
      mean += e;
      sq += e * e;
    }
    mean /= reps;
    return std::sqrt(sq / reps - mean * mean);
  };
  const double small = spread(100), large = spread(10000);
  EXPECT_GT(small / large, 8.0);
  EXPECT_LT(small / large, 12.5);
  Rng one(2);
  EXPECT_NEAR(marginal(q, 0, 0, 1.0, pols, 100000, one), exact, 0.05);
}

}  // namespace
}  // namespace mappg
