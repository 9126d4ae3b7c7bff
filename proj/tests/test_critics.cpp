#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mappg/critics.hpp"
#include "mappg/errors.hpp"

namespace mappg {
namespace {

JointAction ja(std::vector<int> u) { return JointAction::discrete(std::move(u)); }

CriticEnsemble tabular_pair(int states, int agents, int actions, double lr, int sync = 200) {
  return CriticEnsemble(std::make_unique<TabularCritic>(states, agents, actions, lr),
                        std::make_unique<TabularCritic>(states, agents, actions, lr), sync);
}

FeedforwardCritic small_net(std::uint64_t seed, OptimizerConfig opt = {OptimizerKind::kSgd, 1e-2}) {
  return FeedforwardCritic(FeatureEncoder(1, std::vector<ActionBounds>(2, ActionBounds{})), {8, 8}, opt, seed);
}

TEST(TabularCritic, ZeroInitializedAndSettable) {
  TabularCritic q(1, 2, 3, 0.1);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(q.predict(0, ja({i, j})), 0.0);
  }
  q.set(0, ja({0, 0}), 15.0);
  EXPECT_EQ(q.predict(0, ja({0, 0})), 15.0);
  EXPECT_EQ(q.predict(0, ja({0, 1})), 0.0);
  EXPECT_THROW(q.predict(0, ja({0, 3})), InputError);
}

TEST(FeedforwardCritic, ZeroWeightsGiveFinalBias) {
  auto net = small_net(1);
  std::vector<double> p(net.parameter_count(), 0.0);
  p.back() = 0.7;
  net.set_parameters(p);
  EXPECT_DOUBLE_EQ(net.predict(0, JointAction::continuous({3.0, -2.0})), 0.7);
}

TEST(FeatureEncoder, Layout) {
  const FeatureEncoder cont(1, std::vector<ActionBounds>(2, ActionBounds{-10, 10}));
  std::vector<double> x(cont.dimension());
  cont.encode(0, JointAction::continuous({10.0, -5.0}), x);
  EXPECT_EQ(x, (std::vector<double>{1.0, -0.5}));

  const FeatureEncoder disc(3, 2, 3);
  ASSERT_EQ(disc.dimension(), 9u);
  std::vector<double> y(9);
  disc.encode(2, ja({1, 0}), y);
  EXPECT_EQ(y, (std::vector<double>{0, 0, 1, 0, 1, 0, 1, 0, 0}));
}

TEST(FeedforwardCritic, GradientsMatchFiniteDifferences) {
  Rng rng(77);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    auto net = small_net(static_cast<std::uint64_t>(trial));
    std::vector<double> x{uniform_real(rng, -1, 1), uniform_real(rng, -1, 1)};
    const auto g = net.output_gradient(x);
    const std::vector<double> targets{uniform_real(rng, -3, 3), uniform_real(rng, -3, 3)};
    std::vector<double> batch{x[0], x[1], uniform_real(rng, -1, 1), uniform_real(rng, -1, 1)};
    const auto lg = net.loss_gradient(batch, targets);
    const auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto plus = params, minus = params;
      plus[i] += h;
      minus[i] -= h;
      auto a = net, b = net;
      a.set_parameters(plus);
      b.set_parameters(minus);
      ASSERT_NEAR(g[i], (a.forward(x) - b.forward(x)) / (2 * h), 1e-5);
      const auto loss = [&](const FeedforwardCritic& c) {
        double l = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
          const double e = c.forward(std::span<const double>(batch).subspan(2 * k, 2)) - targets[k];
          l += 0.5 * e * e / 2.0;
        }
        return l;
      };
      ASSERT_NEAR(lg[i], (loss(a) - loss(b)) / (2 * h), 1e-5);
    }
  }
}

TEST(FeedforwardCritic, FitReducesError) {
  auto net = small_net(3, {OptimizerKind::kAdam, 1e-2});
  const std::vector<StateId> s(4, 0);
  const std::vector<JointAction> u{JointAction::continuous({-5, -5}), JointAction::continuous({5, 5}),
                                   JointAction::continuous({0, 0}), JointAction::continuous({5, -5})};
  const std::vector<double> y{0.0, 5.0, -1.6, -5.0};
  const double first = net.fit(s, u, y);
  double last = first;
  for (int i = 0; i < 2000; ++i) last = net.fit(s, u, y);
  EXPECT_LT(last, 1e-3 * first);
}

TEST(TdUpdate, TerminalTargetIsReward) {
  auto ens = tabular_pair(1, 2, 3, 1.0);
  const std::vector<Transition> batch{{0, ja({1, 1}), 10.0, kAbsorbingState, true}};
  const double loss = td_update(ens, batch, [](StateId) { return ja({0, 0}); }, 0.9);
  EXPECT_DOUBLE_EQ(loss, 100.0);
  EXPECT_DOUBLE_EQ(ens.critic(0).predict(0, ja({1, 1})), 10.0);
  EXPECT_DOUBLE_EQ(ens.critic(1).predict(0, ja({1, 1})), 10.0);
}

TEST(TdUpdate, BootstrapsFromOwnTarget) {
  auto ens = tabular_pair(2, 1, 2, 1.0);
  dynamic_cast<TabularCritic&>(ens.target(0)).set(1, ja({1}), 2.0);
  dynamic_cast<TabularCritic&>(ens.target(1)).set(1, ja({1}), 4.0);
  const std::vector<Transition> batch{{0, ja({0}), 1.0, 1, false}};
  td_update(ens, batch, [](StateId) { return ja({1}); }, 0.9);
  EXPECT_NEAR(ens.critic(0).predict(0, ja({0})), 2.8, 1e-12);
  EXPECT_NEAR(ens.critic(1).predict(0, ja({0})), 4.6, 1e-12);
}

TEST(TdUpdate, EmptyBatchRejected) {
  auto ens = tabular_pair(1, 1, 2, 1.0);
  EXPECT_THROW(td_update(ens, {}, [](StateId) { return ja({0}); }, 0.9), InputError);
}

TEST(TdUpdate, LeavesTargetsUntouched) {
  auto ens = CriticEnsemble(std::make_unique<FeedforwardCritic>(small_net(1)),
                            std::make_unique<FeedforwardCritic>(small_net(2)));
  const auto before0 = ens.target(0).parameters();
  const auto before1 = ens.target(1).parameters();
  const std::vector<Transition> batch{{0, JointAction::continuous({1, 2}), 3.0, kAbsorbingState, true}};
  td_update(ens, batch, [](StateId) { return JointAction::continuous({0, 0}); }, 0.9);
  EXPECT_EQ(ens.target(0).parameters(), before0);
  EXPECT_EQ(ens.target(1).parameters(), before1);
  EXPECT_NE(ens.critic(0).parameters(), before0);
}

TEST(SyncTargets, CopiesExactlyAndIsIdempotent) {
  auto ens = CriticEnsemble(std::make_unique<FeedforwardCritic>(small_net(1)),
                            std::make_unique<FeedforwardCritic>(small_net(2)));
  EXPECT_EQ(ens.target(0).parameters(), ens.critic(0).parameters());  // initialization copies
  const std::vector<Transition> batch{{0, JointAction::continuous({1, 2}), 3.0, kAbsorbingState, true}};
  td_update(ens, batch, [](StateId) { return JointAction::continuous({0, 0}); }, 0.9);
  sync_targets(ens);
  const auto once = ens.target(1).parameters();
  EXPECT_EQ(once, ens.critic(1).parameters());
  sync_targets(ens);
  EXPECT_EQ(ens.target(1).parameters(), once);
  for (double x = -10; x <= 10; x += 2.5) {
    const auto u = JointAction::continuous({x, -x});
    EXPECT_EQ(ens.target(0).predict(0, u), ens.critic(0).predict(0, u));
  }
}

TEST(CriticEnsemble, SeedsControlDivergence) {
  auto same = CriticEnsemble(std::make_unique<FeedforwardCritic>(small_net(5)),
                             std::make_unique<FeedforwardCritic>(small_net(5)));
  auto diff = CriticEnsemble(std::make_unique<FeedforwardCritic>(small_net(5)),
                             std::make_unique<FeedforwardCritic>(small_net(6)));
  const std::vector<Transition> batch{{0, JointAction::continuous({1, 2}), 3.0, kAbsorbingState, true},
                                      {0, JointAction::continuous({-4, 2}), -1.0, kAbsorbingState, true}};
  const auto greedy = [](StateId) { return JointAction::continuous({0, 0}); };
  for (int i = 0; i < 20; ++i) {
    td_update(same, batch, greedy, 0.9);
    td_update(diff, batch, greedy, 0.9);
  }
  EXPECT_EQ(same.critic(0).parameters(), same.critic(1).parameters());
  EXPECT_NE(diff.critic(0).parameters(), diff.critic(1).parameters());
}

TEST(CriticEnsemble, CopyIsDeep) {
  auto ens = tabular_pair(1, 1, 2, 1.0);
  CriticEnsemble copy = ens;
  dynamic_cast<TabularCritic&>(ens.critic(0)).set(0, ja({1}), 3.0);
  EXPECT_EQ(copy.critic(0).predict(0, ja({1})), 0.0);
}

// Three states, two binary agents, transition probabilities in quarters so a
// sweep can hold every successor in proportion.
struct QuarterMdp {
  static constexpr int kStates = 3;
  static constexpr int kJoint = 4;
  std::vector<std::vector<std::vector<int>>> quarters;  // [s][u][s'] counts out of 4
  std::vector<std::vector<double>> reward;
  std::vector<int> greedy{3, 0, 2};  // fixed joint action per state

  QuarterMdp() : quarters(kStates, std::vector<std::vector<int>>(kJoint)), reward(kStates, std::vector<double>(kJoint)) {
    Rng rng(11);
    for (int s = 0; s < kStates; ++s) {
      for (int u = 0; u < kJoint; ++u) {
        auto& q = quarters[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)];
        q.assign(kStates, 0);
        for (int k = 0; k < 4; ++k) ++q[static_cast<std::size_t>(uniform_int(rng, 0, kStates - 1))];
        reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)] = uniform_real(rng, 0, 1);
      }
    }
  }
};

TEST(TdUpdate, SweepsReachLinearSystemFixedPoint) {
  const QuarterMdp m;
  const double gamma = 0.9;
  constexpr int n = QuarterMdp::kStates * QuarterMdp::kJoint;

  // Oracle: Q = R + gamma * P_g Q solved directly.
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (int s = 0; s < QuarterMdp::kStates; ++s) {
    for (int u = 0; u < QuarterMdp::kJoint; ++u) {
      const int row = s * QuarterMdp::kJoint + u;
      b(row) = m.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)];
      for (int sp = 0; sp < QuarterMdp::kStates; ++sp) {
        const double p = m.quarters[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)][static_cast<std::size_t>(sp)] / 4.0;
        a(row, sp * QuarterMdp::kJoint + m.greedy[static_cast<std::size_t>(sp)]) -= gamma * p;
      }
    }
  }
  const Eigen::VectorXd oracle = a.colPivHouseholderQr().solve(b);

  std::vector<Transition> sweep;
  for (int s = 0; s < QuarterMdp::kStates; ++s) {
    for (int u = 0; u < QuarterMdp::kJoint; ++u) {
      for (int sp = 0; sp < QuarterMdp::kStates; ++sp) {
        for (int k = 0; k < m.quarters[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)][static_cast<std::size_t>(sp)]; ++k) {
          sweep.push_back({s, JointAction::discrete(unflatten(static_cast<std::size_t>(u), 2, 2)),
                           m.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)], sp, false});
        }
      }
    }
  }
  // Each (s, u) appears four times, so lr = K / 8 moves every entry halfway to its target.
  auto ens = tabular_pair(QuarterMdp::kStates, 2, 2, static_cast<double>(sweep.size()) / 8.0, 1);
  const GreedyFn greedy = [&](StateId s) {
    return JointAction::discrete(unflatten(static_cast<std::size_t>(m.greedy[static_cast<std::size_t>(s)]), 2, 2));
  };
  const auto residual = [&] {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double backup = 0.0;
      for (int j = 0; j < n; ++j) {
        const auto u = JointAction::discrete(unflatten(static_cast<std::size_t>(j % QuarterMdp::kJoint), 2, 2));
        backup += a(i, j) * ens.critic(0).predict(j / QuarterMdp::kJoint, u);
      }
      worst = std::max(worst, std::abs(backup - b(i)));
    }
    return worst;
  };
  double prev = residual();
  int sweeps = 0;
  while (prev >= 1e-7 && sweeps < 2000) {
    td_update(ens, sweep, greedy, gamma);
    if (ens.sync_due()) ens.sync_targets();
    const double r = residual();
    ASSERT_LE(r, prev + 1e-15) << "residual rose at sweep " << sweeps;
    prev = r;
    ++sweeps;
  }
  EXPECT_LT(prev, 1e-6);
  for (int i = 0; i < n; ++i) {
    const auto u = JointAction::discrete(unflatten(static_cast<std::size_t>(i % QuarterMdp::kJoint), 2, 2));
    EXPECT_NEAR(ens.critic(0).predict(i / QuarterMdp::kJoint, u), oracle(i), 1e-5);
  }
}

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer buf(2);
  for (int i = 1; i <= 3; ++i) buf.add({0, ja({i}), static_cast<double>(i), kAbsorbingState, true});
  ASSERT_EQ(buf.size(), 2u);
  EXPECT_EQ(buf.at(0).reward, 2.0);
  EXPECT_EQ(buf.at(1).reward, 3.0);
}

TEST(ReplayBuffer, SamplingEdgeCases) {
  ReplayBuffer buf(4);
  Rng rng(1);
  EXPECT_THROW(buf.sample(1, rng), StateError);
  buf.add({0, ja({0}), 7.0, kAbsorbingState, true});
  const auto batch = buf.sample(32, rng);
  ASSERT_EQ(batch.size(), 32u);
  for (const auto& t : batch) EXPECT_EQ(t.reward, 7.0);
}

TEST(ReplayBuffer, UniformSampling) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.add({0, ja({0}), static_cast<double>(i), kAbsorbingState, true});
  Rng rng(99);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (const auto& t : buf.sample(n, rng)) ++counts[static_cast<std::size_t>(t.reward)];
  double chi2 = 0.0;
  const double expected = n / 10.0;
  const double se = std::sqrt(0.1 * 0.9 / n);
  for (int c : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_NEAR(c / static_cast<double>(n), 0.1, 3 * se);
  }
  EXPECT_LT(chi2, 27.88);  // chi-square, 9 degrees of freedom, 0.1% upper tail
}

}  // namespace
}  // namespace mappg
