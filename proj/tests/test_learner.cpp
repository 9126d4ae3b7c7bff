#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mappg/errors.hpp"
#include "mappg/learner.hpp"

namespace mappg {
namespace {

const std::vector<double> kPayoff{15, -12, -12, -12, 10, 10, -12, 10, 10};

MatrixGame matrix() { return MatrixGame(2, 3, kPayoff); }

CriticEnsemble table_critics(const std::vector<double>& first, const std::vector<double>& second, int agents,
                             int actions) {
  auto a = std::make_unique<TabularCritic>(1, agents, actions, 0.1);
  auto b = std::make_unique<TabularCritic>(1, agents, actions, 0.1);
  for (std::size_t i = 0; i < first.size(); ++i) {
    const auto u = JointAction::discrete(unflatten(i, agents, actions));
    a->set(0, u, first[i]);
    b->set(0, u, second[i]);
  }
  return CriticEnsemble(std::move(a), std::move(b));
}

ActorSet uniform_actors(int agents = 2, int actions = 3) {
  return ActorSet::softmax(agents, 1, actions, {OptimizerKind::kSgd, 0.1});
}

std::vector<double> row(const ActorSet& actors, int agent) {
  const auto l = actors.softmax_policies()[static_cast<std::size_t>(agent)].logits(0);
  return {l.begin(), l.end()};
}

TEST(Algorithm, Names) {
  for (auto a : {Algorithm::kMappg, Algorithm::kVanillaMapg, Algorithm::kComa, Algorithm::kMappgNoPolarization,
                 Algorithm::kMappgNoPessimisticBound}) {
    EXPECT_EQ(algorithm_from_string(to_string(a)), a);
  }
  EXPECT_THROW(algorithm_from_string("maddpg"), ConfigError);
}

TEST(Mappg, ZeroCoefficientsLeaveParametersUnchanged) {
  auto actors = uniform_actors();
  const std::vector<double> before0 = row(actors, 0), before1 = row(actors, 1);
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  // Every sample is worse than u_curr = (A, A), so q_hat < 1 throughout.
  WeightedBatch batch;
  for (std::size_t i = 1; i < 9; ++i) batch.transitions.push_back({0, JointAction::discrete(unflatten(i, 2, 3)), 0, kAbsorbingState, true});
  const auto upd = update_actors_mappg(actors, critics, batch, PolarizationParams{});
  EXPECT_EQ(row(actors, 0), before0);
  EXPECT_EQ(row(actors, 1), before1);
  EXPECT_DOUBLE_EQ(upd.clip_fraction, 1.0);
  EXPECT_EQ(upd.grad_norms, (std::vector<double>{0.0, 0.0}));
}

TEST(Mappg, SingleTransitionFollowsSoftmaxIdentity) {
  auto actors = uniform_actors();
  // Make u_curr = (C, C) so (A, A) lies above it.
  for (auto& p : actors.softmax_policies()) p.set_logits(0, std::vector<double>{0.0, 0.0, 0.5});
  const auto pi = actors.softmax_policies()[0].probs(0);
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  const WeightedBatch batch{{{0, JointAction::discrete({0, 0}), 15, kAbsorbingState, true}}, {}};
  PolarizationParams params;
  params.alpha = 0.1;
  const double coeff = std::min(std::exp(0.1 * (15 - 10)), params.cap_L);
  const auto before = row(actors, 0);
  update_actors_mappg(actors, critics, batch, params);
  const auto after = row(actors, 0);
  for (int j = 0; j < 3; ++j) {
    const double expected = 0.1 * coeff * ((j == 0 ? 1.0 : 0.0) - pi[static_cast<std::size_t>(j)]);
    EXPECT_NEAR(after[static_cast<std::size_t>(j)] - before[static_cast<std::size_t>(j)], expected, 1e-14);
  }
}

TEST(Mappg, OptimumSampleRaisesItsProbability) {
  auto actors = uniform_actors();
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  const WeightedBatch batch{{{0, JointAction::discrete({0, 0}), 15, kAbsorbingState, true}}, {}};
  update_actors_mappg(actors, critics, batch, PolarizationParams{});
  for (int a = 0; a < 2; ++a) EXPECT_GT(actors.softmax_policies()[static_cast<std::size_t>(a)].prob(0, 0), 1.0 / 3.0);
}

TEST(Mappg, ConfidentPoliciesAreAFixedPoint) {
  auto actors = uniform_actors();
  for (auto& p : actors.softmax_policies()) p.set_logits(0, std::vector<double>{0.0, 5.0, 0.0});
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  const auto before = row(actors, 0);
  // (B, B) is the current joint action and is taken with probability > 0.9 per agent.
  const WeightedBatch batch{{{0, JointAction::discrete({1, 1}), 10, kAbsorbingState, true}}, {}};
  const auto upd = update_actors_mappg(actors, critics, batch, PolarizationParams{});
  EXPECT_EQ(row(actors, 0), before);
  EXPECT_DOUBLE_EQ(upd.clip_fraction, 1.0);
}

TEST(Mappg, PessimismUsesWorstCritic) {
  const auto actors = uniform_actors(1, 2);
  auto critics = table_critics({0.0, 3.0}, {0.0, 1.0}, 1, 2);  // u_curr = 0
  const std::vector<Transition> batch{{0, JointAction::discrete({1}), 0, kAbsorbingState, true}};
  PolarizationParams p;
  p.cap_L = 1e9;
  EXPECT_NEAR(coefficients_mappg(actors, critics, batch, p).values[0][0], std::exp(1.0), 1e-12);
  EXPECT_NEAR(coefficients_no_pessimistic_bound(actors, critics, batch, p).values[0][0], std::exp(3.0), 1e-12);
  p.cap_L = 2.0;
  EXPECT_EQ(coefficients_mappg(actors, critics, batch, p).values[0][0], 2.0);
  EXPECT_NEAR(coefficients_no_pessimistic_bound(actors, critics, batch, p).values[0][0], std::exp(3.0), 1e-12);
}

TEST(NoPessimisticBound, MatchesMappgWithTwinCriticsAndNoCap) {
  const auto actors = uniform_actors();
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  std::vector<Transition> batch;
  for (std::size_t i = 0; i < 9; ++i) batch.push_back({0, JointAction::discrete(unflatten(i, 2, 3)), 0, kAbsorbingState, true});
  PolarizationParams p;
  p.cap_L = 1e300;
  EXPECT_EQ(coefficients_mappg(actors, critics, batch, p).values,
            coefficients_no_pessimistic_bound(actors, critics, batch, p).values);
}

TEST(NoPolarization, LinearGap) {
  const auto actors = uniform_actors(1, 3);
  const auto critics = table_critics({1.0, 4.0, -2.0}, {1.0, 3.5, -1.0}, 1, 3);
  std::vector<Transition> batch;
  for (int u = 0; u < 3; ++u) batch.push_back({0, JointAction::discrete({u}), 0, kAbsorbingState, true});
  PolarizationParams p;
  p.beta = 2.0;
  const auto c = coefficients_no_polarization(actors, critics, batch, p);
  EXPECT_EQ(c.values[0][0], 0.0);   // gap 0: nothing to gain
  EXPECT_EQ(c.values[1][0], 1.25);  // min(3.5 - 1, L) / beta
  EXPECT_EQ(c.values[2][0], 0.0);
  EXPECT_EQ(c.zeroed, 2);
}

TEST(Vanilla, ExactModeReproducesMiscoordination) {
  auto actors = uniform_actors();
  const auto game = matrix();
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  const auto batch = expectation_batch(actors, game, 0);
  double wsum = 0.0;
  for (double w : batch.weights) wsum += w;
  EXPECT_NEAR(wsum, 1.0, 1e-15);

  // Oracle: the expected gradient is pi * (M - V) with M the marginal values.
  const std::vector<double> m{-3.0, 8.0 / 3.0, 8.0 / 3.0};
  const double v = (m[0] + m[1] + m[2]) / 3.0;
  update_actors_vanilla(actors, critics, batch);
  for (int a = 0; a < 2; ++a) {
    const auto after = row(actors, a);
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(after[static_cast<std::size_t>(j)], 0.1 * (m[static_cast<std::size_t>(j)] - v) / 3.0, 1e-12);
    }
    EXPECT_LT(actors.softmax_policies()[static_cast<std::size_t>(a)].prob(0, 0), 1.0 / 3.0);
  }
}

TEST(Vanilla, ZeroCriticDoesNotMove) {
  auto actors = uniform_actors();
  const auto critics = table_critics(std::vector<double>(9, 0.0), std::vector<double>(9, 0.0), 2, 3);
  const auto batch = expectation_batch(actors, matrix(), 0);
  const auto before = row(actors, 1);
  update_actors_vanilla(actors, critics, batch);
  EXPECT_EQ(row(actors, 1), before);
}

TEST(Vanilla, BanditMovesToBestAction) {
  auto actors = uniform_actors(1, 2);
  const MatrixGame bandit(1, 2, {1.0, 0.0});
  const auto critics = table_critics({1.0, 0.0}, {1.0, 0.0}, 1, 2);
  for (int i = 0; i < 200; ++i) update_actors_vanilla(actors, critics, expectation_batch(actors, bandit, 0));
  EXPECT_GT(actors.softmax_policies()[0].prob(0, 0), 0.9);
}

TEST(Vanilla, SampledMeanMatchesExpectation) {
  auto actors = uniform_actors();
  actors.softmax_policies()[0].set_logits(0, std::vector<double>{0.3, -0.2, 0.1});
  actors.softmax_policies()[1].set_logits(0, std::vector<double>{-0.4, 0.5, 0.0});
  const auto game = matrix();
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);

  const auto exact_batch = expectation_batch(actors, game, 0);
  const auto exact_c = coefficients_vanilla(actors, critics, exact_batch.transitions);
  std::vector<double> exact(3, 0.0);
  for (std::size_t i = 0; i < exact_batch.transitions.size(); ++i) {
    const auto g = actors.grad_log_prob(0, 0, exact_batch.transitions[i].action);
    for (std::size_t j = 0; j < 3; ++j) exact[j] += exact_batch.weights[i] * exact_c.values[i][0] * g[j];
  }

  Rng rng(21);
  const auto on_policy = ExplorationSchedule::epsilon_greedy(0.0, 0.0, 1);
  const int n = 10000;
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (int k = 0; k < n; ++k) {
    const Transition t{0, actors.sample(0, on_policy, 0, rng), 0, kAbsorbingState, true};
    const double c = coefficients_vanilla(actors, critics, std::span(&t, 1)).values[0][0];
    const auto g = actors.grad_log_prob(0, 0, t.action);
    for (std::size_t j = 0; j < 3; ++j) {
      sum[j] += c * g[j];
      sq[j] += c * g[j] * c * g[j];
    }
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const double mean = sum[j] / n;
    const double se = std::sqrt((sq[j] / n - mean * mean) / n);
    EXPECT_LT(std::abs(mean - exact[j]), 3 * se) << j;
  }
}

TEST(Coma, Advantages) {
  const auto actors = uniform_actors();
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  const std::vector<Transition> bb{{0, JointAction::discrete({1, 1}), 10, kAbsorbingState, true}};
  EXPECT_NEAR(coefficients_coma(actors, critics, bb).values[0][0], 10 - (-12 + 10 + 10) / 3.0, 1e-12);

  // Under pi_a weighting the advantages over agent a's actions sum to zero.
  double total = 0.0;
  for (int u = 0; u < 3; ++u) {
    const std::vector<Transition> t{{0, JointAction::discrete({u, 2}), 0, kAbsorbingState, true}};
    total += coefficients_coma(actors, critics, t).values[0][0] / 3.0;
  }
  EXPECT_NEAR(total, 0.0, 1e-12);

  auto sure = uniform_actors();
  sure.softmax_policies()[0].set_logits(0, std::vector<double>{0.0, 1000.0, 0.0});
  EXPECT_NEAR(coefficients_coma(sure, critics, bb).values[0][0], 0.0, 1e-12);
}

TEST(Coma, DiscreteOnly) {
  const auto actors = ActorSet::gaussian({ActionBounds{}, ActionBounds{}}, {});
  const auto game = DifferentialGame::max_of_two_quadratics();
  auto critics = CriticEnsemble(
      std::make_unique<FeedforwardCritic>(FeatureEncoder(game), std::vector<int>{4}, OptimizerConfig{}, 1),
      std::make_unique<FeedforwardCritic>(FeatureEncoder(game), std::vector<int>{4}, OptimizerConfig{}, 2));
  const std::vector<Transition> t{{0, JointAction::continuous({0, 0}), 0, kAbsorbingState, true}};
  EXPECT_THROW(coefficients_coma(actors, critics, t), UnsupportedOperation);
}

TEST(ActorSet, ClippingBoundsJointNorm) {
  auto actors = uniform_actors(2, 2);
  const auto norms = actors.ascend({{3.0, 0.0}, {0.0, 4.0}}, 1.0);
  EXPECT_EQ(norms, (std::vector<double>{3.0, 4.0}));
  EXPECT_NEAR(row(actors, 0)[0], 0.1 * 3.0 / 5.0, 1e-15);
  EXPECT_NEAR(row(actors, 1)[1], 0.1 * 4.0 / 5.0, 1e-15);
}

TEST(ActorUpdates, NeverTouchCritics) {
  auto actors = uniform_actors();
  const auto critics = table_critics(kPayoff, kPayoff, 2, 3);
  const auto c0 = critics.critic(0).parameters(), t1 = critics.target(1).parameters();
  const auto batch = expectation_batch(actors, matrix(), 0);
  update_actors_mappg(actors, critics, batch, PolarizationParams{});
  update_actors_coma(actors, critics, batch);
  EXPECT_EQ(critics.critic(0).parameters(), c0);
  EXPECT_EQ(critics.target(1).parameters(), t1);
}

TEST(TrainConfig, JsonMergeAndErrors) {
  auto c = TrainConfig::defaults_for("matrix");
  c.merge_json({{"alpha", 2.5}, {"batch_size", 8}, {"algorithm", "coma"}});
  EXPECT_EQ(c.polarization.alpha, 2.5);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.algorithm, Algorithm::kComa);
  EXPECT_THROW(c.merge_json({{"alhpa", 1}}), ConfigError);

  auto back = TrainConfig::defaults_for("matrix");
  back.merge_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(TrainConfig, Validation) {
  const auto game = matrix();
  const auto mtq = DifferentialGame::max_of_two_quadratics();
  EXPECT_NO_THROW(TrainConfig::defaults_for("matrix").validate(game));
  EXPECT_NO_THROW(TrainConfig::defaults_for("mtq").validate(mtq));
  auto tabular = TrainConfig::defaults_for("mtq");
  tabular.critic = CriticKind::kTabular;
  EXPECT_THROW(tabular.validate(mtq), ConfigError);
  auto coma = TrainConfig::defaults_for("mtq", Algorithm::kComa);
  EXPECT_THROW(coma.validate(mtq), ConfigError);
  auto lemma = TrainConfig::defaults_for("matrix");
  lemma.lemma1_mode = true;
  EXPECT_THROW(lemma.validate(game), ConfigError);  // 0.1 > 0.1^3 / 8
  lemma.actor_optimizer.learning_rate = 1e-4;
  EXPECT_NO_THROW(lemma.validate(game));
  auto bad = TrainConfig::defaults_for("matrix");
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(game), ConfigError);
}

TEST(Run, DeterministicForSeed) {
  const auto game = matrix();
  auto cfg = TrainConfig::defaults_for("matrix");
  cfg.total_steps = 600;
  cfg.seed = 4;
  std::ostringstream a, b, c;
  run(cfg, game).log.write_csv(a, 2);
  run(cfg, game).log.write_csv(b, 2);
  cfg.seed = 5;
  run(cfg, game).log.write_csv(c, 2);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Run, LogShape) {
  const auto game = matrix();
  auto cfg = TrainConfig::defaults_for("matrix");
  cfg.total_steps = 500;
  const auto result = run(cfg, game);
  ASSERT_EQ(result.log.records.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(result.log.records[i].step, static_cast<long>(100 * (i + 1)));
  EXPECT_EQ(RunLog::csv_header(2),
            "step,return,greedy_action_0,greedy_action_1,greedy_prob_0,greedy_prob_1,q_greedy,q_target_greedy,"
            "clip_fraction,saturation_count");
}

TEST(Run, MatrixGameFindsOptimum) {
  const auto game = matrix();
  const auto cfg = TrainConfig::defaults_for("matrix");
  const auto result = run(cfg, game);
  EXPECT_EQ(result.actors.greedy(0), JointAction::discrete({0, 0}));
  EXPECT_DOUBLE_EQ(result.log.records.back().episode_return, 15.0);
}

}  // namespace
}  // namespace mappg
