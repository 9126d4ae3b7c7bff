#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mappg/critics.hpp"
#include "mappg/envs.hpp"
#include "mappg/optim.hpp"
#include "mappg/polarization.hpp"
#include "mappg/policies.hpp"

namespace mappg {

enum class Algorithm { kMappg, kVanillaMapg, kComa, kMappgNoPolarization, kMappgNoPessimisticBound };

Algorithm algorithm_from_string(const std::string& name);
std::string to_string(Algorithm algorithm);

/// How the actor gradient is estimated: from the replay minibatch (as in
/// training) or as its exact expectation under the current joint policy.
enum class ActorMode { kSampled, kExactExpectation };

/// One policy per agent, all from the same family, each with its own optimizer.
class ActorSet {
 public:
  static ActorSet softmax(int agents, int states, int actions, OptimizerConfig optimizer);
  static ActorSet gaussian(std::vector<ActionBounds> bounds, OptimizerConfig optimizer);
  /// Policies matching the game's action type, at their default initialization.
  static ActorSet for_game(const Game& game, OptimizerConfig optimizer);

  bool is_discrete() const { return discrete_; }
  int agent_count() const;

  std::vector<SoftmaxPolicy>& softmax_policies() { return softmax_; }
  const std::vector<SoftmaxPolicy>& softmax_policies() const { return softmax_; }
  std::vector<GaussianPolicy>& gaussian_policies() { return gaussian_; }
  const std::vector<GaussianPolicy>& gaussian_policies() const { return gaussian_; }

  JointAction greedy(StateId state) const;
  JointAction sample(StateId state, const ExplorationSchedule& schedule, long t, Rng& rng) const;
  /// Probability (softmax) or density (Gaussian) of agent's component of u.
  double prob(int agent, StateId state, const JointAction& u) const;
  std::vector<double> grad_log_prob(int agent, StateId state, const JointAction& u) const;

  /// Ascends every agent along its gradient. When max_norm > 0 the gradients
  /// are first rescaled so their joint norm is at most max_norm. Gaussian
  /// parameters are projected back into range afterwards. Returns per-agent
  /// norms before clipping.
  std::vector<double> ascend(std::vector<std::vector<double>> grads, double max_norm);

  nlohmann::json to_json() const;

 private:
  bool discrete_ = true;
  std::vector<SoftmaxPolicy> softmax_;
  std::vector<GaussianPolicy> gaussian_;
  std::vector<Optimizer> optimizers_;
};

/// Minibatch with optional per-sample weights (empty = uniform).
struct WeightedBatch {
  std::vector<Transition> transitions;
  std::vector<double> weights;
};

/// Every joint action at `state`, weighted by its probability under the current
/// policies, with rewards from the game. Discrete one-step games only.
WeightedBatch expectation_batch(const ActorSet& actors, const Game& game, StateId state);

/// Per-sample, per-agent policy-gradient coefficients.
struct Coefficients {
  std::vector<std::vector<double>> values;  // [sample][agent]
  long zeroed = 0;                          // (sample, agent) entries removed by clipping
};

Coefficients coefficients_mappg(const ActorSet& actors, const CriticEnsemble& critics,
                                std::span<const Transition> batch, const PolarizationParams& params,
                                PolarizationStats* stats = nullptr);
/// q_hat from the first target critic alone, without the L cap.
Coefficients coefficients_no_pessimistic_bound(const ActorSet& actors, const CriticEnsemble& critics,
                                               std::span<const Transition> batch, const PolarizationParams& params,
                                               PolarizationStats* stats = nullptr);
/// The pessimistic gap used linearly: 0 if negative (or by the P rule), else min(gap, L) / beta.
Coefficients coefficients_no_polarization(const ActorSet& actors, const CriticEnsemble& critics,
                                          std::span<const Transition> batch, const PolarizationParams& params);
/// Raw first-critic values Q(s, u).
Coefficients coefficients_vanilla(const ActorSet& actors, const CriticEnsemble& critics,
                                  std::span<const Transition> batch);
/// Q(s, u) - sum_{u'_a} pi_a(u'_a|s) Q(s, (u'_a, u_{-a})) from the first critic.
Coefficients coefficients_coma(const ActorSet& actors, const CriticEnsemble& critics,
                               std::span<const Transition> batch);

struct ActorUpdate {
  std::vector<double> grad_norms;
  double clip_fraction = 0.0;
};

/// Ascends each agent along the (weighted) mean of coeff * grad log pi_a(u_a|s).
ActorUpdate apply_coefficients(ActorSet& actors, std::span<const Transition> batch, const Coefficients& coeffs,
                               std::span<const double> weights = {}, double max_grad_norm = 0.0);

ActorUpdate update_actors_mappg(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                                const PolarizationParams& params, double max_grad_norm = 0.0,
                                PolarizationStats* stats = nullptr);
ActorUpdate update_actors_no_pessimistic_bound(ActorSet& actors, const CriticEnsemble& critics,
                                               const WeightedBatch& batch, const PolarizationParams& params,
                                               double max_grad_norm = 0.0, PolarizationStats* stats = nullptr);
ActorUpdate update_actors_no_polarization(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                                          const PolarizationParams& params, double max_grad_norm = 0.0);
ActorUpdate update_actors_vanilla(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                                  double max_grad_norm = 0.0);
ActorUpdate update_actors_coma(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                               double max_grad_norm = 0.0);

enum class CriticKind { kAuto, kTabular, kFeedforward };

struct TrainConfig {
  Algorithm algorithm = Algorithm::kMappg;
  PolarizationParams polarization;
  OptimizerConfig actor_optimizer{OptimizerKind::kSgd, 0.1};
  OptimizerConfig critic_optimizer{OptimizerKind::kSgd, 0.1};
  CriticKind critic = CriticKind::kAuto;  // tabular for discrete games, feedforward otherwise
  std::vector<int> hidden{64, 64};
  int batch_size = 32;
  std::size_t buffer_capacity = 5000;
  int sync_period = 200;
  long total_steps = 10000;
  int update_period = 1;
  int eval_interval = 100;
  ExplorationSchedule exploration = ExplorationSchedule::epsilon_greedy(1.0, 0.05, 10000);
  double max_grad_norm = 0.0;  // 0 disables actor gradient clipping
  ActorMode actor_mode = ActorMode::kSampled;
  bool lemma1_mode = false;  // enforce eta <= (1 - gamma)^3 / 8
  std::uint64_t seed = 0;

  /// Defaults for a built-in game name ("matrix", "mtq", "tabular_mdp").
  static TrainConfig defaults_for(const std::string& game_name, Algorithm algorithm = Algorithm::kMappg);
  /// Overrides fields present in doc; unknown keys raise ConfigError.
  void merge_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  /// Throws ConfigError for invalid values or a config/game mismatch.
  void validate(const Game& game) const;
};

struct RunRecord {
  long step = 0;
  double episode_return = 0.0;
  JointAction greedy;
  std::vector<double> greedy_prob;  // probability, or density for Gaussian agents
  double q_greedy = 0.0;
  double q_target_greedy = 0.0;
  double clip_fraction = 0.0;
  long saturation_count = 0;
};

struct RunLog {
  std::vector<RunRecord> records;

  static std::string csv_header(int agents);
  void write_csv(std::ostream& os, int agents) const;
};

struct RunResult {
  RunLog log;
  ActorSet actors;
  CriticEnsemble critics;
};

/// Greedy rollout return from the initial state (undiscounted, one episode).
double greedy_return(const ActorSet& actors, const Game& game);

/// Trains from scratch; bit-identical output for identical config and seed.
RunResult run(const TrainConfig& config, const Game& game);

}  // namespace mappg
