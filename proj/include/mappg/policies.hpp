#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mappg/envs.hpp"
#include "mappg/joint_action.hpp"
#include "mappg/random.hpp"

namespace mappg {

/// Tabular softmax policy for one agent: one logit row per state.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(int states, int actions);

  int state_count() const { return states_; }
  int action_count() const { return actions_; }

  std::vector<double> probs(StateId state) const;
  double prob(StateId state, int action) const;
  double log_prob(StateId state, int action) const;

  /// d log pi(action|state) / d logits, over the full logit table: the
  /// state's row holds one_hot(action) - pi(.|state), other rows are zero.
  std::vector<double> grad_log_prob(StateId state, int action) const;

  /// Argmax of the state's row; ties go to the lowest index.
  int greedy(StateId state) const;

  std::span<double> parameters() { return logits_; }
  std::span<const double> parameters() const { return logits_; }
  std::span<const double> logits(StateId state) const;
  void set_logits(StateId state, std::span<const double> row);

  nlohmann::json to_json() const;

 private:
  std::size_t row_offset(StateId state) const;

  int states_;
  int actions_;
  std::vector<double> logits_;
};

/// State-independent diagonal Gaussian over one bounded real action.
/// Parameters are (mean, log_std); the standard deviation is floored at kMinStd.
class GaussianPolicy {
 public:
  static constexpr double kMinStd = 1e-3;

  explicit GaussianPolicy(ActionBounds bounds, double mean = 0.0, double log_std = 0.0);

  double mean() const { return params_[0]; }
  double log_std() const { return params_[1]; }
  double std_dev() const;
  const ActionBounds& bounds() const { return bounds_; }

  double prob(StateId state, double action) const;  // density
  double log_prob(StateId state, double action) const;
  /// (d/d mean, d/d log_std) of log density.
  std::vector<double> grad_log_prob(StateId state, double action) const;
  double greedy(StateId) const { return mean(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Clamp the mean into the action interval and log_std into
  /// [log kMinStd, log(interval width)]; the learner calls this after each update.
  void project();

  nlohmann::json to_json() const;

 private:
  ActionBounds bounds_;
  std::vector<double> params_;
};

enum class ExplorationKind { kEpsilonGreedy, kUniformThenNoise };

struct ExplorationSchedule {
  ExplorationKind kind = ExplorationKind::kEpsilonGreedy;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  long anneal_steps = 10000;
  double noise_std = 1.0;
  long uniform_steps = 10000;

  /// Piecewise-linear epsilon, equal to epsilon_end from anneal_steps on.
  double epsilon(long t) const;

  static ExplorationSchedule epsilon_greedy(double start, double end, long anneal_steps);
  static ExplorationSchedule uniform_then_noise(long uniform_steps, double noise_std);
};

/// Behaviour action for one agent at environment step t.
int sample(const SoftmaxPolicy& policy, StateId state, const ExplorationSchedule& schedule, long t, Rng& rng);
double sample(const GaussianPolicy& policy, StateId state, const ExplorationSchedule& schedule, long t,
              Rng& rng);

JointAction greedy_joint(std::span<const SoftmaxPolicy> policies, StateId state);
JointAction greedy_joint(std::span<const GaussianPolicy> policies, StateId state);

/// prod_{b != excluded} pi_b(u_b | s); 1 when no other agent exists.
double other_agents_prob(std::span<const SoftmaxPolicy> policies, StateId state, const JointAction& action,
                         int excluded_agent);
/// Density analogue for Gaussian agents.
double other_agents_prob(std::span<const GaussianPolicy> policies, StateId state, const JointAction& action,
                         int excluded_agent);

double joint_prob(std::span<const SoftmaxPolicy> policies, StateId state, const JointAction& action);

}  // namespace mappg
