#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mappg/envs.hpp"
#include "mappg/joint_action.hpp"
#include "mappg/optim.hpp"
#include "mappg/random.hpp"

namespace mappg {

/// One step of experience. Observations equal the state, so they are not stored separately.
struct Transition {
  StateId state = 0;
  JointAction action;
  double reward = 0.0;
  StateId next_state = kAbsorbingState;
  bool done = true;
};

/// Joint-action value function Q(s, u).
class Critic {
 public:
  virtual ~Critic() = default;

  virtual double predict(StateId state, const JointAction& action) const = 0;
  virtual std::vector<double> predict_batch(std::span<const StateId> states,
                                            std::span<const JointAction> actions) const;

  /// One gradient step on mean 0.5 * (y - Q)^2 over the batch.
  /// Returns mean (y - Q)^2 measured before the step.
  virtual double fit(std::span<const StateId> states, std::span<const JointAction> actions,
                     std::span<const double> targets) = 0;

  virtual std::unique_ptr<Critic> clone() const = 0;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;
  virtual nlohmann::json to_json() const = 0;
};

/// Q table over (state, flat joint action), zero-initialized.
class TabularCritic final : public Critic {
 public:
  TabularCritic(int states, int agents, int action_count, double learning_rate);

  double predict(StateId state, const JointAction& action) const override;
  double fit(std::span<const StateId> states, std::span<const JointAction> actions,
             std::span<const double> targets) override;
  std::unique_ptr<Critic> clone() const override { return std::make_unique<TabularCritic>(*this); }
  std::vector<double> parameters() const override { return q_; }
  void set_parameters(std::span<const double> params) override;
  nlohmann::json to_json() const override;

  void set(StateId state, const JointAction& action, double value);
  double learning_rate() const { return learning_rate_; }

 private:
  std::size_t offset(StateId state, const JointAction& action) const;

  int states_;
  int agents_;
  int action_count_;
  double learning_rate_;
  std::vector<double> q_;
};

/// Maps (state, joint action) to the critic's input vector: a state one-hot
/// when there is more than one state, then per agent either a one-hot of the
/// action index or the action rescaled from its bounds to [-1, 1].
class FeatureEncoder {
 public:
  explicit FeatureEncoder(const Game& game);
  FeatureEncoder(int states, std::vector<ActionBounds> bounds);  // continuous
  FeatureEncoder(int states, int agents, int action_count);      // discrete

  std::size_t dimension() const;
  void encode(StateId state, const JointAction& action, std::span<double> out) const;

 private:
  int states_ = 1;
  int agents_ = 0;
  int action_count_ = 0;
  bool discrete_ = true;
  std::vector<ActionBounds> bounds_;
};

/// Fully connected tanh network with a linear scalar output.
class FeedforwardCritic final : public Critic {
 public:
  FeedforwardCritic(FeatureEncoder encoder, std::vector<int> hidden, OptimizerConfig optimizer,
                    std::uint64_t seed);

  double predict(StateId state, const JointAction& action) const override;
  std::vector<double> predict_batch(std::span<const StateId> states,
                                    std::span<const JointAction> actions) const override;
  double fit(std::span<const StateId> states, std::span<const JointAction> actions,
             std::span<const double> targets) override;
  std::unique_ptr<Critic> clone() const override { return std::make_unique<FeedforwardCritic>(*this); }
  std::vector<double> parameters() const override { return params_; }
  void set_parameters(std::span<const double> params) override;
  nlohmann::json to_json() const override;

  /// Output on a raw feature vector.
  double forward(std::span<const double> features) const;
  /// d output / d parameters at one input, in parameter order.
  std::vector<double> output_gradient(std::span<const double> features) const;
  /// d (mean 0.5 (y - Q)^2) / d parameters over a feature batch (one column per sample).
  std::vector<double> loss_gradient(std::span<const double> features_col_major, std::span<const double> targets,
                                    double* mse = nullptr) const;

  const FeatureEncoder& encoder() const { return encoder_; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t parameter_count() const { return params_.size(); }

 private:
  std::vector<double> encode_batch(std::span<const StateId> states, std::span<const JointAction> actions) const;

  FeatureEncoder encoder_;
  std::vector<int> sizes_;  // input, hidden..., 1
  std::vector<double> params_;
  Optimizer optimizer_;
};

/// Two critics trained identically except for initialization, each with a
/// target copy that only moves on sync_targets().
class CriticEnsemble {
 public:
  CriticEnsemble(std::unique_ptr<Critic> first, std::unique_ptr<Critic> second, int sync_period = 200);
  CriticEnsemble(const CriticEnsemble& other);
  CriticEnsemble& operator=(const CriticEnsemble& other);
  CriticEnsemble(CriticEnsemble&&) noexcept = default;
  CriticEnsemble& operator=(CriticEnsemble&&) noexcept = default;

  Critic& critic(int k) { return *critics_.at(static_cast<std::size_t>(k)); }
  const Critic& critic(int k) const { return *critics_.at(static_cast<std::size_t>(k)); }
  Critic& target(int k) { return *targets_.at(static_cast<std::size_t>(k)); }
  const Critic& target(int k) const { return *targets_.at(static_cast<std::size_t>(k)); }

  int sync_period() const { return sync_period_; }
  long update_count() const { return updates_; }
  void count_update() { ++updates_; }
  bool sync_due() const { return sync_period_ > 0 && updates_ > 0 && updates_ % sync_period_ == 0; }

  void sync_targets();
  nlohmann::json to_json() const;

 private:
  std::array<std::unique_ptr<Critic>, 2> critics_;
  std::array<std::unique_ptr<Critic>, 2> targets_;
  int sync_period_;
  long updates_ = 0;
};

/// Greedy joint action of the current policies at a state.
using GreedyFn = std::function<JointAction(StateId)>;

/// One TD step for both critics: y_k = r + (1 - done) * gamma * target_k(s', greedy(s')).
/// Returns the mean pre-update squared error across the two critics.
double td_update(CriticEnsemble& ensemble, std::span<const Transition> minibatch, const GreedyFn& greedy,
                 double gamma);

/// Copy critic parameters into the targets.
void sync_targets(CriticEnsemble& ensemble);

/// Fixed-capacity FIFO of transitions with uniform sampling with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  std::vector<Transition> sample(std::size_t count, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  /// i-th oldest transition.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // slot of the oldest element once full
};

}  // namespace mappg
