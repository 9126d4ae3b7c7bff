#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mappg/joint_action.hpp"
#include "mappg/random.hpp"

namespace mappg {

/// Sentinel reported as the successor of a terminal step in one-step games.
inline constexpr StateId kAbsorbingState = -1;

struct StepResult {
  double reward = 0.0;
  StateId next_state = kAbsorbingState;
  bool done = true;
};

struct ActionBounds {
  double low = -10.0;
  double high = 10.0;
  double width() const { return high - low; }
  bool contains(double u) const { return u >= low && u <= high; }
};

/// Fully observable cooperative game: every agent observes the state.
class Game {
 public:
  virtual ~Game() = default;

  virtual std::string name() const = 0;
  virtual int agent_count() const = 0;
  virtual bool is_discrete() const = 0;
  virtual int state_count() const = 0;
  virtual StateId initial_state() const { return 0; }
  /// Steps per episode; one-step games return 1.
  virtual int horizon() const { return 1; }
  virtual double discount() const = 0;

  /// Per-agent action count; discrete games only.
  virtual int action_count() const;
  /// Per-agent action interval; continuous games only.
  virtual ActionBounds bounds(int agent) const;

  virtual double reward(StateId state, const JointAction& action) const = 0;
  virtual StepResult step(StateId state, const JointAction& action, Rng& rng) const = 0;

  /// Throws InputError when the joint action does not belong to this game.
  void validate(const JointAction& action) const;
  void validate_state(StateId state) const;
};

/// Single-state, one-step game with a payoff tensor over joint actions.
class MatrixGame final : public Game {
 public:
  /// payoff is flattened in lexicographic joint-action order (agent 0 most significant).
  MatrixGame(int agents, int action_count, std::vector<double> payoff, double discount = 0.9);

  /// The 3x3 two-agent game whose optimum (A,A)=15 is surrounded by -12 penalties.
  static MatrixGame penalty_game();
  static MatrixGame from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  std::string name() const override { return "matrix"; }
  int agent_count() const override { return agents_; }
  bool is_discrete() const override { return true; }
  int state_count() const override { return 1; }
  double discount() const override { return discount_; }
  int action_count() const override { return action_count_; }

  double reward(StateId state, const JointAction& action) const override;
  StepResult step(StateId state, const JointAction& action, Rng& rng) const override;

  const std::vector<double>& payoff() const { return payoff_; }

 private:
  int agents_;
  int action_count_;
  std::vector<double> payoff_;
  double discount_;
};

/// Negative scaled quadratic bowl: scale * -(sum ((u_i - c_i)/width)^2) + offset.
struct QuadraticBump {
  std::vector<double> center;
  double width = 1.0;
  double scale = 1.0;
  double offset = 0.0;

  double operator()(std::span<const double> u) const;
};

/// Two-agent continuous game whose reward is the max of two quadratic bumps.
class DifferentialGame final : public Game {
 public:
  DifferentialGame(std::array<QuadraticBump, 2> bumps, std::vector<ActionBounds> bounds,
                   double discount = 0.9);

  /// Broad bump worth 0 at (-5,-5), narrow bump worth 5 at (5,5), actions in [-10,10].
  static DifferentialGame max_of_two_quadratics();

  std::string name() const override { return "mtq"; }
  int agent_count() const override { return static_cast<int>(bounds_.size()); }
  bool is_discrete() const override { return false; }
  int state_count() const override { return 1; }
  double discount() const override { return discount_; }
  ActionBounds bounds(int agent) const override;

  double reward(StateId state, const JointAction& action) const override;
  StepResult step(StateId state, const JointAction& action, Rng& rng) const override;

  /// Surface value without validation; used by Monte Carlo marginals.
  double surface(std::span<const double> u) const;
  const std::array<QuadraticBump, 2>& bumps() const { return bumps_; }

 private:
  std::array<QuadraticBump, 2> bumps_;
  std::vector<ActionBounds> bounds_;
  double discount_;
};

/// Multi-state game with tabular transitions and rewards over joint actions.
class TabularMDP final : public Game {
 public:
  /// transition[s][u][s'] and reward[s][u] with u the flat joint-action index.
  TabularMDP(int agents, int states, int action_count, double gamma, StateId initial_state,
             int horizon, std::vector<std::vector<std::vector<double>>> transition,
             std::vector<std::vector<double>> reward);

  static TabularMDP from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  std::string name() const override { return "tabular_mdp"; }
  int agent_count() const override { return agents_; }
  bool is_discrete() const override { return true; }
  int state_count() const override { return states_; }
  StateId initial_state() const override { return initial_state_; }
  int horizon() const override { return horizon_; }
  double discount() const override { return gamma_; }
  int action_count() const override { return action_count_; }

  double reward(StateId state, const JointAction& action) const override;
  StepResult step(StateId state, const JointAction& action, Rng& rng) const override;

  double reward_at(StateId state, std::size_t joint_index) const;
  const std::vector<double>& transition_row(StateId state, std::size_t joint_index) const;

 private:
  int agents_;
  int states_;
  int action_count_;
  double gamma_;
  StateId initial_state_;
  int horizon_;
  std::vector<std::vector<std::vector<double>>> transition_;
  std::vector<std::vector<double>> reward_;
};

/// Q*(s, u) for every state and flat joint action.
struct QTable {
  std::vector<std::vector<double>> values;
  double residual = 0.0;
  int iterations = 0;
};

/// Optimal joint-action values by value iteration until the sup-norm Bellman
/// residual is below tolerance.
QTable value_iteration(const TabularMDP& mdp, double tolerance = 1e-12, int max_iterations = 100000);

/// Every discrete joint action in lexicographic order.
std::vector<JointAction> enumerate_joint_actions(const Game& game);

struct OptimalAction {
  JointAction action;
  double value = 0.0;
};

/// Unique maximizer of Q*(state, .) by full enumeration.
/// Throws AssumptionViolation when the maximum is attained twice.
OptimalAction optimal_joint_action(const Game& game, StateId state);

/// Joint-action values of one state, flattened lexicographically.
std::vector<double> joint_values(const Game& game, StateId state);

/// Parses either schema: {"payoff": ...} gives a MatrixGame, {"transition": ...} a TabularMDP.
std::unique_ptr<Game> game_from_json(const nlohmann::json& doc);

}  // namespace mappg
