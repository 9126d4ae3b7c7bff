#include "mappg/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mappg/errors.hpp"

namespace mappg {

namespace {

constexpr double kRowSumTolerance = 1e-9;
constexpr double kTieTolerance = 1e-9;

std::size_t joint_count(const Game& game) {
  return joint_action_count(game.agent_count(), game.action_count());
}

}  // namespace

int Game::action_count() const {
  throw UnsupportedOperation(name() + " has a continuous action space");
}

ActionBounds Game::bounds(int) const {
  throw UnsupportedOperation(name() + " has a discrete action space");
}

void Game::validate(const JointAction& action) const {
  if (static_cast<int>(action.size()) != agent_count()) {
    throw InputError("joint action has " + std::to_string(action.size()) + " components, expected " +
                     std::to_string(agent_count()));
  }
  if (action.is_discrete() != is_discrete()) {
    throw InputError("joint action kind does not match the game's action space");
  }
  for (int a = 0; a < agent_count(); ++a) {
    if (is_discrete()) {
      const int u = action.index(static_cast<std::size_t>(a));
      if (u < 0 || u >= action_count()) {
        throw InputError("action index " + std::to_string(u) + " out of range for agent " +
                         std::to_string(a));
      }
    } else {
      const double u = action.value(static_cast<std::size_t>(a));
      if (!std::isfinite(u) || !bounds(a).contains(u)) {
        throw InputError("continuous action " + std::to_string(u) + " outside bounds for agent " +
                         std::to_string(a));
      }
    }
  }
}

void Game::validate_state(StateId state) const {
  if (state < 0 || state >= state_count()) {
    throw InputError("state " + std::to_string(state) + " out of range");
  }
}

// ---------------------------------------------------------------------------

MatrixGame::MatrixGame(int agents, int action_count, std::vector<double> payoff, double discount)
    : agents_(agents), action_count_(action_count), payoff_(std::move(payoff)), discount_(discount) {
  if (agents < 1 || action_count < 1) throw InputError("matrix game needs at least one agent and action");
  if (payoff_.size() != joint_action_count(agents, action_count)) {
    throw InputError("payoff tensor must have action_count^n entries");
  }
}

MatrixGame MatrixGame::penalty_game() {
  return MatrixGame(2, 3, {15, -12, -12, -12, 10, 10, -12, 10, 10});
}

MatrixGame MatrixGame::from_json(const nlohmann::json& doc) {
  try {
    return MatrixGame(doc.at("n").get<int>(), doc.at("actions").get<int>(),
                      doc.at("payoff").get<std::vector<double>>(), doc.value("gamma", 0.9));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed matrix game document: ") + e.what());
  }
}

nlohmann::json MatrixGame::to_json() const {
  return {{"n", agents_}, {"actions", action_count_}, {"payoff", payoff_}};
}

double MatrixGame::reward(StateId state, const JointAction& action) const {
  validate_state(state);
  validate(action);
  return payoff_[flat_index(action.indices(), action_count_)];
}

StepResult MatrixGame::step(StateId state, const JointAction& action, Rng&) const {
  return {reward(state, action), kAbsorbingState, true};
}

// ---------------------------------------------------------------------------

double QuadraticBump::operator()(std::span<const double> u) const {
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double z = (u[i] - center[i]) / width;
    sq += z * z;
  }
  return scale * -sq + offset;
}

DifferentialGame::DifferentialGame(std::array<QuadraticBump, 2> bumps, std::vector<ActionBounds> bounds,
                                   double discount)
    : bumps_(std::move(bumps)), bounds_(std::move(bounds)), discount_(discount) {
  if (bounds_.empty()) throw InputError("differential game needs at least one agent");
  for (const auto& b : bumps_) {
    if (b.center.size() != bounds_.size()) throw InputError("bump center dimension != agent count");
    if (!(b.width > 0.0)) throw InputError("bump width must be positive");
  }
  for (const auto& b : bounds_) {
    if (!(b.low < b.high)) throw InputError("empty action interval");
  }
}

DifferentialGame DifferentialGame::max_of_two_quadratics() {
  return DifferentialGame({QuadraticBump{{-5.0, -5.0}, 5.0, 0.8, 0.0}, QuadraticBump{{5.0, 5.0}, 1.0, 1.0, 5.0}},
                          {ActionBounds{-10.0, 10.0}, ActionBounds{-10.0, 10.0}});
}

ActionBounds DifferentialGame::bounds(int agent) const { return bounds_.at(static_cast<std::size_t>(agent)); }

double DifferentialGame::surface(std::span<const double> u) const {
  return std::max(bumps_[0](u), bumps_[1](u));
}

double DifferentialGame::reward(StateId state, const JointAction& action) const {
  validate_state(state);
  validate(action);
  return surface(action.values());
}

StepResult DifferentialGame::step(StateId state, const JointAction& action, Rng&) const {
  return {reward(state, action), kAbsorbingState, true};
}

// ---------------------------------------------------------------------------

TabularMDP::TabularMDP(int agents, int states, int action_count, double gamma, StateId initial_state,
                       int horizon, std::vector<std::vector<std::vector<double>>> transition,
                       std::vector<std::vector<double>> reward)
    : agents_(agents),
      states_(states),
      action_count_(action_count),
      gamma_(gamma),
      initial_state_(initial_state),
      horizon_(horizon),
      transition_(std::move(transition)),
      reward_(std::move(reward)) {
  if (agents < 1 || states < 1 || action_count < 1) throw InputError("empty MDP dimensions");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma must lie in [0, 1)");
  if (initial_state < 0 || initial_state >= states) throw InputError("initial_state out of range");
  if (horizon < 1) throw InputError("horizon must be positive");
  const std::size_t joint = joint_action_count(agents, action_count);
  if (transition_.size() != static_cast<std::size_t>(states) ||
      reward_.size() != static_cast<std::size_t>(states)) {
    throw InputError("transition/reward tables need one entry per state");
  }
  for (int s = 0; s < states; ++s) {
    const auto& rows = transition_[static_cast<std::size_t>(s)];
    if (rows.size() != joint || reward_[static_cast<std::size_t>(s)].size() != joint) {
      throw InputError("transition/reward rows need one entry per joint action");
    }
    for (const auto& row : rows) {
      if (row.size() != static_cast<std::size_t>(states)) throw InputError("transition row has wrong length");
      double sum = 0.0;
      for (double p : row) {
        if (p < 0.0) throw InputError("negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) throw InputError("transition row does not sum to 1");
    }
  }
}

TabularMDP TabularMDP::from_json(const nlohmann::json& doc) {
  try {
    return TabularMDP(doc.at("n").get<int>(), doc.at("states").get<int>(), doc.at("actions").get<int>(),
                      doc.at("gamma").get<double>(), doc.at("initial_state").get<int>(),
                      doc.at("horizon").get<int>(),
                      doc.at("transition").get<std::vector<std::vector<std::vector<double>>>>(),
                      doc.at("reward").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed tabular MDP document: ") + e.what());
  }
}

nlohmann::json TabularMDP::to_json() const {
  return {{"n", agents_},         {"states", states_},   {"actions", action_count_},
          {"gamma", gamma_},      {"initial_state", initial_state_},
          {"horizon", horizon_},  {"transition", transition_},
          {"reward", reward_}};
}

double TabularMDP::reward(StateId state, const JointAction& action) const {
  validate_state(state);
  validate(action);
  return reward_at(state, flat_index(action.indices(), action_count_));
}

double TabularMDP::reward_at(StateId state, std::size_t joint_index) const {
  return reward_.at(static_cast<std::size_t>(state)).at(joint_index);
}

const std::vector<double>& TabularMDP::transition_row(StateId state, std::size_t joint_index) const {
  return transition_.at(static_cast<std::size_t>(state)).at(joint_index);
}

StepResult TabularMDP::step(StateId state, const JointAction& action, Rng& rng) const {
  const double r = reward(state, action);
  const auto& row = transition_row(state, flat_index(action.indices(), action_count_));
  return {r, sample_categorical(rng, row), false};
}

// ---------------------------------------------------------------------------

QTable value_iteration(const TabularMDP& mdp, double tolerance, int max_iterations) {
  const auto states = static_cast<std::size_t>(mdp.state_count());
  const std::size_t joint = joint_action_count(mdp.agent_count(), mdp.action_count());
  QTable out;
  out.values.assign(states, std::vector<double>(joint, 0.0));
  std::vector<double> v(states, 0.0);
  for (int it = 0; it < max_iterations; ++it) {
    double residual = 0.0;
    std::vector<std::vector<double>> next(states, std::vector<double>(joint));
    for (std::size_t s = 0; s < states; ++s) {
      for (std::size_t u = 0; u < joint; ++u) {
        const auto& row = mdp.transition_row(static_cast<StateId>(s), u);
        double expected = 0.0;
        for (std::size_t sp = 0; sp < states; ++sp) expected += row[sp] * v[sp];
        next[s][u] = mdp.reward_at(static_cast<StateId>(s), u) + mdp.discount() * expected;
        residual = std::max(residual, std::abs(next[s][u] - out.values[s][u]));
      }
    }
    out.values = std::move(next);
    for (std::size_t s = 0; s < states; ++s) {
      v[s] = *std::max_element(out.values[s].begin(), out.values[s].end());
    }
    out.iterations = it + 1;
    out.residual = residual;
    if (residual < tolerance) break;
  }
  return out;
}

std::vector<JointAction> enumerate_joint_actions(const Game& game) {
  if (!game.is_discrete()) {
    throw UnsupportedOperation("cannot enumerate joint actions of a continuous game");
  }
  const std::size_t count = joint_count(game);
  std::vector<JointAction> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(JointAction::discrete(unflatten(i, game.agent_count(), game.action_count())));
  }
  return out;
}

std::vector<double> joint_values(const Game& game, StateId state) {
  if (!game.is_discrete()) throw UnsupportedOperation("joint value table needs a discrete game");
  game.validate_state(state);
  if (const auto* mdp = dynamic_cast<const TabularMDP*>(&game)) {
    return value_iteration(*mdp).values[static_cast<std::size_t>(state)];
  }
  std::vector<double> out;
  for (const auto& u : enumerate_joint_actions(game)) out.push_back(game.reward(state, u));
  return out;
}

OptimalAction optimal_joint_action(const Game& game, StateId state) {
  const auto values = joint_values(game, state);
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != best && values[best] - values[i] <= kTieTolerance) {
      throw AssumptionViolation("joint-action values have no unique maximizer");
    }
  }
  return {JointAction::discrete(unflatten(best, game.agent_count(), game.action_count())), values[best]};
}

std::unique_ptr<Game> game_from_json(const nlohmann::json& doc) {
  if (doc.contains("transition")) return std::make_unique<TabularMDP>(TabularMDP::from_json(doc));
  if (doc.contains("payoff")) return std::make_unique<MatrixGame>(MatrixGame::from_json(doc));
  throw InputError("game document has neither 'payoff' nor 'transition'");
}

}  // namespace mappg
