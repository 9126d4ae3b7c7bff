#include "mappg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "mappg/errors.hpp"

namespace mappg {

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "mappg") return Algorithm::kMappg;
  if (name == "vanilla_mapg") return Algorithm::kVanillaMapg;
  if (name == "coma") return Algorithm::kComa;
  if (name == "mappg_no_polarization") return Algorithm::kMappgNoPolarization;
  if (name == "mappg_no_pessimistic_bound") return Algorithm::kMappgNoPessimisticBound;
  throw ConfigError("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kMappg: return "mappg";
    case Algorithm::kVanillaMapg: return "vanilla_mapg";
    case Algorithm::kComa: return "coma";
    case Algorithm::kMappgNoPolarization: return "mappg_no_polarization";
    case Algorithm::kMappgNoPessimisticBound: return "mappg_no_pessimistic_bound";
  }
  return "?";
}

// ---------------------------------------------------------------------------

ActorSet ActorSet::softmax(int agents, int states, int actions, OptimizerConfig optimizer) {
  if (agents < 1) throw InputError("need at least one agent");
  ActorSet set;
  set.discrete_ = true;
  for (int a = 0; a < agents; ++a) {
    set.softmax_.emplace_back(states, actions);
    set.optimizers_.emplace_back(optimizer, set.softmax_.back().parameters().size());
  }
  return set;
}

ActorSet ActorSet::gaussian(std::vector<ActionBounds> bounds, OptimizerConfig optimizer) {
  if (bounds.empty()) throw InputError("need at least one agent");
  ActorSet set;
  set.discrete_ = false;
  for (const auto& b : bounds) {
    set.gaussian_.emplace_back(b);
    set.optimizers_.emplace_back(optimizer, set.gaussian_.back().parameters().size());
  }
  return set;
}

ActorSet ActorSet::for_game(const Game& game, OptimizerConfig optimizer) {
  if (game.is_discrete()) return softmax(game.agent_count(), game.state_count(), game.action_count(), optimizer);
  std::vector<ActionBounds> bounds;
  for (int a = 0; a < game.agent_count(); ++a) bounds.push_back(game.bounds(a));
  return gaussian(std::move(bounds), optimizer);
}

int ActorSet::agent_count() const {
  return static_cast<int>(discrete_ ? softmax_.size() : gaussian_.size());
}

JointAction ActorSet::greedy(StateId state) const {
  return discrete_ ? greedy_joint(softmax_, state) : greedy_joint(gaussian_, state);
}

JointAction ActorSet::sample(StateId state, const ExplorationSchedule& schedule, long t, Rng& rng) const {
  if (discrete_) {
    std::vector<int> u;
    for (const auto& p : softmax_) u.push_back(mappg::sample(p, state, schedule, t, rng));
    return JointAction::discrete(std::move(u));
  }
  std::vector<double> u;
  for (const auto& p : gaussian_) u.push_back(mappg::sample(p, state, schedule, t, rng));
  return JointAction::continuous(std::move(u));
}

double ActorSet::prob(int agent, StateId state, const JointAction& u) const {
  const auto a = static_cast<std::size_t>(agent);
  if (discrete_) return softmax_.at(a).prob(state, u.index(a));
  return gaussian_.at(a).prob(state, u.value(a));
}

std::vector<double> ActorSet::grad_log_prob(int agent, StateId state, const JointAction& u) const {
  const auto a = static_cast<std::size_t>(agent);
  if (discrete_) return softmax_.at(a).grad_log_prob(state, u.index(a));
  return gaussian_.at(a).grad_log_prob(state, u.value(a));
}

std::vector<double> ActorSet::ascend(std::vector<std::vector<double>> grads, double max_norm) {
  const std::size_t n = static_cast<std::size_t>(agent_count());
  if (grads.size() != n) throw InputError("one gradient per agent expected");
  std::vector<double> norms(n);
  for (std::size_t a = 0; a < n; ++a) norms[a] = clip_by_norm(grads[a], 0.0);
  const double total = clip_by_norm(norms, 0.0);  // norm of the per-agent norms = joint norm
  const double scale = (max_norm > 0.0 && total > max_norm) ? max_norm / total : 1.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (std::all_of(grads[a].begin(), grads[a].end(), [](double g) { return g == 0.0; })) continue;
    if (scale != 1.0) {
      for (double& g : grads[a]) g *= scale;
    }
    if (discrete_) {
      optimizers_[a].ascend(softmax_[a].parameters(), grads[a]);
    } else {
      optimizers_[a].ascend(gaussian_[a].parameters(), grads[a]);
      gaussian_[a].project();
    }
  }
  return norms;
}

nlohmann::json ActorSet::to_json() const {
  nlohmann::json agents = nlohmann::json::array();
  if (discrete_) {
    for (const auto& p : softmax_) agents.push_back(p.to_json());
  } else {
    for (const auto& p : gaussian_) agents.push_back(p.to_json());
  }
  return agents;
}

WeightedBatch expectation_batch(const ActorSet& actors, const Game& game, StateId state) {
  if (!actors.is_discrete() || !game.is_discrete()) throw UnsupportedOperation("expectation needs a discrete game");
  if (game.horizon() != 1) throw UnsupportedOperation("expectation batches are for one-step games");
  WeightedBatch batch;
  for (auto& u : enumerate_joint_actions(game)) {
    batch.weights.push_back(joint_prob(actors.softmax_policies(), state, u));
    const double r = game.reward(state, u);
    batch.transitions.push_back({state, std::move(u), r, kAbsorbingState, true});
  }
  return batch;
}

// ---------------------------------------------------------------------------

namespace {

struct BatchColumns {
  std::vector<StateId> states;
  std::vector<JointAction> actions;
  std::vector<JointAction> current;  // greedy joint action at each sample's state
};

BatchColumns columns(const ActorSet& actors, std::span<const Transition> batch) {
  BatchColumns c;
  for (const auto& t : batch) {
    c.states.push_back(t.state);
    c.actions.push_back(t.action);
    c.current.push_back(actors.greedy(t.state));
  }
  return c;
}

/// Critic value at each sample's greedy joint action, evaluated once per distinct state.
std::vector<double> current_values(const Critic& critic, const BatchColumns& c) {
  std::map<StateId, double> cache;
  std::vector<double> out;
  out.reserve(c.states.size());
  for (std::size_t i = 0; i < c.states.size(); ++i) {
    auto it = cache.find(c.states[i]);
    if (it == cache.end()) it = cache.emplace(c.states[i], critic.predict(c.states[i], c.current[i])).first;
    out.push_back(it->second);
  }
  return out;
}

std::vector<double> taken_probs(const ActorSet& actors, const Transition& t) {
  if (!actors.is_discrete()) return {};  // densities are not probabilities; the P rule does not apply
  std::vector<double> p;
  for (int a = 0; a < actors.agent_count(); ++a) p.push_back(actors.prob(a, t.state, t.action));
  return p;
}

/// Fills every agent's coefficient for sample i with c, counting zeros.
void put(Coefficients& out, double c, int agents) {
  out.values.emplace_back(static_cast<std::size_t>(agents), c);
  if (c == 0.0) out.zeroed += agents;
}

Coefficients polarized(const ActorSet& actors, const CriticEnsemble& critics, std::span<const Transition> batch,
                       const PolarizationParams& params, PolarizationStats* stats, bool pessimistic) {
  const auto c = columns(actors, batch);
  const auto t1 = critics.target(0).predict_batch(c.states, c.actions);
  const auto t1_curr = current_values(critics.target(0), c);
  std::vector<double> t2, t2_curr;
  if (pessimistic) {
    t2 = critics.target(1).predict_batch(c.states, c.actions);
    t2_curr = current_values(critics.target(1), c);
  }
  PolarizationParams effective = params;
  if (!pessimistic) effective.cap_L = std::numeric_limits<double>::infinity();
  Coefficients out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double gap = pessimistic ? std::min(t1[i], t2[i]) - std::max(t1_curr[i], t2_curr[i]) : t1[i] - t1_curr[i];
    const double q_hat = saturating_exp(params.alpha * gap, stats);
    put(out, clipped_coefficient(q_hat, taken_probs(actors, batch[i]), effective), actors.agent_count());
  }
  return out;
}

}  // namespace

Coefficients coefficients_mappg(const ActorSet& actors, const CriticEnsemble& critics,
                                std::span<const Transition> batch, const PolarizationParams& params,
                                PolarizationStats* stats) {
  return polarized(actors, critics, batch, params, stats, true);
}

Coefficients coefficients_no_pessimistic_bound(const ActorSet& actors, const CriticEnsemble& critics,
                                               std::span<const Transition> batch, const PolarizationParams& params,
                                               PolarizationStats* stats) {
  return polarized(actors, critics, batch, params, stats, false);
}

Coefficients coefficients_no_polarization(const ActorSet& actors, const CriticEnsemble& critics,
                                          std::span<const Transition> batch, const PolarizationParams& params) {
  const auto c = columns(actors, batch);
  const auto t1 = critics.target(0).predict_batch(c.states, c.actions);
  const auto t2 = critics.target(1).predict_batch(c.states, c.actions);
  const auto t1_curr = current_values(critics.target(0), c);
  const auto t2_curr = current_values(critics.target(1), c);
  Coefficients out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double gap = std::min(t1[i], t2[i]) - std::max(t1_curr[i], t2_curr[i]);
    const auto probs = taken_probs(actors, batch[i]);
    const bool all_sure =
        !probs.empty() && std::all_of(probs.begin(), probs.end(), [&](double p) { return p > params.prob_clip_P; });
    const double coeff = (gap < 0.0 || all_sure) ? 0.0 : std::min(gap, params.cap_L) / params.beta;
    put(out, coeff, actors.agent_count());
  }
  return out;
}

Coefficients coefficients_vanilla(const ActorSet& actors, const CriticEnsemble& critics,
                                  std::span<const Transition> batch) {
  const auto c = columns(actors, batch);
  const auto q = critics.critic(0).predict_batch(c.states, c.actions);
  Coefficients out;
  for (double v : q) out.values.emplace_back(static_cast<std::size_t>(actors.agent_count()), v);
  return out;
}

Coefficients coefficients_coma(const ActorSet& actors, const CriticEnsemble& critics,
                               std::span<const Transition> batch) {
  if (!actors.is_discrete()) throw UnsupportedOperation("the counterfactual baseline needs discrete actions");
  const auto& policies = actors.softmax_policies();
  const Critic& q = critics.critic(0);
  Coefficients out;
  for (const auto& t : batch) {
    const double q_taken = q.predict(t.state, t.action);
    std::vector<double> row;
    for (std::size_t a = 0; a < policies.size(); ++a) {
      const auto pi = policies[a].probs(t.state);
      double baseline = 0.0;
      for (std::size_t k = 0; k < pi.size(); ++k) {
        baseline += pi[k] * q.predict(t.state, t.action.with_index(a, static_cast<int>(k)));
      }
      row.push_back(q_taken - baseline);
    }
    out.values.push_back(std::move(row));
  }
  return out;
}

ActorUpdate apply_coefficients(ActorSet& actors, std::span<const Transition> batch, const Coefficients& coeffs,
                               std::span<const double> weights, double max_grad_norm) {
  if (batch.empty()) throw InputError("empty minibatch");
  if (coeffs.values.size() != batch.size()) throw InputError("one coefficient row per sample expected");
  if (!weights.empty() && weights.size() != batch.size()) throw InputError("one weight per sample expected");
  const int n = actors.agent_count();
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) weight_sum += weights.empty() ? 1.0 : weights[i];
  if (!(weight_sum > 0.0)) throw InputError("weights must have positive mass");

  std::vector<std::vector<double>> grads(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = (weights.empty() ? 1.0 : weights[i]) / weight_sum;
    for (int a = 0; a < n; ++a) {
      const double c = coeffs.values[i].at(static_cast<std::size_t>(a));
      auto& g = grads[static_cast<std::size_t>(a)];
      if (c == 0.0 || w == 0.0) {
        if (g.empty()) g.assign(actors.grad_log_prob(a, batch[i].state, batch[i].action).size(), 0.0);
        continue;
      }
      const auto gl = actors.grad_log_prob(a, batch[i].state, batch[i].action);
      if (g.empty()) g.assign(gl.size(), 0.0);
      for (std::size_t j = 0; j < gl.size(); ++j) g[j] += w * c * gl[j];
    }
  }
  ActorUpdate update;
  update.grad_norms = actors.ascend(std::move(grads), max_grad_norm);
  update.clip_fraction =
      static_cast<double>(coeffs.zeroed) / static_cast<double>(batch.size() * static_cast<std::size_t>(n));
  return update;
}

ActorUpdate update_actors_mappg(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                                const PolarizationParams& params, double max_grad_norm, PolarizationStats* stats) {
  const auto c = coefficients_mappg(actors, critics, batch.transitions, params, stats);
  return apply_coefficients(actors, batch.transitions, c, batch.weights, max_grad_norm);
}

ActorUpdate update_actors_no_pessimistic_bound(ActorSet& actors, const CriticEnsemble& critics,
                                               const WeightedBatch& batch, const PolarizationParams& params,
                                               double max_grad_norm, PolarizationStats* stats) {
  const auto c = coefficients_no_pessimistic_bound(actors, critics, batch.transitions, params, stats);
  return apply_coefficients(actors, batch.transitions, c, batch.weights, max_grad_norm);
}

ActorUpdate update_actors_no_polarization(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                                          const PolarizationParams& params, double max_grad_norm) {
  const auto c = coefficients_no_polarization(actors, critics, batch.transitions, params);
  return apply_coefficients(actors, batch.transitions, c, batch.weights, max_grad_norm);
}

ActorUpdate update_actors_vanilla(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                                  double max_grad_norm) {
  const auto c = coefficients_vanilla(actors, critics, batch.transitions);
  return apply_coefficients(actors, batch.transitions, c, batch.weights, max_grad_norm);
}

ActorUpdate update_actors_coma(ActorSet& actors, const CriticEnsemble& critics, const WeightedBatch& batch,
                               double max_grad_norm) {
  const auto c = coefficients_coma(actors, critics, batch.transitions);
  return apply_coefficients(actors, batch.transitions, c, batch.weights, max_grad_norm);
}

// ---------------------------------------------------------------------------

TrainConfig TrainConfig::defaults_for(const std::string& game_name, Algorithm algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  if (game_name == "mtq") {
    c.polarization.alpha = 10.0;
    c.polarization.cap_L = 1e30;
    c.actor_optimizer = {OptimizerKind::kAdam, 1e-2};
    c.critic_optimizer = {OptimizerKind::kAdam, 1e-3};
    c.critic = CriticKind::kFeedforward;
    c.batch_size = 256;
    c.total_steps = 20000;
    c.exploration = ExplorationSchedule::uniform_then_noise(10000, 1.0);
    c.max_grad_norm = 10.0;
  } else if (game_name != "matrix" && game_name != "tabular_mdp") {
    throw ConfigError("no defaults for game '" + game_name + "'");
  }
  return c;
}

namespace {

CriticKind critic_from_string(const std::string& s) {
  if (s == "auto") return CriticKind::kAuto;
  if (s == "tabular") return CriticKind::kTabular;
  if (s == "feedforward") return CriticKind::kFeedforward;
  throw ConfigError("unknown critic kind '" + s + "'");
}

std::string to_string(CriticKind k) {
  switch (k) {
    case CriticKind::kAuto: return "auto";
    case CriticKind::kTabular: return "tabular";
    case CriticKind::kFeedforward: return "feedforward";
  }
  return "?";
}

template <typename T>
T get(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

}  // namespace

void TrainConfig::merge_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (key == "algorithm") algorithm = algorithm_from_string(get<std::string>(v, key));
    else if (key == "alpha") polarization.alpha = get<double>(v, key);
    else if (key == "beta") polarization.beta = get<double>(v, key);
    else if (key == "cap_L") polarization.cap_L = get<double>(v, key);
    else if (key == "prob_clip_P") polarization.prob_clip_P = get<double>(v, key);
    else if (key == "actor_optimizer") actor_optimizer.kind = optimizer_from_string(get<std::string>(v, key));
    else if (key == "actor_lr") actor_optimizer.learning_rate = get<double>(v, key);
    else if (key == "critic_optimizer") critic_optimizer.kind = optimizer_from_string(get<std::string>(v, key));
    else if (key == "critic_lr") critic_optimizer.learning_rate = get<double>(v, key);
    else if (key == "critic") critic = critic_from_string(get<std::string>(v, key));
    else if (key == "hidden") hidden = get<std::vector<int>>(v, key);
    else if (key == "batch_size") batch_size = get<int>(v, key);
    else if (key == "buffer_capacity") buffer_capacity = get<std::size_t>(v, key);
    else if (key == "sync_period") sync_period = get<int>(v, key);
    else if (key == "total_steps") total_steps = get<long>(v, key);
    else if (key == "update_period") update_period = get<int>(v, key);
    else if (key == "eval_interval") eval_interval = get<int>(v, key);
    else if (key == "max_grad_norm") max_grad_norm = get<double>(v, key);
    else if (key == "actor_mode") {
      const auto s = get<std::string>(v, key);
      if (s == "sampled") actor_mode = ActorMode::kSampled;
      else if (s == "exact") actor_mode = ActorMode::kExactExpectation;
      else throw ConfigError("actor_mode must be 'sampled' or 'exact'");
    } else if (key == "lemma1_mode") lemma1_mode = get<bool>(v, key);
    else if (key == "seed") seed = get<std::uint64_t>(v, key);
    else if (key == "exploration") {
      if (!v.is_object()) throw ConfigError("exploration must be an object");
      for (const auto& [ek, ev] : v.items()) {
        if (ek == "kind") {
          const auto s = get<std::string>(ev, ek);
          if (s == "epsilon_greedy") exploration.kind = ExplorationKind::kEpsilonGreedy;
          else if (s == "uniform_then_noise") exploration.kind = ExplorationKind::kUniformThenNoise;
          else throw ConfigError("unknown exploration kind '" + s + "'");
        } else if (ek == "epsilon_start") exploration.epsilon_start = get<double>(ev, ek);
        else if (ek == "epsilon_end") exploration.epsilon_end = get<double>(ev, ek);
        else if (ek == "anneal_steps") exploration.anneal_steps = get<long>(ev, ek);
        else if (ek == "noise_std") exploration.noise_std = get<double>(ev, ek);
        else if (ek == "uniform_steps") exploration.uniform_steps = get<long>(ev, ek);
        else throw ConfigError("unknown exploration field '" + ek + "'");
      }
    } else {
      throw ConfigError("unknown config field '" + key + "'");
    }
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"algorithm", to_string(algorithm)},
      {"alpha", polarization.alpha},
      {"beta", polarization.beta},
      {"cap_L", polarization.cap_L},
      {"prob_clip_P", polarization.prob_clip_P},
      {"actor_optimizer", to_string(actor_optimizer.kind)},
      {"actor_lr", actor_optimizer.learning_rate},
      {"critic_optimizer", to_string(critic_optimizer.kind)},
      {"critic_lr", critic_optimizer.learning_rate},
      {"critic", to_string(critic)},
      {"hidden", hidden},
      {"batch_size", batch_size},
      {"buffer_capacity", buffer_capacity},
      {"sync_period", sync_period},
      {"total_steps", total_steps},
      {"update_period", update_period},
      {"eval_interval", eval_interval},
      {"max_grad_norm", max_grad_norm},
      {"actor_mode", actor_mode == ActorMode::kSampled ? "sampled" : "exact"},
      {"lemma1_mode", lemma1_mode},
      {"seed", seed},
      {"exploration",
       {{"kind", exploration.kind == ExplorationKind::kEpsilonGreedy ? "epsilon_greedy" : "uniform_then_noise"},
        {"epsilon_start", exploration.epsilon_start},
        {"epsilon_end", exploration.epsilon_end},
        {"anneal_steps", exploration.anneal_steps},
        {"noise_std", exploration.noise_std},
        {"uniform_steps", exploration.uniform_steps}}},
  };
}

void TrainConfig::validate(const Game& game) const {
  polarization.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be positive");
  if (sync_period < 1) throw ConfigError("sync_period must be positive");
  if (total_steps < 0) throw ConfigError("total_steps must be nonnegative");
  if (update_period < 1) throw ConfigError("update_period must be positive");
  if (eval_interval < 1) throw ConfigError("eval_interval must be positive");
  if (max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be nonnegative");
  if (!(actor_optimizer.learning_rate > 0.0) || !(critic_optimizer.learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (exploration.epsilon_start < 0.0 || exploration.epsilon_start > 1.0 || exploration.epsilon_end < 0.0 ||
      exploration.epsilon_end > 1.0) {
    throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (!game.is_discrete()) {
    if (critic == CriticKind::kTabular) throw ConfigError("a tabular critic needs a discrete game");
    if (algorithm == Algorithm::kComa) throw ConfigError("coma needs a discrete game");
    if (actor_mode == ActorMode::kExactExpectation) throw ConfigError("exact actor mode needs a discrete game");
  }
  if (actor_mode == ActorMode::kExactExpectation && (game.horizon() != 1 || game.state_count() != 1)) {
    throw ConfigError("exact actor mode needs a single-state one-step game");
  }
  if (lemma1_mode) {
    const double g = game.discount();
    const double bound = (1.0 - g) * (1.0 - g) * (1.0 - g) / 8.0;
    if (actor_optimizer.kind != OptimizerKind::kSgd) throw ConfigError("lemma1 mode needs plain gradient ascent");
    if (actor_optimizer.learning_rate > bound) {
      throw ConfigError("actor learning rate exceeds (1 - gamma)^3 / 8");
    }
  }
}

// ---------------------------------------------------------------------------

std::string RunLog::csv_header(int agents) {
  std::string h = "step,return";
  for (int a = 0; a < agents; ++a) h += ",greedy_action_" + std::to_string(a);
  for (int a = 0; a < agents; ++a) h += ",greedy_prob_" + std::to_string(a);
  h += ",q_greedy,q_target_greedy,clip_fraction,saturation_count";
  return h;
}

void RunLog::write_csv(std::ostream& os, int agents) const {
  os << csv_header(agents) << '\n';
  std::ostringstream line;
  line << std::fixed << std::setprecision(6);
  for (const auto& r : records) {
    line.str("");
    line << r.step << ',' << r.episode_return;
    for (int a = 0; a < agents; ++a) {
      const auto i = static_cast<std::size_t>(a);
      if (r.greedy.is_discrete()) {
        line << ',' << r.greedy.index(i);
      } else {
        line << ',' << r.greedy.value(i);
      }
    }
    for (double p : r.greedy_prob) line << ',' << p;
    line << ',' << r.q_greedy << ',' << r.q_target_greedy << ',' << r.clip_fraction << ',' << r.saturation_count;
    os << line.str() << '\n';
  }
}

double greedy_return(const ActorSet& actors, const Game& game) {
  Rng rng(0);  // fixed so evaluation never perturbs training randomness
  StateId s = game.initial_state();
  double total = 0.0;
  for (int h = 0; h < game.horizon(); ++h) {
    const auto res = game.step(s, actors.greedy(s), rng);
    total += res.reward;
    if (res.done) break;
    s = res.next_state;
  }
  return total;
}

namespace {

std::unique_ptr<Critic> make_critic(const TrainConfig& config, const Game& game, std::uint64_t seed) {
  const bool tabular =
      config.critic == CriticKind::kTabular || (config.critic == CriticKind::kAuto && game.is_discrete());
  if (tabular) {
    return std::make_unique<TabularCritic>(game.state_count(), game.agent_count(), game.action_count(),
                                           config.critic_optimizer.learning_rate);
  }
  return std::make_unique<FeedforwardCritic>(FeatureEncoder(game), config.hidden, config.critic_optimizer, seed);
}

}  // namespace

RunResult run(const TrainConfig& config, const Game& game) {
  config.validate(game);
  Rng rng(config.seed);
  const std::uint64_t seed_1 = rng();
  const std::uint64_t seed_2 = rng();
  RunResult result{RunLog{}, ActorSet::for_game(game, config.actor_optimizer),
                   CriticEnsemble(make_critic(config, game, seed_1), make_critic(config, game, seed_2),
                                  config.sync_period)};
  ActorSet& actors = result.actors;
  CriticEnsemble& critics = result.critics;
  ReplayBuffer buffer(config.buffer_capacity);
  PolarizationStats stats;
  const GreedyFn greedy = [&actors](StateId s) { return actors.greedy(s); };
  const int n = game.agent_count();

  StateId state = game.initial_state();
  int episode_step = 0;
  long zeroed = 0;
  long coefficient_count = 0;

  for (long t = 0; t < config.total_steps; ++t) {
    auto u = actors.sample(state, config.exploration, t, rng);
    const auto res = game.step(state, u, rng);
    buffer.add({state, std::move(u), res.reward, res.next_state, res.done});
    if (res.done || ++episode_step >= game.horizon()) {
      state = game.initial_state();
      episode_step = 0;
    } else {
      state = res.next_state;
    }

    if (buffer.size() >= static_cast<std::size_t>(config.batch_size) && t % config.update_period == 0) {
      const auto minibatch = buffer.sample(static_cast<std::size_t>(config.batch_size), rng);
      td_update(critics, minibatch, greedy, game.discount());

      WeightedBatch batch = config.actor_mode == ActorMode::kExactExpectation
                                ? expectation_batch(actors, game, game.initial_state())
                                : WeightedBatch{minibatch, {}};
      ActorUpdate update;
      switch (config.algorithm) {
        case Algorithm::kMappg:
          update = update_actors_mappg(actors, critics, batch, config.polarization, config.max_grad_norm, &stats);
          break;
        case Algorithm::kMappgNoPessimisticBound:
          update = update_actors_no_pessimistic_bound(actors, critics, batch, config.polarization,
                                                      config.max_grad_norm, &stats);
          break;
        case Algorithm::kMappgNoPolarization:
          update = update_actors_no_polarization(actors, critics, batch, config.polarization, config.max_grad_norm);
          break;
        case Algorithm::kVanillaMapg:
          update = update_actors_vanilla(actors, critics, batch, config.max_grad_norm);
          break;
        case Algorithm::kComa:
          update = update_actors_coma(actors, critics, batch, config.max_grad_norm);
          break;
      }
      const long entries = static_cast<long>(batch.transitions.size()) * n;
      zeroed += std::lround(update.clip_fraction * static_cast<double>(entries));
      coefficient_count += entries;
      if (critics.sync_due()) critics.sync_targets();
    }

    if ((t + 1) % config.eval_interval == 0) {
      RunRecord r;
      r.step = t + 1;
      r.episode_return = greedy_return(actors, game);
      const StateId s0 = game.initial_state();
      r.greedy = actors.greedy(s0);
      for (int a = 0; a < n; ++a) r.greedy_prob.push_back(actors.prob(a, s0, r.greedy));
      r.q_greedy = critics.critic(0).predict(s0, r.greedy);
      r.q_target_greedy = critics.target(0).predict(s0, r.greedy);
      r.clip_fraction = coefficient_count > 0 ? static_cast<double>(zeroed) / static_cast<double>(coefficient_count) : 0.0;
      r.saturation_count = stats.saturations;
      result.log.records.push_back(std::move(r));
      zeroed = 0;
      coefficient_count = 0;
    }
  }
  return result;
}

}  // namespace mappg
