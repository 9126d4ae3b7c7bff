#include "mappg/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mappg/errors.hpp"

namespace mappg {

SoftmaxPolicy::SoftmaxPolicy(int states, int actions)
    : states_(states), actions_(actions), logits_(static_cast<std::size_t>(states * actions), 0.0) {
  if (states < 1 || actions < 1) throw InputError("softmax policy needs states and actions");
}

std::size_t SoftmaxPolicy::row_offset(StateId state) const {
  if (state < 0 || state >= states_) throw InputError("state out of range for policy");
  return static_cast<std::size_t>(state) * static_cast<std::size_t>(actions_);
}

std::span<const double> SoftmaxPolicy::logits(StateId state) const {
  return std::span<const double>(logits_).subspan(row_offset(state), static_cast<std::size_t>(actions_));
}

void SoftmaxPolicy::set_logits(StateId state, std::span<const double> row) {
  if (row.size() != static_cast<std::size_t>(actions_)) throw InputError("logit row has wrong length");
  std::copy(row.begin(), row.end(), logits_.begin() + static_cast<std::ptrdiff_t>(row_offset(state)));
}

std::vector<double> SoftmaxPolicy::probs(StateId state) const {
  const auto row = logits(state);
  const double mx = *std::max_element(row.begin(), row.end());
  std::vector<double> p(row.size());
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    p[i] = std::exp(row[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

double SoftmaxPolicy::prob(StateId state, int action) const {
  if (action < 0 || action >= actions_) throw InputError("action out of range for policy");
  return probs(state)[static_cast<std::size_t>(action)];
}

double SoftmaxPolicy::log_prob(StateId state, int action) const {
  if (action < 0 || action >= actions_) throw InputError("action out of range for policy");
  const auto row = logits(state);
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double l : row) z += std::exp(l - mx);
  return row[static_cast<std::size_t>(action)] - mx - std::log(z);
}

std::vector<double> SoftmaxPolicy::grad_log_prob(StateId state, int action) const {
  if (action < 0 || action >= actions_) throw InputError("action out of range for policy");
  std::vector<double> g(logits_.size(), 0.0);
  const auto p = probs(state);
  const std::size_t off = row_offset(state);
  for (std::size_t i = 0; i < p.size(); ++i) g[off + i] = -p[i];
  g[off + static_cast<std::size_t>(action)] += 1.0;
  return g;
}

int SoftmaxPolicy::greedy(StateId state) const {
  const auto row = logits(state);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

nlohmann::json SoftmaxPolicy::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json prob_rows = nlohmann::json::array();
  for (int s = 0; s < states_; ++s) {
    const auto row = logits(s);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
    prob_rows.push_back(probs(s));
  }
  return {{"kind", "softmax"}, {"logits", rows}, {"probs", prob_rows}};
}

// ---------------------------------------------------------------------------

GaussianPolicy::GaussianPolicy(ActionBounds bounds, double mean, double log_std)
    : bounds_(bounds), params_{mean, log_std} {}

double GaussianPolicy::std_dev() const { return std::max(std::exp(params_[1]), kMinStd); }

double GaussianPolicy::log_prob(StateId state, double action) const {
  if (state < 0) throw InputError("negative state");
  const double sd = std_dev();
  const double z = (action - mean()) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double GaussianPolicy::prob(StateId state, double action) const { return std::exp(log_prob(state, action)); }

std::vector<double> GaussianPolicy::grad_log_prob(StateId state, double action) const {
  if (state < 0) throw InputError("negative state");
  const double sd = std_dev();
  const double diff = action - mean();
  const double d_mean = diff / (sd * sd);
  // Below the floor the density no longer depends on log_std.
  const double d_log_std = std::exp(params_[1]) < kMinStd ? 0.0 : diff * diff / (sd * sd) - 1.0;
  return {d_mean, d_log_std};
}

void GaussianPolicy::project() {
  params_[0] = std::clamp(params_[0], bounds_.low, bounds_.high);
  params_[1] = std::clamp(params_[1], std::log(kMinStd), std::log(bounds_.width()));
}

nlohmann::json GaussianPolicy::to_json() const {
  return {{"kind", "gaussian"}, {"mean", mean()}, {"log_std", log_std()}, {"std", std_dev()},
          {"low", bounds_.low}, {"high", bounds_.high}};
}

// ---------------------------------------------------------------------------

double ExplorationSchedule::epsilon(long t) const {
  if (t < 0) throw InputError("negative step");
  if (anneal_steps <= 0 || t >= anneal_steps) return epsilon_end;
  const double frac = static_cast<double>(t) / static_cast<double>(anneal_steps);
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

ExplorationSchedule ExplorationSchedule::epsilon_greedy(double start, double end, long anneal_steps) {
  ExplorationSchedule s;
  s.kind = ExplorationKind::kEpsilonGreedy;
  s.epsilon_start = start;
  s.epsilon_end = end;
  s.anneal_steps = anneal_steps;
  return s;
}

ExplorationSchedule ExplorationSchedule::uniform_then_noise(long uniform_steps, double noise_std) {
  ExplorationSchedule s;
  s.kind = ExplorationKind::kUniformThenNoise;
  s.uniform_steps = uniform_steps;
  s.noise_std = noise_std;
  return s;
}

int sample(const SoftmaxPolicy& policy, StateId state, const ExplorationSchedule& schedule, long t, Rng& rng) {
  if (t < 0) throw InputError("negative step");
  bool explore = false;
  if (schedule.kind == ExplorationKind::kEpsilonGreedy) {
    const double eps = schedule.epsilon(t);
    explore = eps > 0.0 && uniform_real(rng, 0.0, 1.0) < eps;
  } else {
    explore = t < schedule.uniform_steps;
  }
  if (explore) return uniform_int(rng, 0, policy.action_count() - 1);
  const auto p = policy.probs(state);
  return sample_categorical(rng, p);
}

double sample(const GaussianPolicy& policy, StateId state, const ExplorationSchedule& schedule, long t,
              Rng& rng) {
  if (t < 0) throw InputError("negative step");
  const auto& b = policy.bounds();
  if (schedule.kind == ExplorationKind::kUniformThenNoise) {
    if (t < schedule.uniform_steps) return uniform_real(rng, b.low, b.high);
    return std::clamp(policy.greedy(state) + schedule.noise_std * standard_normal(rng), b.low, b.high);
  }
  const double eps = schedule.epsilon(t);
  if (eps > 0.0 && uniform_real(rng, 0.0, 1.0) < eps) return uniform_real(rng, b.low, b.high);
  return std::clamp(policy.mean() + policy.std_dev() * standard_normal(rng), b.low, b.high);
}

JointAction greedy_joint(std::span<const SoftmaxPolicy> policies, StateId state) {
  std::vector<int> out;
  out.reserve(policies.size());
  for (const auto& p : policies) out.push_back(p.greedy(state));
  return JointAction::discrete(std::move(out));
}

JointAction greedy_joint(std::span<const GaussianPolicy> policies, StateId state) {
  std::vector<double> out;
  out.reserve(policies.size());
  for (const auto& p : policies) out.push_back(p.greedy(state));
  return JointAction::continuous(std::move(out));
}

double other_agents_prob(std::span<const SoftmaxPolicy> policies, StateId state, const JointAction& action,
                         int excluded_agent) {
  if (action.size() != policies.size()) throw InputError("joint action / policy count mismatch");
  double p = 1.0;
  for (std::size_t b = 0; b < policies.size(); ++b) {
    if (static_cast<int>(b) == excluded_agent) continue;
    p *= policies[b].prob(state, action.index(b));
  }
  return p;
}

double other_agents_prob(std::span<const GaussianPolicy> policies, StateId state, const JointAction& action,
                         int excluded_agent) {
  if (action.size() != policies.size()) throw InputError("joint action / policy count mismatch");
  double p = 1.0;
  for (std::size_t b = 0; b < policies.size(); ++b) {
    if (static_cast<int>(b) == excluded_agent) continue;
    p *= policies[b].prob(state, action.value(b));
  }
  return p;
}

double joint_prob(std::span<const SoftmaxPolicy> policies, StateId state, const JointAction& action) {
  return other_agents_prob(policies, state, action, -1);
}

}  // namespace mappg
