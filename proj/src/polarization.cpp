#include "mappg/polarization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include <spdlog/spdlog.h>

#include "mappg/errors.hpp"

namespace mappg {

namespace {

const double kLogMax = std::log(std::numeric_limits<double>::max());

void check_agents(std::size_t count, int agent) {
  if (agent < 0 || static_cast<std::size_t>(agent) >= count) throw InputError("agent index out of range");
}

int common_action_count(std::span<const SoftmaxPolicy> policies) {
  if (policies.empty()) throw InputError("no policies");
  const int actions = policies.front().action_count();
  for (const auto& p : policies) {
    if (p.action_count() != actions) throw InputError("policies disagree on the action count");
  }
  return actions;
}

/// Calls f(joint action, pi_{-a}) for every completion of u_a = action.
template <typename F>
void for_each_completion(std::span<const SoftmaxPolicy> policies, StateId state, int agent, int action, F&& f) {
  check_agents(policies.size(), agent);
  const int actions = common_action_count(policies);
  if (action < 0 || action >= actions) throw InputError("action out of range");
  const int n = static_cast<int>(policies.size());
  const std::size_t total = joint_action_count(n, actions);
  for (std::size_t i = 0; i < total; ++i) {
    auto idx = unflatten(i, n, actions);
    if (idx[static_cast<std::size_t>(agent)] != action) continue;
    const auto u = JointAction::discrete(std::move(idx));
    f(u, other_agents_prob(policies, state, u, agent));
  }
}

}  // namespace

void PolarizationParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(cap_L > 0.0)) throw ConfigError("cap_L must be positive");
  if (!(prob_clip_P >= 0.5 && prob_clip_P < 1.0)) throw ConfigError("prob_clip_P must lie in [0.5, 1)");
}

double saturating_exp(double x, PolarizationStats* stats) {
  if (std::isnan(x)) throw InputError("polarization exponent is NaN");
  if (x <= kLogMax) return std::exp(x);
  if (stats) ++stats->saturations;
  static std::once_flag warned;
  std::call_once(warned, [x] {
    spdlog::warn("polarization exponent {} overflows; clamping to the largest finite double", x);
  });
  return std::numeric_limits<double>::max();
}

double q_ppg_hard(const JointAction& action, const JointAction& optimal) { return action == optimal ? 1.0 : 0.0; }

double q_ppg_soft(double q, double alpha, PolarizationStats* stats) { return saturating_exp(alpha * q, stats); }

double q_ppg_baseline(double q, double q_curr, const PolarizationParams& params, PolarizationStats* stats) {
  // log((1/beta) exp(a)) = a - log(beta); dividing after a clamp would hide the overflow.
  return saturating_exp(params.alpha * (q - q_curr) - std::log(params.beta), stats);
}

double pessimistic_gap(const CriticEnsemble& ensemble, StateId state, const JointAction& action,
                       const JointAction& current) {
  const double low = std::min(ensemble.target(0).predict(state, action), ensemble.target(1).predict(state, action));
  const double high =
      std::max(ensemble.target(0).predict(state, current), ensemble.target(1).predict(state, current));
  return low - high;
}

double q_hat_ppg(const CriticEnsemble& ensemble, StateId state, const JointAction& action,
                 const JointAction& current, const PolarizationParams& params, PolarizationStats* stats) {
  return saturating_exp(params.alpha * pessimistic_gap(ensemble, state, action, current), stats);
}

double clipped_coefficient(double q_hat, std::span<const double> probs, const PolarizationParams& params) {
  if (q_hat < 1.0) return 0.0;
  if (!probs.empty() && std::all_of(probs.begin(), probs.end(), [&](double p) { return p > params.prob_clip_P; })) {
    return 0.0;
  }
  return std::min(q_hat, params.cap_L) / params.beta;
}

QFunction table_q(std::vector<double> values, int action_count) {
  return [values = std::move(values), action_count](StateId, const JointAction& u) {
    return values.at(flat_index(u.indices(), action_count));
  };
}

double marginal(const QFunction& q, StateId state, int agent, int action, std::span<const SoftmaxPolicy> policies) {
  double total = 0.0;
  for_each_completion(policies, state, agent, action,
                      [&](const JointAction& u, double weight) { total += weight * q(state, u); });
  return total;
}

double marginal(const QFunction& q, StateId state, int agent, double action, std::span<const GaussianPolicy> policies,
                int samples, Rng& rng) {
  check_agents(policies.size(), agent);
  if (samples < 1) throw InputError("sample count must be positive");
  std::vector<double> u(policies.size());
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    for (std::size_t b = 0; b < policies.size(); ++b) {
      u[b] = static_cast<int>(b) == agent ? action : policies[b].mean() + policies[b].std_dev() * standard_normal(rng);
    }
    total += q(state, JointAction::continuous(u));
  }
  return total / samples;
}

double marginal_ppg(const QFunction& q, double q_curr, StateId state, int agent, int action,
                    std::span<const SoftmaxPolicy> policies, const PolarizationParams& params,
                    PolarizationStats* stats) {
  const QFunction polarized = [&](StateId s, const JointAction& u) {
    return q_ppg_baseline(q(s, u), q_curr, params, stats);
  };
  return marginal(polarized, state, agent, action, policies);
}

double marginal_ppg(const QFunction& q, double q_curr, StateId state, int agent, double action,
                    std::span<const GaussianPolicy> policies, const PolarizationParams& params, int samples,
                    Rng& rng, PolarizationStats* stats) {
  const QFunction polarized = [&](StateId s, const JointAction& u) {
    return q_ppg_baseline(q(s, u), q_curr, params, stats);
  };
  return marginal(polarized, state, agent, action, policies, samples, rng);
}

double log_marginal_ppg(const QFunction& q, double q_curr, StateId state, int agent, int action,
                        std::span<const SoftmaxPolicy> policies, const PolarizationParams& params) {
  std::vector<double> terms;
  for_each_completion(policies, state, agent, action, [&](const JointAction& u, double weight) {
    terms.push_back(std::log(weight) + params.alpha * (q(state, u) - q_curr));
  });
  const double top = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return top + std::log(sum) - std::log(params.beta);
}

double alpha_threshold(std::span<const double> q_values, StateId state, std::span<const SoftmaxPolicy> policies) {
  const int actions = common_action_count(policies);
  const int n = static_cast<int>(policies.size());
  if (q_values.size() != joint_action_count(n, actions)) throw InputError("q table size does not match policies");
  const auto best = std::max_element(q_values.begin(), q_values.end());
  const double q_star = *best;
  double q_sec = -std::numeric_limits<double>::infinity();
  for (auto it = q_values.begin(); it != q_values.end(); ++it) {
    if (it == best) continue;
    if (*it == q_star) throw AssumptionViolation("joint-action maximizer is not unique");
    q_sec = std::max(q_sec, *it);
  }
  if (!std::isfinite(q_sec)) return 0.0;  // a single joint action is trivially optimal
  const auto u_star =
      JointAction::discrete(unflatten(static_cast<std::size_t>(best - q_values.begin()), n, actions));
  double threshold = 0.0;
  for (int a = 0; a < n; ++a) {
    const double mass = other_agents_prob(policies, state, u_star, a);
    if (!(mass > 0.0)) throw DegeneratePolicyError("co-players give the optimal joint action zero probability");
    threshold = std::max(threshold, std::log(mass) / (q_sec - q_star));
  }
  return threshold;
}

}  // namespace mappg
