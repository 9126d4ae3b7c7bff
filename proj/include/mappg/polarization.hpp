#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mappg/critics.hpp"
#include "mappg/joint_action.hpp"
#include "mappg/policies.hpp"
#include "mappg/random.hpp"

namespace mappg {

struct PolarizationParams {
  double alpha = 1.0;         // enlargement factor
  double beta = 1.0;          // scale
  double cap_L = 10.0;        // pessimistic cap
  double prob_clip_P = 0.9;   // probability clip threshold

  /// Throws ConfigError unless alpha > 0, beta > 0, cap_L > 0 and P in [0.5, 1).
  void validate() const;
};

/// Counts exponentials that overflowed and were clamped to the largest double.
struct PolarizationStats {
  long saturations = 0;
};

/// exp(x), clamped to the largest finite double. Saturations are counted in
/// stats (when given) and reported once per process through the logger.
double saturating_exp(double x, PolarizationStats* stats = nullptr);

double q_ppg_hard(const JointAction& action, const JointAction& optimal);
double q_ppg_soft(double q, double alpha, PolarizationStats* stats = nullptr);
/// (1/beta) exp(alpha (q - q_curr)).
double q_ppg_baseline(double q, double q_curr, const PolarizationParams& params,
                      PolarizationStats* stats = nullptr);

/// min_k target_k(s, u) - max_k target_k(s, u_curr).
double pessimistic_gap(const CriticEnsemble& ensemble, StateId state, const JointAction& action,
                       const JointAction& current);
/// exp(alpha * pessimistic_gap); beta is applied later by the loss.
double q_hat_ppg(const CriticEnsemble& ensemble, StateId state, const JointAction& action,
                 const JointAction& current, const PolarizationParams& params,
                 PolarizationStats* stats = nullptr);

/// 0 if q_hat < 1 or every entry of probs exceeds P, else min(q_hat, L) / beta.
/// An empty probs span disables the probability rule (continuous policies have
/// densities, not probabilities).
double clipped_coefficient(double q_hat, std::span<const double> probs, const PolarizationParams& params);

using QFunction = std::function<double(StateId, const JointAction&)>;

/// Joint-action values of a flattened single-state table.
QFunction table_q(std::vector<double> values, int action_count);

/// M_a(s, u_a) = sum over u_{-a} of pi_{-a}(u_{-a}|s) q(s, (u_a, u_{-a})), exactly.
double marginal(const QFunction& q, StateId state, int agent, int action, std::span<const SoftmaxPolicy> policies);
/// Monte Carlo estimate with `samples` draws of u_{-a} from the co-players' Gaussians.
double marginal(const QFunction& q, StateId state, int agent, double action, std::span<const GaussianPolicy> policies,
                int samples, Rng& rng);

/// Marginal of the baseline polarized values, anchored at q_curr.
double marginal_ppg(const QFunction& q, double q_curr, StateId state, int agent, int action,
                    std::span<const SoftmaxPolicy> policies, const PolarizationParams& params,
                    PolarizationStats* stats = nullptr);
double marginal_ppg(const QFunction& q, double q_curr, StateId state, int agent, double action,
                    std::span<const GaussianPolicy> policies, const PolarizationParams& params, int samples,
                    Rng& rng, PolarizationStats* stats = nullptr);

/// log M_a^PPG computed with log-sum-exp; finite even when M_a^PPG overflows.
double log_marginal_ppg(const QFunction& q, double q_curr, StateId state, int agent, int action,
                        std::span<const SoftmaxPolicy> policies, const PolarizationParams& params);

/// Smallest alpha that guarantees every agent's polarized marginal ranks its
/// component of u* first: max_a log pi_{-a}(u*_{-a}) / (Q_sec - Q*), with
/// Q_sec the second largest value in the table. Needs a unique maximizer only.
double alpha_threshold(std::span<const double> q_values, StateId state, std::span<const SoftmaxPolicy> policies);

}  // namespace mappg
