#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mappg/envs.hpp"
#include "mappg/policies.hpp"
#include "mappg/polarization.hpp"

namespace mappg {

/// Single-state joint-action value table with one fixed policy per agent.
struct Instance {
  int agents = 2;
  int actions = 2;
  std::uint64_t seed = 0;
  std::vector<double> q;                   // flat, lexicographic
  std::vector<std::vector<double>> probs;  // per agent

  std::vector<SoftmaxPolicy> policies() const;
};

/// Q entries i.i.d. uniform on [-1, 1], redrawn until every pair differs by
/// more than 1e-9; policies drawn uniformly from the simplex, floored at 1e-3
/// and renormalized.
Instance random_instance(int agents, int actions, std::uint64_t seed);

/// Instance built from an existing single-state game and policies.
Instance make_instance(const Game& game, std::span<const SoftmaxPolicy> policies);

/// Softmax policies whose logits are log probs.
std::vector<SoftmaxPolicy> policies_from_probs(const std::vector<std::vector<double>>& probs);

struct TheoremReport {
  std::string kind;
  int agents = 0;
  int actions = 0;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  double alpha = 0.0;
  bool pass = false;
  JointAction optimal;
  JointAction result;                              // per-agent argmax (or final greedy joint)
  std::vector<std::vector<double>> log_marginals;  // [agent][action] log M^PPG
  int iterations = 0;
  bool warning = false;  // run outside the proven regime (forced stepsize)

  static std::string csv_header();
  std::string csv_row() const;
  nlohmann::json to_json() const;
};

/// Exact polarized marginals for every agent and action, anchored at the value
/// of the policies' greedy joint action; passes iff every agent's argmax is
/// its component of u*.
TheoremReport check_optimality_consistency(std::span<const double> q, std::span<const SoftmaxPolicy> policies,
                                           double alpha, double beta = 1.0);

struct Lemma1Options {
  double alpha = 1.0;
  double eta = 0.001 / 8.0;
  double gamma = 0.9;
  int iterations = 5000;
  /// When positive, M^PPG is rescaled so its largest entry equals this value
  /// (a per-instance choice of beta). When zero, beta is used as given.
  double marginal_scale = 1e4;
  double beta = 1.0;
  bool force = false;  // allow eta above (1 - gamma)^3 / 8
};

struct Lemma1Result {
  std::vector<double> values;  // V_{s,a} before each step and after the last
  std::vector<double> marginals;
  SoftmaxPolicy final_policy{1, 1};
  double max_decrease = 0.0;
  bool monotone = true;  // no step decreased V by more than 1e-12 (relative to |V| when |V| > 1)
  int policy_argmax = 0;
  int marginal_argmax = 0;
  bool above_bound = false;
};

/// Exact softmax gradient ascent on V = sum pi_a M_a^PPG for one agent with the
/// other agents frozen at `frozen`. Throws ConfigError when eta exceeds the
/// bound and force is off.
Lemma1Result lemma1_ascent(std::span<const double> q, StateId state, int agent,
                           std::span<const SoftmaxPolicy> frozen, const Lemma1Options& options);

enum class Theorem2Mode { kFrozen, kCurrentPolicy };

/// Every agent ascends its own V; passes iff the final greedy joint action is u*.
/// kFrozen uses the initial co-player policies throughout, kCurrentPolicy
/// updates all agents simultaneously against the live co-players.
TheoremReport theorem2_joint_improvement(std::span<const double> q, std::span<const SoftmaxPolicy> initial,
                                         const Lemma1Options& options, Theorem2Mode mode);

struct CdmWitness {
  int agent = 0;
  int optimal_action = 0;
  int preferred_action = 0;
  double optimal_marginal = 0.0;
  double preferred_marginal = 0.0;
};

/// First agent whose raw marginal ranks some action above its component of u*.
std::optional<CdmWitness> find_cdm_instance(const Game& game, std::span<const SoftmaxPolicy> policies,
                                            StateId state = 0);

struct SweepSummary {
  int count = 0;
  int passed = 0;
  std::vector<TheoremReport> reports;
  int violations() const { return count - passed; }
  double pass_rate() const { return count > 0 ? static_cast<double>(passed) / count : 0.0; }
};

/// Random instances (agents and actions drawn from the given ranges) checked at
/// alpha = multiplier * threshold with multiplier uniform on [1.001, 4].
SweepSummary theorem1_sweep(int count, std::uint64_t seed, int min_agents = 2, int max_agents = 3,
                            int min_actions = 2, int max_actions = 5);
/// lemma1_ascent on agent 0 of each instance at alpha = alpha_multiplier * threshold.
SweepSummary lemma1_sweep(int count, std::uint64_t seed, Lemma1Options options, double alpha_multiplier = 2.0);
SweepSummary theorem2_sweep(int count, std::uint64_t seed, Lemma1Options options, Theorem2Mode mode,
                            double alpha_multiplier = 2.0);

}  // namespace mappg
