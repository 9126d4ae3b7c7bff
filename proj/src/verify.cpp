#include "mappg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mappg/errors.hpp"

namespace mappg {

std::vector<SoftmaxPolicy> policies_from_probs(const std::vector<std::vector<double>>& probs) {
  std::vector<SoftmaxPolicy> out;
  for (const auto& p : probs) {
    SoftmaxPolicy policy(1, static_cast<int>(p.size()));
    std::vector<double> logits;
    for (double x : p) {
      if (!(x > 0.0)) throw DegeneratePolicyError("softmax policies need strictly positive probabilities");
      logits.push_back(std::log(x));
    }
    policy.set_logits(0, logits);
    out.push_back(std::move(policy));
  }
  return out;
}

std::vector<SoftmaxPolicy> Instance::policies() const { return policies_from_probs(probs); }

Instance random_instance(int agents, int actions, std::uint64_t seed) {
  if (agents < 1 || actions < 2) throw InputError("instances need at least one agent and two actions");
  Instance inst;
  inst.agents = agents;
  inst.actions = actions;
  inst.seed = seed;
  Rng rng(seed);
  const std::size_t total = joint_action_count(agents, actions);
  inst.q.resize(total);
  for (;;) {
    for (double& v : inst.q) v = uniform_real(rng, -1.0, 1.0);
    auto sorted = inst.q;
    std::sort(sorted.begin(), sorted.end());
    bool distinct = true;
    for (std::size_t i = 1; i < sorted.size(); ++i) distinct = distinct && sorted[i] - sorted[i - 1] > 1e-9;
    if (distinct) break;
  }
  std::exponential_distribution<double> gamma1(1.0);  // Dirichlet(1) = normalized unit exponentials
  for (int a = 0; a < agents; ++a) {
    std::vector<double> p(static_cast<std::size_t>(actions));
    for (double& x : p) x = gamma1(rng);
    double sum = 0.0;
    for (double x : p) sum += x;
    for (double& x : p) x = std::max(x / sum, 1e-3);
    sum = 0.0;
    for (double x : p) sum += x;
    for (double& x : p) x /= sum;
    inst.probs.push_back(std::move(p));
  }
  return inst;
}

Instance make_instance(const Game& game, std::span<const SoftmaxPolicy> policies) {
  if (!game.is_discrete() || game.state_count() != 1) throw UnsupportedOperation("needs a single-state discrete game");
  if (static_cast<int>(policies.size()) != game.agent_count()) throw InputError("one policy per agent expected");
  Instance inst;
  inst.agents = game.agent_count();
  inst.actions = game.action_count();
  inst.q = joint_values(game, 0);
  for (const auto& p : policies) inst.probs.push_back(p.probs(0));
  return inst;
}

// ---------------------------------------------------------------------------

std::string TheoremReport::csv_header() {
  return "kind,agents,actions,seed,threshold,alpha,pass,optimal,result,iterations,warning";
}

std::string TheoremReport::csv_row() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  const auto joint = [](const JointAction& u) {
    std::string s;
    for (std::size_t i = 0; i < u.size(); ++i) s += (i ? " " : "") + std::to_string(u.index(i));
    return s;
  };
  os << kind << ',' << agents << ',' << actions << ',' << seed << ',' << threshold << ',' << alpha << ','
     << (pass ? 1 : 0) << ',' << joint(optimal) << ',' << joint(result) << ',' << iterations << ','
     << (warning ? 1 : 0);
  return os.str();
}

nlohmann::json TheoremReport::to_json() const {
  return {{"kind", kind},
          {"agents", agents},
          {"actions", actions},
          {"seed", seed},
          {"threshold", threshold},
          {"alpha", alpha},
          {"pass", pass},
          {"optimal", std::vector<int>(optimal.indices().begin(), optimal.indices().end())},
          {"result", std::vector<int>(result.indices().begin(), result.indices().end())},
          {"log_marginals", log_marginals},
          {"iterations", iterations},
          {"warning", warning}};
}

namespace {

struct Shape {
  int agents;
  int actions;
};

Shape shape_of(std::span<const double> q, std::span<const SoftmaxPolicy> policies) {
  if (policies.empty()) throw InputError("no policies");
  const Shape s{static_cast<int>(policies.size()), policies.front().action_count()};
  if (q.size() != joint_action_count(s.agents, s.actions)) throw InputError("q table does not match the policies");
  return s;
}

JointAction unique_argmax(std::span<const double> q, const Shape& s) {
  const auto best = std::max_element(q.begin(), q.end());
  if (std::count(q.begin(), q.end(), *best) > 1) throw AssumptionViolation("joint-action maximizer is not unique");
  return JointAction::discrete(unflatten(static_cast<std::size_t>(best - q.begin()), s.agents, s.actions));
}

int argmax(std::span<const double> v) { return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()); }

/// log M_a^PPG(u_a) for every agent and action in one pass over the joint
/// actions, up to the common offset -alpha * q_curr - log beta.
std::vector<std::vector<double>> log_marginals_all(std::span<const double> q,
                                                   const std::vector<std::vector<double>>& log_probs,
                                                   double alpha, const Shape& s) {
  const auto n = static_cast<std::size_t>(s.agents);
  const auto m = static_cast<std::size_t>(s.actions);
  std::vector<std::vector<std::vector<double>>> terms(n, std::vector<std::vector<double>>(m));
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto u = unflatten(i, s.agents, s.actions);
    double log_joint = 0.0;
    for (std::size_t b = 0; b < n; ++b) log_joint += log_probs[b][static_cast<std::size_t>(u[b])];
    for (std::size_t a = 0; a < n; ++a) {
      const auto ua = static_cast<std::size_t>(u[a]);
      terms[a][ua].push_back(log_joint - log_probs[a][ua] + alpha * q[i]);
    }
  }
  std::vector<std::vector<double>> out(n, std::vector<double>(m));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& t = terms[a][j];
      const double top = *std::max_element(t.begin(), t.end());
      double sum = 0.0;
      for (double x : t) sum += std::exp(x - top);
      out[a][j] = top + std::log(sum);
    }
  }
  return out;
}

std::vector<double> log_probs_of(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - top);
  const double lse = top + std::log(sum);
  std::vector<double> out;
  for (double x : logits) out.push_back(x - lse);
  return out;
}

/// Marginal vector from its logs: rescaled to max == scale, or exponentiated
/// with the given beta and anchor when scale is zero.
std::vector<double> marginal_values(const std::vector<double>& log_m, const Lemma1Options& o, double anchor) {
  std::vector<double> m(log_m.size());
  const double top = *std::max_element(log_m.begin(), log_m.end());
  for (std::size_t j = 0; j < m.size(); ++j) {
    m[j] = o.marginal_scale > 0.0 ? o.marginal_scale * std::exp(log_m[j] - top)
                                  : std::exp(log_m[j] - o.alpha * anchor - std::log(o.beta));
  }
  return m;
}

/// One exact ascent step psi += eta * pi * (M - V); returns V before the step.
double ascent_step(std::vector<double>& logits, const std::vector<double>& m, double eta) {
  const auto lp = log_probs_of(logits);
  double v = 0.0;
  std::vector<double> pi(lp.size());
  for (std::size_t j = 0; j < lp.size(); ++j) {
    pi[j] = std::exp(lp[j]);
    v += pi[j] * m[j];
  }
  for (std::size_t j = 0; j < lp.size(); ++j) logits[j] += eta * pi[j] * (m[j] - v);
  return v;
}

double value_of(std::span<const double> logits, const std::vector<double>& m) {
  const auto lp = log_probs_of(logits);
  double v = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) v += std::exp(lp[j]) * m[j];
  return v;
}

void check_stepsize(const Lemma1Options& o, bool& above) {
  if (!(o.eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(o.gamma >= 0.0 && o.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  const double bound = std::pow(1.0 - o.gamma, 3) / 8.0;
  above = o.eta > bound * (1.0 + 1e-12);
  if (above && !o.force) throw ConfigError("eta exceeds (1 - gamma)^3 / 8; pass force to run anyway");
}

}  // namespace

TheoremReport check_optimality_consistency(std::span<const double> q, std::span<const SoftmaxPolicy> policies,
                                           double alpha, double beta) {
  const Shape s = shape_of(q, policies);
  PolarizationParams params;
  params.alpha = alpha;
  params.beta = beta;
  params.validate();
  TheoremReport r;
  r.kind = "theorem1";
  r.agents = s.agents;
  r.actions = s.actions;
  r.alpha = alpha;
  r.optimal = unique_argmax(q, s);
  r.threshold = alpha_threshold(q, 0, policies);
  const auto current = greedy_joint(policies, 0);
  const double q_curr = q[flat_index(current.indices(), s.actions)];
  const auto qf = table_q(std::vector<double>(q.begin(), q.end()), s.actions);
  std::vector<int> picks;
  r.pass = true;
  for (int a = 0; a < s.agents; ++a) {
    std::vector<double> row;
    for (int j = 0; j < s.actions; ++j) row.push_back(log_marginal_ppg(qf, q_curr, 0, a, j, policies, params));
    picks.push_back(argmax(row));
    r.pass = r.pass && picks.back() == r.optimal.index(static_cast<std::size_t>(a));
    r.log_marginals.push_back(std::move(row));
  }
  r.result = JointAction::discrete(std::move(picks));
  return r;
}

Lemma1Result lemma1_ascent(std::span<const double> q, StateId state, int agent,
                           std::span<const SoftmaxPolicy> frozen, const Lemma1Options& options) {
  const Shape s = shape_of(q, frozen);
  if (agent < 0 || agent >= s.agents) throw InputError("agent index out of range");
  if (options.iterations < 0) throw ConfigError("iterations must be nonnegative");
  Lemma1Result r;
  check_stepsize(options, r.above_bound);

  std::vector<std::vector<double>> log_probs;
  for (const auto& p : frozen) log_probs.push_back(log_probs_of(p.logits(state)));
  const auto log_m = log_marginals_all(q, log_probs, options.alpha, s)[static_cast<std::size_t>(agent)];
  const double anchor = q[flat_index(greedy_joint(frozen, state).indices(), s.actions)];
  r.marginals = marginal_values(log_m, options, anchor);
  r.marginal_argmax = argmax(log_m);

  const auto own = frozen[static_cast<std::size_t>(agent)].logits(state);
  std::vector<double> logits(own.begin(), own.end());
  for (int t = 0; t < options.iterations; ++t) r.values.push_back(ascent_step(logits, r.marginals, options.eta));
  r.values.push_back(value_of(logits, r.marginals));

  for (std::size_t t = 1; t < r.values.size(); ++t) {
    const double drop = r.values[t - 1] - r.values[t];
    r.max_decrease = std::max(r.max_decrease, drop);
    if (drop > 1e-12 * std::max(1.0, std::abs(r.values[t - 1]))) r.monotone = false;
  }
  r.final_policy = SoftmaxPolicy(1, s.actions);
  r.final_policy.set_logits(0, logits);
  r.policy_argmax = r.final_policy.greedy(0);
  return r;
}

TheoremReport theorem2_joint_improvement(std::span<const double> q, std::span<const SoftmaxPolicy> initial,
                                         const Lemma1Options& options, Theorem2Mode mode) {
  const Shape s = shape_of(q, initial);
  TheoremReport r;
  r.kind = mode == Theorem2Mode::kFrozen ? "theorem2_frozen" : "theorem2_current";
  r.agents = s.agents;
  r.actions = s.actions;
  r.alpha = options.alpha;
  r.iterations = options.iterations;
  r.optimal = unique_argmax(q, s);
  r.threshold = alpha_threshold(q, 0, initial);
  if (!(options.alpha > r.threshold)) throw ConfigError("alpha must exceed the instance threshold");
  bool above = false;
  check_stepsize(options, above);
  r.warning = above;

  std::vector<int> picks;
  if (mode == Theorem2Mode::kFrozen) {
    for (int a = 0; a < s.agents; ++a) {
      const auto l = lemma1_ascent(q, 0, a, initial, options);
      picks.push_back(l.policy_argmax);
      r.log_marginals.emplace_back();
      for (double m : l.marginals) r.log_marginals.back().push_back(std::log(m));
    }
  } else {
    std::vector<std::vector<double>> logits;
    for (const auto& p : initial) logits.emplace_back(p.logits(0).begin(), p.logits(0).end());
    for (int t = 0; t < options.iterations; ++t) {
      std::vector<std::vector<double>> log_probs;
      for (const auto& l : logits) log_probs.push_back(log_probs_of(l));
      const auto log_m = log_marginals_all(q, log_probs, options.alpha, s);
      std::vector<int> greedy;
      for (const auto& l : logits) greedy.push_back(argmax(l));
      const double anchor = q[flat_index(greedy, s.actions)];
      for (std::size_t a = 0; a < logits.size(); ++a) {
        ascent_step(logits[a], marginal_values(log_m[a], options, anchor), options.eta);
      }
    }
    for (const auto& l : logits) picks.push_back(argmax(l));
  }
  r.result = JointAction::discrete(std::move(picks));
  r.pass = r.result == r.optimal;
  return r;
}

std::optional<CdmWitness> find_cdm_instance(const Game& game, std::span<const SoftmaxPolicy> policies,
                                            StateId state) {
  if (!game.is_discrete()) throw UnsupportedOperation("needs a discrete game");
  if (static_cast<int>(policies.size()) != game.agent_count()) throw InputError("one policy per agent expected");
  const auto best = optimal_joint_action(game, state);
  const auto values = joint_values(game, state);
  const auto qf = table_q(values, game.action_count());
  for (int a = 0; a < game.agent_count(); ++a) {
    std::vector<double> m;
    for (int j = 0; j < game.action_count(); ++j) m.push_back(marginal(qf, state, a, j, policies));
    const int star = best.action.index(static_cast<std::size_t>(a));
    const int top = argmax(m);
    if (m[static_cast<std::size_t>(top)] > m[static_cast<std::size_t>(star)]) {
      return CdmWitness{a, star, top, m[static_cast<std::size_t>(star)], m[static_cast<std::size_t>(top)]};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

struct Draw {
  int agents;
  int actions;
  std::uint64_t seed;
};

Draw draw(Rng& rng, int min_agents, int max_agents, int min_actions, int max_actions) {
  if (min_agents < 1 || max_agents < min_agents || min_actions < 2 || max_actions < min_actions) {
    throw ConfigError("invalid instance size range");
  }
  const int n = uniform_int(rng, min_agents, max_agents);
  const int m = uniform_int(rng, min_actions, max_actions);
  return {n, m, rng()};
}

}  // namespace

SweepSummary theorem1_sweep(int count, std::uint64_t seed, int min_agents, int max_agents, int min_actions,
                            int max_actions) {
  Rng rng(seed);
  SweepSummary out;
  for (int i = 0; i < count; ++i) {
    const auto d = draw(rng, min_agents, max_agents, min_actions, max_actions);
    const double multiplier = uniform_real(rng, 1.001, 4.0);
    const auto inst = random_instance(d.agents, d.actions, d.seed);
    const auto policies = inst.policies();
    const double threshold = alpha_threshold(inst.q, 0, policies);
    auto report = check_optimality_consistency(inst.q, policies, multiplier * threshold);
    report.seed = d.seed;
    out.passed += report.pass ? 1 : 0;
    ++out.count;
    out.reports.push_back(std::move(report));
  }
  return out;
}

SweepSummary lemma1_sweep(int count, std::uint64_t seed, Lemma1Options options, double alpha_multiplier) {
  Rng rng(seed);
  SweepSummary out;
  for (int i = 0; i < count; ++i) {
    const auto d = draw(rng, 2, 3, 2, 4);
    const auto inst = random_instance(d.agents, d.actions, d.seed);
    const auto policies = inst.policies();
    TheoremReport report;
    report.kind = "lemma1";
    report.agents = d.agents;
    report.actions = d.actions;
    report.seed = d.seed;
    report.threshold = alpha_threshold(inst.q, 0, policies);
    options.alpha = alpha_multiplier * report.threshold;
    report.alpha = options.alpha;
    report.iterations = options.iterations;
    report.optimal = unique_argmax(inst.q, {d.agents, d.actions});
    const auto l = lemma1_ascent(inst.q, 0, 0, policies, options);
    report.result = JointAction::discrete({l.policy_argmax});
    report.warning = l.above_bound;
    report.pass = l.monotone && l.policy_argmax == l.marginal_argmax;
    report.log_marginals.emplace_back();
    for (double m : l.marginals) report.log_marginals.back().push_back(std::log(m));
    out.passed += report.pass ? 1 : 0;
    ++out.count;
    out.reports.push_back(std::move(report));
  }
  return out;
}

SweepSummary theorem2_sweep(int count, std::uint64_t seed, Lemma1Options options, Theorem2Mode mode,
                            double alpha_multiplier) {
  Rng rng(seed);
  SweepSummary out;
  for (int i = 0; i < count; ++i) {
    const auto d = draw(rng, 2, 3, 2, 4);
    const auto inst = random_instance(d.agents, d.actions, d.seed);
    const auto policies = inst.policies();
    options.alpha = alpha_multiplier * alpha_threshold(inst.q, 0, policies);
    auto report = theorem2_joint_improvement(inst.q, policies, options, mode);
    report.seed = d.seed;
    out.passed += report.pass ? 1 : 0;
    ++out.count;
    out.reports.push_back(std::move(report));
  }
  return out;
}

}  // namespace mappg
