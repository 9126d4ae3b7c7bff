#include "mappg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "mappg/errors.hpp"
#include "mappg/verify.hpp"

namespace mappg {

namespace fs = std::filesystem;

namespace {

/// Missing inputs for `table`; mapped to exit code 3.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double round6(double x) { return std::round(x * 1e6) / 1e6; }

std::string fixed6(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << x;
  return os.str();
}

nlohmann::json action_json(const JointAction& u) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u.is_discrete()) {
      out.push_back(u.index(i));
    } else {
      out.push_back(round6(u.value(i)));
    }
  }
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

fs::path default_output_dir() {
  const char* env = std::getenv("MAPPG_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::vector<std::uint64_t> seed_list(int count, std::uint64_t base) {
  if (count < 1) throw ConfigError("--seeds must be positive");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

/// Q values of critic 1 over every joint action of a single-state discrete game.
std::vector<double> critic_grid(const RunResult& r, const Game& game) {
  std::vector<double> q;
  for (const auto& u : enumerate_joint_actions(game)) q.push_back(r.critics.critic(0).predict(0, u));
  return q;
}

}  // namespace

std::unique_ptr<Game> load_game(const std::string& descriptor) {
  if (descriptor == "matrix") return std::make_unique<MatrixGame>(MatrixGame::penalty_game());
  if (descriptor == "mtq") return std::make_unique<DifferentialGame>(DifferentialGame::max_of_two_quadratics());
  if (!fs::exists(descriptor)) throw ConfigError("unknown game '" + descriptor + "'");
  return game_from_json(read_json(descriptor));
}

std::string defaults_key(const Game& game) { return game.name(); }

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
}

std::size_t worst_seed(const std::vector<SeedOutcome>& outcomes) {
  if (outcomes.empty()) throw InputError("no outcomes");
  std::size_t worst = 0;
  for (std::size_t i = 1; i < outcomes.size(); ++i) {
    if (outcomes[i].final_return < outcomes[worst].final_return) worst = i;
  }
  return worst;
}

std::vector<SeedOutcome> run_experiment(const ExperimentSpec& spec, const Game& game) {
  spec.validate();
  spec.train.validate(game);
  fs::create_directories(spec.output_dir);
  std::vector<SeedOutcome> outcomes;
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto seed : spec.seeds) {
    TrainConfig config = spec.train;
    config.seed = seed;
    const auto result = run(config, game);
    const int n = game.agent_count();

    std::ostringstream csv;
    result.log.write_csv(csv, n);
    write_text(spec.output_dir / ("run_seed" + std::to_string(seed) + ".csv"), csv.str());

    SeedOutcome o;
    o.seed = seed;
    o.greedy = result.actors.greedy(game.initial_state());
    o.final_return = greedy_return(result.actors, game);
    o.q_greedy = result.critics.critic(0).predict(game.initial_state(), o.greedy);

    nlohmann::json final_doc = {{"seed", seed},
                                {"game", game.name()},
                                {"agents", n},
                                {"greedy", action_json(o.greedy)},
                                {"return", round6(o.final_return)},
                                {"q_greedy", round6(o.q_greedy)},
                                {"policies", result.actors.to_json()},
                                {"critics", result.critics.to_json()}};
    if (game.is_discrete() && game.state_count() == 1) {
      final_doc["actions"] = game.action_count();
      final_doc["q"] = critic_grid(result, game);
    }
    write_text(spec.output_dir / ("final_seed" + std::to_string(seed) + ".json"), final_doc.dump(1) + "\n");
    per_seed.push_back({{"seed", seed},
                        {"greedy", action_json(o.greedy)},
                        {"return", round6(o.final_return)},
                        {"q_greedy", round6(o.q_greedy)}});
    outcomes.push_back(std::move(o));
  }

  const auto& worst = outcomes[worst_seed(outcomes)];
  double mean_return = 0.0;
  std::vector<double> mean_action(static_cast<std::size_t>(game.agent_count()), 0.0);
  for (const auto& o : outcomes) {
    mean_return += o.final_return / static_cast<double>(outcomes.size());
    for (std::size_t a = 0; a < mean_action.size(); ++a) {
      mean_action[a] += o.greedy.value(a) / static_cast<double>(outcomes.size());
    }
  }
  for (double& x : mean_action) x = round6(x);
  nlohmann::json summary = {{"game", game.name()},
                            {"algorithm", to_string(spec.train.algorithm)},
                            {"config", spec.train.to_json()},
                            {"seeds", per_seed},
                            {"worst", {{"seed", worst.seed},
                                       {"greedy", action_json(worst.greedy)},
                                       {"return", round6(worst.final_return)}}},
                            {"mean_return", round6(mean_return)},
                            {"mean_final_action", mean_action}};
  write_text(spec.output_dir / "summary.json", summary.dump(1) + "\n");
  return outcomes;
}

// ---------------------------------------------------------------------------

namespace {

/// Options shared by train and sweep; each is applied only when given.
struct TrainFlags {
  std::string game = "matrix";
  std::string algo;
  std::string config_path;
  std::string out;
  int seed_count = 5;
  std::uint64_t seed_base = 0;
  bool no_polarization = false;
  bool no_pessimistic_bound = false;
  std::optional<long> steps;
  std::optional<double> alpha, beta, cap_l, prob_clip, actor_lr, critic_lr, grad_clip;
  std::optional<int> batch_size, sync_period;

  void attach(CLI::App* cmd) {
    cmd->add_option("--game", game, "matrix, mtq, or a game JSON file");
    cmd->add_option("--algo", algo, "mappg, vanilla_mapg, coma, mappg_no_polarization, mappg_no_pessimistic_bound");
    cmd->add_option("--config", config_path, "experiment JSON (game, seeds, output_dir, train)");
    cmd->add_option("--out", out, "output directory (default $MAPPG_OUTPUT_DIR or ./runs)");
    cmd->add_option("--seeds", seed_count, "number of seeds");
    cmd->add_option("--seed-base", seed_base, "first seed");
    cmd->add_flag("--no-polarization", no_polarization, "use the no-polarization ablation");
    cmd->add_flag("--no-pessimistic-bound", no_pessimistic_bound, "use the single-target ablation");
    cmd->add_option("--steps", steps, "environment steps");
    cmd->add_option("--alpha", alpha, "enlargement factor");
    cmd->add_option("--beta", beta, "polarization scale");
    cmd->add_option("--cap-L", cap_l, "pessimistic cap");
    cmd->add_option("--prob-clip", prob_clip, "probability clip threshold P");
    cmd->add_option("--actor-lr", actor_lr, "actor learning rate");
    cmd->add_option("--critic-lr", critic_lr, "critic learning rate");
    cmd->add_option("--grad-clip", grad_clip, "joint actor gradient norm cap (0 = off)");
    cmd->add_option("--batch-size", batch_size, "minibatch size K");
    cmd->add_option("--sync-period", sync_period, "target sync period in updates");
  }

  /// Defaults, then config file, then flags.
  ExperimentSpec build(const CLI::App* cmd) const {
    nlohmann::json file = nlohmann::json::object();
    if (!config_path.empty()) file = read_json(config_path);
    ExperimentSpec spec;
    spec.game = cmd->count("--game") || !file.contains("game") ? game : file["game"].get<std::string>();
    const auto loaded = load_game(spec.game);

    std::string algo_name = "mappg";
    if (file.contains("train") && file["train"].contains("algorithm")) {
      algo_name = file["train"]["algorithm"].get<std::string>();
    }
    if (!algo.empty()) algo_name = algo;
    if (no_polarization && no_pessimistic_bound) throw ConfigError("choose at most one ablation flag");
    if (no_polarization) algo_name = "mappg_no_polarization";
    if (no_pessimistic_bound) algo_name = "mappg_no_pessimistic_bound";

    spec.train = TrainConfig::defaults_for(defaults_key(*loaded), algorithm_from_string(algo_name));
    if (file.contains("train")) spec.train.merge_json(file["train"]);
    spec.train.algorithm = algorithm_from_string(algo_name);

    spec.seeds = seed_list(seed_count, seed_base);
    if (file.contains("seeds") && !cmd->count("--seeds") && !cmd->count("--seed-base")) {
      spec.seeds = file["seeds"].get<std::vector<std::uint64_t>>();
    }
    spec.output_dir = default_output_dir();
    if (file.contains("output_dir")) spec.output_dir = file["output_dir"].get<std::string>();
    if (!out.empty()) spec.output_dir = out;

    auto& t = spec.train;
    if (steps) t.total_steps = *steps;
    if (alpha) t.polarization.alpha = *alpha;
    if (beta) t.polarization.beta = *beta;
    if (cap_l) t.polarization.cap_L = *cap_l;
    if (prob_clip) t.polarization.prob_clip_P = *prob_clip;
    if (actor_lr) t.actor_optimizer.learning_rate = *actor_lr;
    if (critic_lr) t.critic_optimizer.learning_rate = *critic_lr;
    if (grad_clip) t.max_grad_norm = *grad_clip;
    if (batch_size) t.batch_size = *batch_size;
    if (sync_period) t.sync_period = *sync_period;
    spec.validate();
    t.validate(*loaded);
    return spec;
  }
};

void print_outcomes(const std::vector<SeedOutcome>& outcomes) {
  for (const auto& o : outcomes) {
    std::cout << "seed " << o.seed << " greedy " << o.greedy.to_string() << " return " << fixed6(o.final_return)
              << " q " << fixed6(o.q_greedy) << '\n';
  }
  const auto& w = outcomes[worst_seed(outcomes)];
  std::cout << "worst seed " << w.seed << " greedy " << w.greedy.to_string() << " return " << fixed6(w.final_return)
            << '\n';
}

int cmd_train(const TrainFlags& flags, const CLI::App* cmd) {
  const auto spec = flags.build(cmd);
  const auto game = load_game(spec.game);
  const auto outcomes = run_experiment(spec, *game);
  print_outcomes(outcomes);
  std::cout << "wrote " << (spec.output_dir / "summary.json").string() << '\n';
  return kExitOk;
}

int cmd_table(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "summary.json")) throw MissingArtifact("no summary.json in " + root.string());
  const auto summary = read_json(root / "summary.json");
  const auto seed = summary.at("worst").at("seed").get<std::uint64_t>();
  const auto final_path = root / ("final_seed" + std::to_string(seed) + ".json");
  if (!fs::exists(final_path)) throw MissingArtifact("missing " + final_path.string());
  const auto doc = read_json(final_path);
  std::cout << summary.at("algorithm").get<std::string>() << " on " << summary.at("game").get<std::string>()
            << ", worst seed " << seed << '\n';
  const auto& policies = doc.at("policies");
  if (!doc.contains("q")) {
    for (std::size_t a = 0; a < policies.size(); ++a) {
      const auto& p = policies[a];
      std::cout << "agent " << a << " mean " << fixed6(p.at("mean").get<double>()) << " std "
                << fixed6(p.at("std").get<double>()) << '\n';
    }
    std::cout << "return " << fixed6(doc.at("return").get<double>()) << '\n';
    return kExitOk;
  }
  const auto q = doc.at("q").get<std::vector<double>>();
  const int m = doc.at("actions").get<int>();
  const int n = doc.at("agents").get<int>();
  const auto greedy = doc.at("greedy").get<std::vector<int>>();
  const auto label = [](int j) { return std::string(1, static_cast<char>('A' + j)); };
  const auto prob = [&](int a, int j) {
    return policies[static_cast<std::size_t>(a)].at("probs")[0][static_cast<std::size_t>(j)].get<double>();
  };
  if (n != 2) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto u = unflatten(i, n, m);
      std::string name;
      for (int j : u) name += label(j);
      std::cout << name << ' ' << fixed6(q[i]) << (u == greedy ? " *" : "") << '\n';
    }
    return kExitOk;
  }
  constexpr int kWidth = 14;
  std::cout << std::setw(kWidth) << "";
  for (int j = 0; j < m; ++j) {
    std::cout << std::setw(kWidth) << (label(j) + " " + fixed6(prob(1, j)) + (greedy[1] == j ? "*" : " "));
  }
  std::cout << '\n';
  for (int i = 0; i < m; ++i) {
    std::cout << std::setw(kWidth) << (label(i) + " " + fixed6(prob(0, i)) + (greedy[0] == i ? "*" : " "));
    for (int j = 0; j < m; ++j) {
      std::cout << std::setw(kWidth) << fixed6(q[static_cast<std::size_t>(i * m + j)]) + " ";
    }
    std::cout << '\n';
  }
  return kExitOk;
}

struct SweepGroup {
  double value;
  std::vector<double> returns;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size() - 1);
}

int cmd_sweep(const TrainFlags& flags, const CLI::App* cmd, const std::string& parameter,
              const std::vector<double>& values) {
  if (parameter != "alpha") throw ConfigError("only --param alpha is supported");
  if (values.empty()) throw ConfigError("--values must not be empty");
  const auto base = flags.build(cmd);
  const auto game = load_game(base.game);

  std::vector<Algorithm> variants{base.train.algorithm};
  if (flags.no_polarization || flags.no_pessimistic_bound) variants.insert(variants.begin(), Algorithm::kMappg);

  std::ostringstream sweep_csv;
  sweep_csv << "alpha,seed,final_return\n";
  std::ostringstream compare_csv;
  compare_csv << "variant,alpha,seed,final_return,greedy\n";
  std::vector<SweepGroup> groups;
  for (const double value : values) {
    for (const auto variant : variants) {
      ExperimentSpec spec = base;
      spec.train.algorithm = variant;
      spec.train.polarization.alpha = value;
      std::ostringstream sub;
      sub << to_string(variant) << "_alpha_" << fixed6(value);
      spec.output_dir = base.output_dir / sub.str();
      const auto outcomes = run_experiment(spec, *game);
      std::vector<double> returns;
      for (const auto& o : outcomes) {
        returns.push_back(o.final_return);
        compare_csv << to_string(variant) << ',' << fixed6(value) << ',' << o.seed << ',' << fixed6(o.final_return)
                    << ',' << o.greedy.to_string() << '\n';
        if (variant == base.train.algorithm) {
          sweep_csv << fixed6(value) << ',' << o.seed << ',' << fixed6(o.final_return) << '\n';
        }
      }
      if (variant == base.train.algorithm) groups.push_back({value, returns});
    }
  }
  fs::create_directories(base.output_dir);
  write_text(base.output_dir / "sweep.csv", sweep_csv.str());
  if (variants.size() > 1) write_text(base.output_dir / "comparison.csv", compare_csv.str());

  double pooled = 0.0;
  for (const auto& g : groups) pooled += variance_of(g.returns);
  pooled = std::sqrt(pooled / static_cast<double>(groups.size()));
  int violations = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double mu = mean_of(groups[i].returns);
    std::cout << "alpha " << fixed6(groups[i].value) << " mean_return " << fixed6(mu) << '\n';
    if (i > 0 && mu < mean_of(groups[i - 1].returns) - pooled) ++violations;
  }
  std::cout << "pooled_std " << fixed6(pooled) << " monotonicity_violations " << violations << '\n';
  return violations == 0 ? kExitOk : kExitThreshold;
}

struct VerifyFlags {
  std::string kind;
  int count = 100;
  std::uint64_t seed = 0;
  std::string game = "matrix";
  std::string mode = "both";
  std::optional<double> eta;
  double gamma = 0.9;
  int iterations = 5000;
  bool eta_above_bound = false;
  bool force = false;
};

int emit(const SweepSummary& s, const std::string& label, bool tolerate) {
  for (const auto& r : s.reports) std::cout << r.csv_row() << '\n';
  std::cout << "# " << label << " passed " << s.passed << "/" << s.count << " pass_rate " << fixed6(s.pass_rate())
            << '\n';
  return s.violations() == 0 || tolerate ? kExitOk : kExitThreshold;
}

int cmd_verify(const VerifyFlags& f) {
  if (f.count < 1) throw ConfigError("--count must be positive");
  if (f.kind != "cdm" && f.kind != "theorem1" && f.kind != "lemma1" && f.kind != "theorem2") {
    throw ConfigError("unknown verify kind '" + f.kind + "'");
  }
  if (f.mode != "frozen" && f.mode != "current" && f.mode != "both") throw ConfigError("unknown --mode");
  if (f.kind == "cdm") {
    const auto game = load_game(f.game);
    if (!game->is_discrete()) throw ConfigError("cdm needs a discrete game");
    std::vector<SoftmaxPolicy> uniform(static_cast<std::size_t>(game->agent_count()),
                                       SoftmaxPolicy(game->state_count(), game->action_count()));
    const auto w = find_cdm_instance(*game, uniform);
    if (!w) {
      std::cout << "no mismatch under uniform policies\n";
      return kExitOk;
    }
    std::cout << "agent,optimal_action,preferred_action,optimal_marginal,preferred_marginal\n"
              << w->agent << ',' << w->optimal_action << ',' << w->preferred_action << ','
              << fixed6(w->optimal_marginal) << ',' << fixed6(w->preferred_marginal) << '\n';
    return kExitOk;
  }

  Lemma1Options options;
  options.gamma = f.gamma;
  options.iterations = f.iterations;
  const double bound = std::pow(1.0 - f.gamma, 3) / 8.0;
  options.eta = f.eta ? *f.eta : bound;
  if (f.eta_above_bound) options.eta = 2.0 * bound;
  options.force = f.force;
  const bool forced = f.force && options.eta > bound;
  if (forced) std::cerr << "warning: eta " << options.eta << " exceeds the bound " << bound << '\n';

  std::cout << TheoremReport::csv_header() << '\n';
  if (f.kind == "theorem1") return emit(theorem1_sweep(f.count, f.seed), "theorem1", false);
  if (f.kind == "lemma1") return emit(lemma1_sweep(f.count, f.seed, options), "lemma1", forced);
  if (f.kind == "theorem2") {
    int code = kExitOk;
    if (f.mode == "frozen" || f.mode == "both") {
      code = std::max(code, emit(theorem2_sweep(f.count, f.seed, options, Theorem2Mode::kFrozen), "theorem2_frozen",
                                 forced));
    }
    if (f.mode == "current" || f.mode == "both") {
      // Current-policy updates are an empirical check; only a rate below 95% counts as failure.
      const auto s = theorem2_sweep(f.count, f.seed, options, Theorem2Mode::kCurrentPolicy);
      emit(s, "theorem2_current", true);
      if (s.pass_rate() < 0.95 && !forced) code = kExitThreshold;
    }
    return code;
  }
  throw ConfigError("unknown verify kind '" + f.kind + "'");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Polarization policy gradient experiments"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train one configuration over several seeds");
  train_flags.attach(train);

  std::string table_dir;
  auto* table = app.add_subcommand("table", "print the learned payoff grid of a finished run");
  table->add_option("run_dir", table_dir, "directory written by train")->required();

  TrainFlags sweep_flags;
  std::string parameter = "alpha";
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "repeat train over parameter values");
  sweep_flags.attach(sweep);
  sweep->add_option("--param", parameter, "parameter to sweep");
  sweep->add_option("--values", values, "values to try")->delimiter(',');

  VerifyFlags verify_flags;
  auto* verify = app.add_subcommand("verify", "numeric checks of the optimality results");
  verify->add_option("kind", verify_flags.kind, "theorem1, lemma1, theorem2 or cdm")->required();
  verify->add_option("--count", verify_flags.count, "random instances");
  verify->add_option("--seed", verify_flags.seed, "sweep seed");
  verify->add_option("--game", verify_flags.game, "game for cdm");
  verify->add_option("--mode", verify_flags.mode, "theorem2: frozen, current or both");
  verify->add_option("--eta", verify_flags.eta, "ascent stepsize (default (1 - gamma)^3 / 8)");
  verify->add_option("--gamma", verify_flags.gamma, "discount used for the stepsize bound");
  verify->add_option("--iterations", verify_flags.iterations, "ascent iterations");
  verify->add_flag("--eta-above-bound", verify_flags.eta_above_bound, "use twice the stepsize bound");
  verify->add_flag("--force", verify_flags.force, "allow stepsizes above the bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_flags, train);
    if (*table) return cmd_table(table_dir);
    if (*sweep) return cmd_sweep(sweep_flags, sweep, parameter, values);
    if (*verify) return cmd_verify(verify_flags);
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace mappg
