#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mappg/envs.hpp"
#include "mappg/learner.hpp"

namespace mappg {

enum ExitCode : int { kExitOk = 0, kExitThreshold = 1, kExitConfig = 2, kExitMissing = 3 };

/// Built-in game name ("matrix", "mtq") or path to a game JSON file.
std::unique_ptr<Game> load_game(const std::string& descriptor);
/// Name used to pick training defaults for a loaded game.
std::string defaults_key(const Game& game);

struct ExperimentSpec {
  std::string game = "matrix";
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir;

  /// Throws ConfigError on duplicate seeds or an empty seed list.
  void validate() const;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  JointAction greedy;
  double final_return = 0.0;
  double q_greedy = 0.0;
};

/// Runs every seed, writing run_seed<k>.csv and final_seed<k>.json to the
/// output directory, then summary.json. Returns the per-seed outcomes.
std::vector<SeedOutcome> run_experiment(const ExperimentSpec& spec, const Game& game);

/// Index of the seed with the lowest final return (first on ties).
std::size_t worst_seed(const std::vector<SeedOutcome>& outcomes);

/// Entry point shared by the executable; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace mappg
