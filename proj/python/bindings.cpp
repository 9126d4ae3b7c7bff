#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mappg/cli.hpp"
#include "mappg/errors.hpp"
#include "mappg/learner.hpp"
#include "mappg/polarization.hpp"
#include "mappg/verify.hpp"

namespace py = pybind11;
using namespace mappg;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict record_dict(const RunRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["return"] = r.episode_return;
  d["greedy"] = r.greedy.is_discrete() ? py::cast(std::vector<int>(r.greedy.indices().begin(), r.greedy.indices().end()))
                                       : py::cast(std::vector<double>(r.greedy.values().begin(), r.greedy.values().end()));
  d["greedy_prob"] = r.greedy_prob;
  d["q_greedy"] = r.q_greedy;
  d["q_target_greedy"] = r.q_target_greedy;
  d["clip_fraction"] = r.clip_fraction;
  d["saturation_count"] = r.saturation_count;
  return d;
}

py::dict train(const std::string& game_name, const std::string& algorithm, std::uint64_t seed, const py::object& overrides) {
  const auto game = load_game(game_name);
  auto cfg = TrainConfig::defaults_for(defaults_key(*game), algorithm_from_string(algorithm));
  if (!overrides.is_none()) cfg.merge_json(from_py(overrides));
  cfg.seed = seed;
  cfg.validate(*game);
  RunResult result = [&] {
    py::gil_scoped_release release;
    return run(cfg, *game);
  }();
  py::list records;
  for (const auto& r : result.log.records) records.append(record_dict(r));
  py::dict out;
  out["records"] = records;
  out["policies"] = to_py(result.actors.to_json());
  out["return"] = greedy_return(result.actors, *game);
  out["config"] = to_py(cfg.to_json());
  if (game->is_discrete() && game->state_count() == 1) {
    std::vector<double> q;
    for (const auto& u : enumerate_joint_actions(*game)) q.push_back(result.critics.critic(0).predict(0, u));
    out["q"] = q;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Polarized multi-agent policy gradients";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<AssumptionViolation>(m, "AssumptionViolation", PyExc_ValueError);
  py::register_exception<DegeneratePolicyError>(m, "DegeneratePolicyError", PyExc_ValueError);

  m.def("penalty_payoff", [] { return MatrixGame::penalty_game().payoff(); });
  m.def(
      "mtq_reward",
      [](double u1, double u2) {
        return DifferentialGame::max_of_two_quadratics().reward(0, JointAction::continuous({u1, u2}));
      },
      py::arg("u1"), py::arg("u2"));

  m.def(
      "q_ppg_soft", [](double q, double alpha) { return q_ppg_soft(q, alpha); }, py::arg("q"), py::arg("alpha"));
  m.def(
      "q_ppg_baseline",
      [](double q, double q_curr, double alpha, double beta) {
        PolarizationParams p;
        p.alpha = alpha;
        p.beta = beta;
        return q_ppg_baseline(q, q_curr, p);
      },
      py::arg("q"), py::arg("q_curr"), py::arg("alpha") = 1.0, py::arg("beta") = 1.0);
  m.def(
      "clipped_coefficient",
      [](double q_hat, const std::vector<double>& probs, double cap_L, double prob_clip_P, double beta) {
        PolarizationParams p;
        p.cap_L = cap_L;
        p.prob_clip_P = prob_clip_P;
        p.beta = beta;
        return clipped_coefficient(q_hat, probs, p);
      },
      py::arg("q_hat"), py::arg("probs"), py::arg("cap_L") = 10.0, py::arg("prob_clip_P") = 0.9,
      py::arg("beta") = 1.0);
  m.def(
      "alpha_threshold",
      [](const std::vector<double>& q, const std::vector<std::vector<double>>& probs) {
        return alpha_threshold(q, 0, policies_from_probs(probs));
      },
      py::arg("q"), py::arg("probs"));
  m.def(
      "check_optimality_consistency",
      [](const std::vector<double>& q, const std::vector<std::vector<double>>& probs, double alpha) {
        return to_py(check_optimality_consistency(q, policies_from_probs(probs), alpha).to_json());
      },
      py::arg("q"), py::arg("probs"), py::arg("alpha"));
  m.def(
      "theorem1_sweep",
      [](int count, std::uint64_t seed) {
        const auto s = theorem1_sweep(count, seed);
        return py::make_tuple(s.count, s.passed);
      },
      py::arg("count"), py::arg("seed") = 0);

  m.def("train", &train, py::arg("game") = "matrix", py::arg("algorithm") = "mappg", py::arg("seed") = 0,
        py::arg("overrides") = py::none(),
        "Train one seed; overrides use the flat config keys of the JSON config format.");
}
