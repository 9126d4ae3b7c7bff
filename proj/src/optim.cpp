#include "mappg/optim.hpp"

#include <cmath>

#include "mappg/errors.hpp"

namespace mappg {

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count) : config_(config) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (config_.kind == OptimizerKind::kAdam) {
    m_.assign(parameter_count, 0.0);
    v_.assign(parameter_count, 0.0);
  }
}

void Optimizer::apply(std::span<double> params, std::span<const double> grad, double sign) {
  if (params.size() != grad.size()) throw InputError("parameter/gradient size mismatch");
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += sign * lr * grad[i];
    return;
  }
  if (m_.size() != params.size()) throw InputError("Adam state sized for a different parameter set");
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] += sign * lr * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

double clip_by_norm(std::span<double> grad, double max_norm) {
  // Scale by the largest entry first so huge polarized coefficients cannot overflow the sum of squares.
  double scale = 0.0;
  for (double g : grad) scale = std::max(scale, std::abs(g));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sq = 0.0;
  for (double g : grad) sq += (g / scale) * (g / scale);
  const double norm = scale * std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

}  // namespace mappg
