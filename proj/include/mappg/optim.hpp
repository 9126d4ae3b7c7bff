#pragma once

#include <span>
#include <string>
#include <vector>

namespace mappg {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order optimizer over a flat parameter vector. Adam keeps its moment
/// estimates per instance, so one Optimizer serves exactly one parameter set.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, std::size_t parameter_count);

  void ascend(std::span<double> params, std::span<const double> grad) { apply(params, grad, +1.0); }
  void descend(std::span<double> params, std::span<const double> grad) { apply(params, grad, -1.0); }

  const OptimizerConfig& config() const { return config_; }

 private:
  void apply(std::span<double> params, std::span<const double> grad, double sign);

  OptimizerConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long steps_ = 0;
};

/// Rescales grad in place so its Euclidean norm is at most max_norm (no-op if
/// max_norm <= 0). Returns the norm before clipping.
double clip_by_norm(std::span<double> grad, double max_norm);

}  // namespace mappg
