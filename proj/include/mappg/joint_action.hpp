#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mappg {

using StateId = int;

/// One action per agent. Discrete joint actions hold indices, continuous
/// ones hold real values; the two kinds never compare equal.
class JointAction {
 public:
  JointAction() = default;

  static JointAction discrete(std::vector<int> indices);
  static JointAction continuous(std::vector<double> values);

  bool is_discrete() const { return discrete_; }
  std::size_t size() const { return discrete_ ? indices_.size() : values_.size(); }

  /// Discrete component; throws UnsupportedOperation on continuous actions.
  int index(std::size_t agent) const;
  /// Continuous component, or the index converted to double for discrete actions.
  double value(std::size_t agent) const;

  std::span<const int> indices() const { return indices_; }
  std::span<const double> values() const { return values_; }

  /// Copy with agent's component replaced (u_a, u_{-a} recombination).
  JointAction with_index(std::size_t agent, int action) const;
  JointAction with_value(std::size_t agent, double action) const;

  std::vector<double> as_doubles() const;
  std::string to_string() const;

  friend bool operator==(const JointAction&, const JointAction&) = default;

 private:
  bool discrete_ = true;
  std::vector<int> indices_;
  std::vector<double> values_;
};

std::ostream& operator<<(std::ostream& os, const JointAction& ja);

/// Lexicographic rank of a discrete joint action, agent 0 most significant.
std::size_t flat_index(std::span<const int> indices, int action_count);
std::vector<int> unflatten(std::size_t index, int agents, int action_count);
std::size_t joint_action_count(int agents, int action_count);

}  // namespace mappg
