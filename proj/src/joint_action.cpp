#include "mappg/joint_action.hpp"

#include <sstream>

#include "mappg/errors.hpp"

namespace mappg {

JointAction JointAction::discrete(std::vector<int> indices) {
  JointAction ja;
  ja.discrete_ = true;
  ja.indices_ = std::move(indices);
  return ja;
}

JointAction JointAction::continuous(std::vector<double> values) {
  JointAction ja;
  ja.discrete_ = false;
  ja.values_ = std::move(values);
  return ja;
}

int JointAction::index(std::size_t agent) const {
  if (!discrete_) throw UnsupportedOperation("index() on a continuous joint action");
  return indices_.at(agent);
}

double JointAction::value(std::size_t agent) const {
  return discrete_ ? static_cast<double>(indices_.at(agent)) : values_.at(agent);
}

JointAction JointAction::with_index(std::size_t agent, int action) const {
  if (!discrete_) throw UnsupportedOperation("with_index() on a continuous joint action");
  JointAction out = *this;
  out.indices_.at(agent) = action;
  return out;
}

JointAction JointAction::with_value(std::size_t agent, double action) const {
  if (discrete_) throw UnsupportedOperation("with_value() on a discrete joint action");
  JointAction out = *this;
  out.values_.at(agent) = action;
  return out;
}

std::vector<double> JointAction::as_doubles() const {
  if (!discrete_) return values_;
  return {indices_.begin(), indices_.end()};
}

std::string JointAction::to_string() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const JointAction& ja) {
  os << '(';
  for (std::size_t a = 0; a < ja.size(); ++a) {
    if (a) os << ',';
    if (ja.is_discrete()) {
      os << ja.index(a);
    } else {
      os << ja.value(a);
    }
  }
  return os << ')';
}

std::size_t flat_index(std::span<const int> indices, int action_count) {
  std::size_t idx = 0;
  for (int u : indices) {
    if (u < 0 || u >= action_count) throw InputError("action index out of range");
    idx = idx * static_cast<std::size_t>(action_count) + static_cast<std::size_t>(u);
  }
  return idx;
}

std::vector<int> unflatten(std::size_t index, int agents, int action_count) {
  std::vector<int> out(static_cast<std::size_t>(agents));
  for (int a = agents - 1; a >= 0; --a) {
    out[static_cast<std::size_t>(a)] = static_cast<int>(index % static_cast<std::size_t>(action_count));
    index /= static_cast<std::size_t>(action_count);
  }
  return out;
}

std::size_t joint_action_count(int agents, int action_count) {
  std::size_t n = 1;
  for (int a = 0; a < agents; ++a) n *= static_cast<std::size_t>(action_count);
  return n;
}

}  // namespace mappg
