#include "mappg/critics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "mappg/errors.hpp"

namespace mappg {

std::vector<double> Critic::predict_batch(std::span<const StateId> states,
                                          std::span<const JointAction> actions) const {
  if (states.size() != actions.size()) throw InputError("state/action batch size mismatch");
  std::vector<double> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out[i] = predict(states[i], actions[i]);
  return out;
}

// ---------------------------------------------------------------------------

TabularCritic::TabularCritic(int states, int agents, int action_count, double learning_rate)
    : states_(states),
      agents_(agents),
      action_count_(action_count),
      learning_rate_(learning_rate),
      q_(static_cast<std::size_t>(states) * joint_action_count(agents, action_count), 0.0) {
  if (states < 1 || agents < 1 || action_count < 1) throw InputError("empty tabular critic");
  if (!(learning_rate > 0.0)) throw ConfigError("critic learning rate must be positive");
}

std::size_t TabularCritic::offset(StateId state, const JointAction& action) const {
  if (state < 0 || state >= states_) throw InputError("state out of range for critic");
  if (!action.is_discrete() || static_cast<int>(action.size()) != agents_) {
    throw InputError("tabular critic needs a discrete joint action of the right size");
  }
  return static_cast<std::size_t>(state) * joint_action_count(agents_, action_count_) +
         flat_index(action.indices(), action_count_);
}

double TabularCritic::predict(StateId state, const JointAction& action) const {
  return q_[offset(state, action)];
}

void TabularCritic::set(StateId state, const JointAction& action, double value) {
  q_[offset(state, action)] = value;
}

double TabularCritic::fit(std::span<const StateId> states, std::span<const JointAction> actions,
                          std::span<const double> targets) {
  if (states.empty()) throw InputError("empty batch");
  if (states.size() != actions.size() || states.size() != targets.size()) {
    throw InputError("batch size mismatch");
  }
  const double k = static_cast<double>(states.size());
  std::vector<std::pair<std::size_t, double>> grads;
  grads.reserve(states.size());
  double mse = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::size_t o = offset(states[i], actions[i]);
    const double err = q_[o] - targets[i];
    mse += err * err;
    grads.emplace_back(o, err / k);
  }
  for (const auto& [o, g] : grads) q_[o] -= learning_rate_ * g;
  return mse / k;
}

void TabularCritic::set_parameters(std::span<const double> params) {
  if (params.size() != q_.size()) throw InputError("parameter size mismatch");
  q_.assign(params.begin(), params.end());
}

nlohmann::json TabularCritic::to_json() const {
  const std::size_t joint = joint_action_count(agents_, action_count_);
  nlohmann::json rows = nlohmann::json::array();
  for (int s = 0; s < states_; ++s) {
    const auto first = q_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * joint);
    rows.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(joint)));
  }
  return {{"kind", "tabular"}, {"agents", agents_}, {"actions", action_count_}, {"q", rows}};
}

// ---------------------------------------------------------------------------

FeatureEncoder::FeatureEncoder(const Game& game)
    : states_(game.state_count()), agents_(game.agent_count()), discrete_(game.is_discrete()) {
  if (discrete_) {
    action_count_ = game.action_count();
  } else {
    for (int a = 0; a < agents_; ++a) bounds_.push_back(game.bounds(a));
  }
}

FeatureEncoder::FeatureEncoder(int states, std::vector<ActionBounds> bounds)
    : states_(states), agents_(static_cast<int>(bounds.size())), discrete_(false), bounds_(std::move(bounds)) {}

FeatureEncoder::FeatureEncoder(int states, int agents, int action_count)
    : states_(states), agents_(agents), action_count_(action_count), discrete_(true) {}

std::size_t FeatureEncoder::dimension() const {
  const std::size_t state_part = states_ > 1 ? static_cast<std::size_t>(states_) : 0;
  const std::size_t per_agent = discrete_ ? static_cast<std::size_t>(action_count_) : 1;
  return state_part + static_cast<std::size_t>(agents_) * per_agent;
}

void FeatureEncoder::encode(StateId state, const JointAction& action, std::span<double> out) const {
  if (out.size() != dimension()) throw InputError("feature buffer has wrong size");
  if (static_cast<int>(action.size()) != agents_ || action.is_discrete() != discrete_) {
    throw InputError("joint action does not match encoder");
  }
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t pos = 0;
  if (states_ > 1) {
    if (state < 0 || state >= states_) throw InputError("state out of range for encoder");
    out[static_cast<std::size_t>(state)] = 1.0;
    pos = static_cast<std::size_t>(states_);
  }
  for (int a = 0; a < agents_; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (discrete_) {
      out[pos + static_cast<std::size_t>(action.index(ua))] = 1.0;
      pos += static_cast<std::size_t>(action_count_);
    } else {
      const auto& b = bounds_[ua];
      out[pos++] = 2.0 * (action.value(ua) - b.low) / b.width() - 1.0;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using ConstVectorMap = Eigen::Map<const Vector>;
using MatrixMap = Eigen::Map<Matrix>;
using VectorMap = Eigen::Map<Vector>;

std::size_t count_parameters(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l + 1]) * static_cast<std::size_t>(sizes[l] + 1);
  }
  return n;
}

/// Forward pass keeping every layer's activation (activations[0] is the input).
std::vector<Matrix> forward_all(const std::vector<int>& sizes, const std::vector<double>& params,
                                const ConstMatrixMap& input) {
  std::vector<Matrix> acts;
  acts.reserve(sizes.size());
  acts.emplace_back(input);
  std::size_t off = 0;
  const std::size_t layers = sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    ConstMatrixMap w(params.data() + off, out, in);
    off += static_cast<std::size_t>(out * in);
    ConstVectorMap b(params.data() + off, out);
    off += static_cast<std::size_t>(out);
    Matrix z = w * acts.back();
    z.colwise() += b;
    // tanh through exp: Eigen vectorizes exp for doubles but not tanh.
    if (l + 1 < layers) z = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Backpropagates d loss / d output (one entry per sample) into a flat parameter gradient.
std::vector<double> backward(const std::vector<int>& sizes, const std::vector<double>& params,
                             const std::vector<Matrix>& acts, const Matrix& d_output) {
  std::vector<double> grad(params.size(), 0.0);
  const std::size_t layers = sizes.size() - 1;
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(sizes[l + 1]) * static_cast<std::size_t>(sizes[l] + 1);
  }
  Matrix delta = d_output;  // d loss / d pre-activation of the current layer
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    MatrixMap gw(grad.data() + offsets[l], out, in);
    VectorMap gb(grad.data() + offsets[l] + static_cast<std::size_t>(out * in), out);
    gw.noalias() = delta * acts[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0) {
      ConstMatrixMap w(params.data() + offsets[l], out, in);
      Matrix upstream = w.transpose() * delta;
      delta = upstream.array() * (1.0 - acts[l].array().square());
    }
  }
  return grad;
}

}  // namespace

FeedforwardCritic::FeedforwardCritic(FeatureEncoder encoder, std::vector<int> hidden, OptimizerConfig optimizer,
                                     std::uint64_t seed)
    : encoder_(std::move(encoder)) {
  sizes_.push_back(static_cast<int>(encoder_.dimension()));
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
    sizes_.push_back(h);
  }
  sizes_.push_back(1);
  params_.assign(count_parameters(sizes_), 0.0);
  Rng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (int i = 0; i < out * in; ++i) params_[off++] = uniform_real(rng, -limit, limit);
    off += static_cast<std::size_t>(out);  // biases start at zero
  }
  optimizer_ = Optimizer(optimizer, params_.size());
}

std::vector<double> FeedforwardCritic::encode_batch(std::span<const StateId> states,
                                                    std::span<const JointAction> actions) const {
  if (states.size() != actions.size()) throw InputError("state/action batch size mismatch");
  const std::size_t dim = encoder_.dimension();
  std::vector<double> x(dim * states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    encoder_.encode(states[i], actions[i], std::span<double>(x).subspan(i * dim, dim));
  }
  return x;
}

double FeedforwardCritic::forward(std::span<const double> features) const {
  if (features.size() != static_cast<std::size_t>(sizes_.front())) throw InputError("feature size mismatch");
  ConstMatrixMap x(features.data(), sizes_.front(), 1);
  return forward_all(sizes_, params_, x).back()(0, 0);
}

double FeedforwardCritic::predict(StateId state, const JointAction& action) const {
  std::vector<double> x(encoder_.dimension());
  encoder_.encode(state, action, x);
  return forward(x);
}

std::vector<double> FeedforwardCritic::predict_batch(std::span<const StateId> states,
                                                     std::span<const JointAction> actions) const {
  if (states.empty()) return {};
  const auto x = encode_batch(states, actions);
  ConstMatrixMap input(x.data(), sizes_.front(), static_cast<Eigen::Index>(states.size()));
  const auto acts = forward_all(sizes_, params_, input);
  const Matrix& out = acts.back();
  return std::vector<double>(out.data(), out.data() + out.size());
}

std::vector<double> FeedforwardCritic::output_gradient(std::span<const double> features) const {
  if (features.size() != static_cast<std::size_t>(sizes_.front())) throw InputError("feature size mismatch");
  ConstMatrixMap x(features.data(), sizes_.front(), 1);
  const auto acts = forward_all(sizes_, params_, x);
  return backward(sizes_, params_, acts, Matrix::Ones(1, 1));
}

std::vector<double> FeedforwardCritic::loss_gradient(std::span<const double> features_col_major,
                                                     std::span<const double> targets, double* mse) const {
  const auto k = static_cast<Eigen::Index>(targets.size());
  if (k == 0) throw InputError("empty batch");
  if (features_col_major.size() != static_cast<std::size_t>(sizes_.front()) * targets.size()) {
    throw InputError("feature batch size mismatch");
  }
  ConstMatrixMap x(features_col_major.data(), sizes_.front(), k);
  const auto acts = forward_all(sizes_, params_, x);
  Matrix d_out(1, k);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double err = acts.back()(0, i) - targets[static_cast<std::size_t>(i)];
    sq += err * err;
    d_out(0, i) = err / static_cast<double>(k);
  }
  if (mse) *mse = sq / static_cast<double>(k);
  return backward(sizes_, params_, acts, d_out);
}

double FeedforwardCritic::fit(std::span<const StateId> states, std::span<const JointAction> actions,
                              std::span<const double> targets) {
  if (states.empty()) throw InputError("empty batch");
  if (targets.size() != states.size()) throw InputError("batch size mismatch");
  const auto x = encode_batch(states, actions);
  double mse = 0.0;
  const auto grad = loss_gradient(x, targets, &mse);
  optimizer_.descend(params_, grad);
  return mse;
}

void FeedforwardCritic::set_parameters(std::span<const double> params) {
  if (params.size() != params_.size()) throw InputError("parameter size mismatch");
  params_.assign(params.begin(), params.end());
}

nlohmann::json FeedforwardCritic::to_json() const {
  return {{"kind", "feedforward"}, {"layers", sizes_}, {"activation", "tanh"}, {"parameters", params_}};
}

// ---------------------------------------------------------------------------

CriticEnsemble::CriticEnsemble(std::unique_ptr<Critic> first, std::unique_ptr<Critic> second, int sync_period)
    : sync_period_(sync_period) {
  if (!first || !second) throw InputError("ensemble needs two critics");
  targets_[0] = first->clone();
  targets_[1] = second->clone();
  critics_[0] = std::move(first);
  critics_[1] = std::move(second);
}

CriticEnsemble::CriticEnsemble(const CriticEnsemble& other)
    : sync_period_(other.sync_period_), updates_(other.updates_) {
  for (std::size_t k = 0; k < 2; ++k) {
    critics_[k] = other.critics_[k]->clone();
    targets_[k] = other.targets_[k]->clone();
  }
}

CriticEnsemble& CriticEnsemble::operator=(const CriticEnsemble& other) {
  if (this != &other) {
    CriticEnsemble copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void CriticEnsemble::sync_targets() {
  for (std::size_t k = 0; k < 2; ++k) targets_[k]->set_parameters(critics_[k]->parameters());
}

nlohmann::json CriticEnsemble::to_json() const {
  return {{"critic_1", critics_[0]->to_json()},
          {"critic_2", critics_[1]->to_json()},
          {"target_1", targets_[0]->to_json()},
          {"target_2", targets_[1]->to_json()},
          {"sync_period", sync_period_},
          {"updates", updates_}};
}

void sync_targets(CriticEnsemble& ensemble) { ensemble.sync_targets(); }

double td_update(CriticEnsemble& ensemble, std::span<const Transition> minibatch, const GreedyFn& greedy,
                 double gamma) {
  if (minibatch.empty()) throw InputError("empty minibatch");
  std::vector<StateId> states;
  std::vector<JointAction> actions;
  std::vector<StateId> next_states;
  std::vector<JointAction> next_actions;
  std::vector<std::size_t> bootstrap_rows;
  states.reserve(minibatch.size());
  actions.reserve(minibatch.size());
  for (std::size_t i = 0; i < minibatch.size(); ++i) {
    const auto& t = minibatch[i];
    states.push_back(t.state);
    actions.push_back(t.action);
    if (!t.done) {
      next_states.push_back(t.next_state);
      next_actions.push_back(greedy(t.next_state));
      bootstrap_rows.push_back(i);
    }
  }
  double loss = 0.0;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> targets(minibatch.size());
    for (std::size_t i = 0; i < minibatch.size(); ++i) targets[i] = minibatch[i].reward;
    if (!bootstrap_rows.empty()) {
      const auto boot = ensemble.target(k).predict_batch(next_states, next_actions);
      for (std::size_t j = 0; j < bootstrap_rows.size(); ++j) targets[bootstrap_rows[j]] += gamma * boot[j];
    }
    loss += ensemble.critic(k).fit(states, actions, targets);
  }
  ensemble.count_update();
  return loss / 2.0;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InputError("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::add(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw InputError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  if (items_.empty()) throw StateError("cannot sample from an empty replay buffer");
  std::vector<Transition> out;
  out.reserve(count);
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

}  // namespace mappg
