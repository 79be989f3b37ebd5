#pragma once

// Lagrange-relaxed Q-learning for a single project model: replay memory,
// multiplier-grid bootstrap targets, and a softly tracking target network.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/lambda_grid.hpp"
#include "lpca/qnet.hpp"
#include "lpca/random.hpp"

namespace lpca {

struct Transition {
  std::size_t project_index = 0;
  int s = 0;
  double a = 0.0;
  double r = 0.0;
  int s_next = 0;
  bool done = false;
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity == 0) throw DomainError("ReplayBuffer: capacity must be positive");
    entries_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(const Transition& t) {
    if (entries_.size() < capacity_) {
      entries_.push_back(t);
    } else {
      entries_[next_] = t;
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return entries_[i]; }

  /// Uniform batch of distinct entry indices.
  std::vector<std::size_t> sample_indices(Rng& rng, std::size_t batch) const {
    if (batch > entries_.size()) throw ContractViolation("ReplayBuffer: batch larger than memory");
    return sample_without_replacement(rng, entries_.size(), batch);
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> entries_;
};

struct TargetNetwork {
  QNetwork net;
  double tau = 0.01;
};

/// target <- tau * online + (1 - tau) * target, parameter-wise.
inline void soft_update(TargetNetwork& target, const QNetwork& net) {
  if (!target.net.same_shape(net)) throw ContractViolation("soft_update: network shapes differ");
  auto& dst = target.net.parameters();
  const auto& src = net.parameters();
  const double tau = target.tau;
  if (tau == 1.0) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau * src[i] + (1.0 - tau) * dst[i];
}

/// Bootstrap target r - lambda * cost (+ gamma * v_expected unless terminal).
inline double compute_target(double r, double cost, double lambda, double gamma, double v_expected,
                             bool done) {
  const double immediate = r - lambda * cost;
  return done ? immediate : immediate + gamma * v_expected;
}

struct ActionValue {
  double action = 0.0;
  double value = 0.0;
};

inline double action_grid_point(double a_max, int grid_size, int k) {
  if (k == grid_size - 1) return a_max;
  return a_max * static_cast<double>(k) / static_cast<double>(grid_size - 1);
}

/// Scans an equispaced action grid on [0, a_max]; ties go to the smallest action.
inline ActionValue max_over_actions(const QNetwork& net, int s, double lambda, int action_grid_size) {
  if (action_grid_size < 2) throw DomainError("max_over_actions: grid needs at least two points");
  ActionValue best{0.0, -std::numeric_limits<double>::infinity()};
  for (int k = 0; k < action_grid_size; ++k) {
    const double a = action_grid_point(net.a_max(), action_grid_size, k);
    const double q = net.forward(s, a, lambda);
    if (q > best.value) best = {a, q};
  }
  return best;
}

struct TrainStepConfig {
  std::size_t batch_size = 128;
  std::size_t k_lambdas = 16;
  double gamma = 0.9;
  int action_grid_size = 51;
  double divergence_threshold = 1e6;
};

/// One gradient step on the mean squared Bellman error over a replay batch.
///
/// The multiplier subset is drawn once per batch from `multipliers` and shared
/// by all of its transitions, so each (next state, lambda) bootstrap value is
/// computed once.
inline double train_step(QNetwork& net, const QNetwork& target, AdamOptimizer& optimizer,
                         const ReplayBuffer& buffer, const std::vector<double>& multipliers,
                         const ProjectModel& model, const TrainStepConfig& cfg, Rng& rng) {
  if (buffer.size() == 0) throw ContractViolation("train_step: replay memory is empty");
  if (buffer.size() < cfg.batch_size) throw ContractViolation("train_step: memory smaller than batch");
  if (cfg.k_lambdas == 0 || cfg.k_lambdas > multipliers.size()) {
    throw ContractViolation("train_step: k_lambdas must lie in [1, multiplier count]");
  }
  const auto& grid = multipliers;

  const auto batch = buffer.sample_indices(rng, cfg.batch_size);
  const auto lambda_idx = sample_without_replacement(rng, grid.size(), cfg.k_lambdas);

  const std::size_t n_states = static_cast<std::size_t>(model.state_count);
  std::vector<double> v_cache(n_states * cfg.k_lambdas, std::numeric_limits<double>::quiet_NaN());
  auto v_expected = [&](int s_next, std::size_t j) {
    double& slot = v_cache[static_cast<std::size_t>(s_next) * cfg.k_lambdas + j];
    if (std::isnan(slot)) slot = max_over_actions(target, s_next, grid[lambda_idx[j]], cfg.action_grid_size).value;
    return slot;
  };

  std::vector<QInput> inputs;
  std::vector<double> targets;
  inputs.reserve(batch.size() * cfg.k_lambdas);
  targets.reserve(batch.size() * cfg.k_lambdas);
  for (std::size_t b : batch) {
    const Transition& t = buffer[b];
    const double cost = model.cost(t.s, t.a);
    for (std::size_t j = 0; j < cfg.k_lambdas; ++j) {
      const double lambda = grid[lambda_idx[j]];
      const double v = t.done ? 0.0 : v_expected(t.s_next, j);
      inputs.push_back({t.s, t.a, lambda});
      targets.push_back(compute_target(t.r, cost, lambda, cfg.gamma, v, t.done));
    }
  }
  std::vector<double> grad(net.parameters().size(), 0.0);
  const double n_terms = static_cast<double>(inputs.size());
  const double sse = net.accumulate_batch_squared_error_gradient(inputs, targets, 1.0 / n_terms, grad);
  const double loss = sse / n_terms;
  if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
    std::ostringstream msg;
    msg << "Q-learning diverged on model '" << model.name << "': loss=" << loss
        << " threshold=" << cfg.divergence_threshold << " batch=" << batch.size()
        << " k_lambdas=" << cfg.k_lambdas << " adam_steps=" << optimizer.steps();
    throw DivergenceError(msg.str());
  }
  optimizer.step(net.parameters(), grad);
  return loss;
}

inline double train_step(QNetwork& net, const QNetwork& target, AdamOptimizer& optimizer,
                         const ReplayBuffer& buffer, const LambdaGrid& grid, const ProjectModel& model,
                         const TrainStepConfig& cfg, Rng& rng) {
  return train_step(net, target, optimizer, buffer, grid.values(), model, cfg, rng);
}

struct QLearnerConfig {
  int hidden_width = 64;
  int hidden_layers = 2;
  Activation activation = Activation::Softsign;
  double output_scale = 0.0;  // <= 0 selects 1 / (1 - gamma)
  double learning_rate = 1e-3;
  // Linear decay to final_learning_rate over decay_updates updates; 0 keeps the rate constant.
  double final_learning_rate = 1e-3;
  std::size_t decay_updates = 0;
  double tau = 0.01;
  std::size_t replay_capacity = 100000;
  // Multipliers sampled by each update; empty means the whole grid. All must
  // lie within the grid's range, which fixes the network's input scaling.
  std::vector<double> train_lambdas;
  TrainStepConfig step;
};

/// Online network, target copy, optimizer and replay memory for one project model.
class QLearner {
 public:
  QLearner(const ProjectModel& model, const LambdaGrid& grid, const QLearnerConfig& cfg, std::uint64_t seed)
      : model_(model), grid_(grid), cfg_(cfg), buffer_(cfg.replay_capacity) {
    QNetworkConfig nc;
    nc.state_count = model.state_count;
    nc.a_max = model.a_max;
    nc.lambda_max = grid.lambda_max();
    nc.hidden_width = cfg.hidden_width;
    nc.hidden_layers = cfg.hidden_layers;
    nc.activation = cfg.activation;
    nc.output_scale = cfg.output_scale > 0.0 ? cfg.output_scale : 1.0 / (1.0 - cfg.step.gamma);
    nc.seed = seed;
    net_ = QNetwork(nc);
    target_ = TargetNetwork{net_, cfg.tau};
    optimizer_ = AdamOptimizer(net_.parameters().size(), {cfg.learning_rate});
    if (cfg_.train_lambdas.empty()) {
      multipliers_ = grid.values();
    } else {
      multipliers_ = cfg_.train_lambdas;
      for (double l : multipliers_) {
        if (!(std::abs(l) <= grid.lambda_max())) throw DomainError("QLearner: training multiplier outside the grid");
      }
    }
  }

  void remember(const Transition& t) {
    model_.check_action(t.a);
    model_.check_state(t.s);
    model_.check_state(t.s_next);
    buffer_.push(t);
  }

  bool ready() const { return buffer_.size() >= cfg_.step.batch_size; }

  /// Q-update followed by a soft target update.
  double update(Rng& rng) {
    if (cfg_.decay_updates > 0) {
      const double frac = std::min(1.0, static_cast<double>(updates_) / static_cast<double>(cfg_.decay_updates));
      optimizer_.set_learning_rate(cfg_.learning_rate + frac * (cfg_.final_learning_rate - cfg_.learning_rate));
    }
    const double loss = train_step(net_, target_.net, optimizer_, buffer_, multipliers_, model_, cfg_.step, rng);
    soft_update(target_, net_);
    ++updates_;
    return loss;
  }

  const QNetwork& network() const { return net_; }
  QNetwork& network() { return net_; }
  const TargetNetwork& target() const { return target_; }
  const ReplayBuffer& memory() const { return buffer_; }
  const ProjectModel& model() const { return model_; }
  std::size_t updates() const { return updates_; }

 private:
  ProjectModel model_;
  LambdaGrid grid_;
  QLearnerConfig cfg_;
  std::vector<double> multipliers_;
  QNetwork net_;
  TargetNetwork target_;
  AdamOptimizer optimizer_;
  ReplayBuffer buffer_;
  std::size_t updates_ = 0;
};

}  // namespace lpca
