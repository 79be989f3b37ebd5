#pragma once

// Feedforward approximator of the multiplier-parameterized project Q-value
// Q(s, a, lambda).
//
// Input is one-hot(state) ++ [a / a_max] ++ [lambda / lambda_max]; hidden
// layers use a smooth activation so that dQ/da is informative; the scalar
// output is multiplied by a fixed output scale.
//
// Every evaluation path (single, batched, training) runs the same
// per-sample kernel, so results never depend on how calls are grouped.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "lpca/errors.hpp"
#include "lpca/lambda_grid.hpp"
#include "lpca/random.hpp"

namespace lpca {

namespace detail {

template <int N>
inline void accumulate_rows_fixed(double* __restrict z, const double* __restrict rows, const double* __restrict x,
                                  int count) {
  double acc[N];
  for (int j = 0; j < N; ++j) acc[j] = z[j];
  for (int k = 0; k < count; ++k) {
    const double xk = x[k];
    const double* __restrict row = rows + static_cast<std::size_t>(k) * N;
    for (int j = 0; j < N; ++j) acc[j] += row[j] * xk;
  }
  for (int j = 0; j < N; ++j) z[j] = acc[j];
}

/// z[j] += sum_k rows[k][j] * x[k] for j < width, k ascending.
inline void accumulate_rows(double* __restrict z, const double* __restrict rows, const double* __restrict x,
                            int count, int width) {
  switch (width) {
    case 16: accumulate_rows_fixed<16>(z, rows, x, count); return;
    case 32: accumulate_rows_fixed<32>(z, rows, x, count); return;
    case 64: accumulate_rows_fixed<64>(z, rows, x, count); return;
    default: break;
  }
  for (int k = 0; k < count; ++k) {
    const double xk = x[k];
    const double* __restrict row = rows + static_cast<std::size_t>(k) * width;
    for (int j = 0; j < width; ++j) z[j] += row[j] * xk;
  }
}

}  // namespace detail

/// Hidden-layer nonlinearities. Softsign is the algebraic member of the
/// tanh family, z / sqrt(1 + z^2): smooth, odd, bounded, and several
/// times cheaper than tanh because it needs no exponential.
enum class Activation { Softsign, Tanh, Silu };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Softsign: return "softsign";
    case Activation::Tanh: return "tanh";
    case Activation::Silu: return "silu";
  }
  return "unknown";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "softsign") return Activation::Softsign;
  if (s == "tanh") return Activation::Tanh;
  if (s == "silu") return Activation::Silu;
  throw ConfigError("unknown activation '" + s + "'; valid: softsign, tanh, silu");
}

struct QInput {
  int s = 0;
  double a = 0.0;
  double lambda = 0.0;
};

struct QNetworkConfig {
  int state_count = 2;
  double a_max = 2.0;
  double lambda_max = 5.0;
  int hidden_width = 64;
  int hidden_layers = 2;
  double output_scale = 10.0;
  Activation activation = Activation::Softsign;
  bool zero_output_layer = true;
  std::uint64_t seed = 0;
};

class QNetwork {
 public:
  QNetwork() = default;

  explicit QNetwork(const QNetworkConfig& cfg)
      : state_count_(cfg.state_count),
        a_max_(cfg.a_max),
        lambda_max_(cfg.lambda_max),
        output_scale_(cfg.output_scale),
        activation_(cfg.activation) {
    if (cfg.state_count < 1) throw DomainError("QNetwork: state_count must be positive");
    if (!(cfg.a_max > 0.0)) throw DomainError("QNetwork: a_max must be positive");
    if (!(cfg.lambda_max > 0.0)) throw DomainError("QNetwork: lambda_max must be positive");
    if (cfg.hidden_layers < 1 || cfg.hidden_width < 1) throw DomainError("QNetwork: empty hidden layers");
    std::vector<int> widths{cfg.state_count + 2};
    for (int l = 0; l < cfg.hidden_layers; ++l) widths.push_back(cfg.hidden_width);
    widths.push_back(1);
    set_shape(widths);

    Rng rng(cfg.seed);
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const bool last = l + 1 == layer_count();
      auto w = weights(l);
      if (last && cfg.zero_output_layer) continue;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in(l) + fan_out(l)));
      for (double& x : w) x = uniform(rng, -limit, limit);
    }
  }

  std::size_t layer_count() const { return widths_.empty() ? 0 : widths_.size() - 1; }
  int fan_in(std::size_t l) const { return widths_[l]; }
  int fan_out(std::size_t l) const { return widths_[l + 1]; }
  const std::vector<int>& widths() const { return widths_; }

  /// Weight matrix of layer l, shape (fan_in, fan_out), row-major.
  std::span<double> weights(std::size_t l) {
    return {params_.data() + offsets_[l], static_cast<std::size_t>(fan_in(l) * fan_out(l))};
  }
  std::span<const double> weights(std::size_t l) const {
    return {params_.data() + offsets_[l], static_cast<std::size_t>(fan_in(l) * fan_out(l))};
  }
  std::span<double> biases(std::size_t l) {
    return {params_.data() + offsets_[l] + fan_in(l) * fan_out(l), static_cast<std::size_t>(fan_out(l))};
  }
  std::span<const double> biases(std::size_t l) const {
    return {params_.data() + offsets_[l] + fan_in(l) * fan_out(l), static_cast<std::size_t>(fan_out(l))};
  }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  int state_count() const { return state_count_; }
  double a_max() const { return a_max_; }
  double lambda_max() const { return lambda_max_; }
  double output_scale() const { return output_scale_; }
  Activation activation() const { return activation_; }

  bool same_shape(const QNetwork& other) const { return widths_ == other.widths_; }

  double forward(int s, double a, double lambda) const {
    Workspace& ws = workspace();
    return run_forward({s, a, lambda}, ws);
  }

  void forward_batch(std::span<const QInput> inputs, std::span<double> out) const {
    Workspace& ws = workspace();
    for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = run_forward(inputs[i], ws);
  }

  /// dQ/da in natural action units, by reverse-mode differentiation.
  double grad_action(int s, double a, double lambda) const {
    Workspace& ws = workspace();
    run_forward({s, a, lambda}, ws);
    run_backward(ws, output_scale_, nullptr);
    const auto w0 = weights(0);
    const int width = fan_out(0);
    const double* w_action = w0.data() + static_cast<std::size_t>(state_count_) * width;
    return dot(w_action, ws.delta[0].data(), width) / a_max_;
  }

  /// Accumulates weight * d(Q - target)^2 / d(params) into grad and returns
  /// the squared error.
  double accumulate_squared_error_gradient(const QInput& in, double target, double weight,
                                           std::span<double> grad) const {
    Workspace& ws = workspace();
    const double q = run_forward(in, ws);
    const double err = q - target;
    run_backward(ws, weight * 2.0 * err * output_scale_, grad.data());
    return err * err;
  }

  /// Batched form of accumulate_squared_error_gradient; returns the summed
  /// squared error.
  double accumulate_batch_squared_error_gradient(std::span<const QInput> inputs, std::span<const double> targets,
                                                 double weight, std::span<double> grad) const {
    if (inputs.size() != targets.size()) throw ContractViolation("QNetwork: inputs/targets size mismatch");
    if (grad.size() != params_.size()) throw ContractViolation("QNetwork: gradient size mismatch");
    return run_batch_gradient(inputs, targets, weight, grad.data());
  }

  /// Adds dQ/d(params) * seed into grad (seed = dL/dQ).
  void accumulate_output_gradient(const QInput& in, double seed, std::span<double> grad) const {
    Workspace& ws = workspace();
    run_forward(in, ws);
    run_backward(ws, seed * output_scale_, grad.data());
  }

  void check_input(const QInput& in) const {
    if (in.s < 0 || in.s >= state_count_) throw DomainError("QNetwork: state index out of range");
    if (!(in.a >= 0.0 && in.a <= a_max_)) throw DomainError("QNetwork: action outside [0, a_max]");
    if (!(std::abs(in.lambda) <= lambda_max_ * (1.0 + 1e-12))) {
      throw DomainError("QNetwork: lambda outside [-lambda_max, lambda_max]");
    }
  }

  // Used by checkpoint loading.
  static QNetwork from_parts(int state_count, double a_max, double lambda_max, double output_scale,
                             Activation act, const std::vector<int>& widths, std::vector<double> params) {
    QNetwork n;
    n.state_count_ = state_count;
    n.a_max_ = a_max;
    n.lambda_max_ = lambda_max;
    n.output_scale_ = output_scale;
    n.activation_ = act;
    n.set_shape(widths);
    if (params.size() != n.params_.size()) throw ContractViolation("QNetwork: parameter count mismatch");
    n.params_ = std::move(params);
    return n;
  }

 private:
  struct Workspace {
    std::vector<std::vector<double>> pre;    // pre-activations per hidden layer
    std::vector<std::vector<double>> post;   // activations per hidden layer
    std::vector<std::vector<double>> delta;  // dL/d(pre-activation) per hidden layer
    QInput input;
  };

  Workspace& workspace() const {
    thread_local Workspace ws;
    const std::size_t hidden = layer_count() - 1;
    if (ws.pre.size() != hidden) {
      ws.pre.resize(hidden);
      ws.post.resize(hidden);
      ws.delta.resize(hidden);
    }
    for (std::size_t l = 0; l < hidden; ++l) {
      const auto w = static_cast<std::size_t>(fan_out(l));
      if (ws.pre[l].size() != w) {
        ws.pre[l].assign(w, 0.0);
        ws.post[l].assign(w, 0.0);
        ws.delta[l].assign(w, 0.0);
      }
    }
    return ws;
  }

  void set_shape(const std::vector<int>& widths) {
    if (widths.size() < 3 || widths.back() != 1 || widths.front() != state_count_ + 2) {
      throw ContractViolation("QNetwork: invalid layer widths");
    }
    widths_ = widths;
    offsets_.clear();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(total);
      total += static_cast<std::size_t>(widths_[l] * widths_[l + 1] + widths_[l + 1]);
    }
    params_.assign(total, 0.0);
  }

  void activate(const double* z, double* h, int n) const {
    switch (activation_) {
      case Activation::Softsign:
        for (int j = 0; j < n; ++j) h[j] = z[j] / std::sqrt(1.0 + z[j] * z[j]);
        break;
      case Activation::Tanh:
        for (int j = 0; j < n; ++j) h[j] = std::tanh(z[j]);
        break;
      case Activation::Silu:
        for (int j = 0; j < n; ++j) h[j] = z[j] / (1.0 + std::exp(-z[j]));
        break;
    }
  }

  // d <- d * f'(z), with h = f(z).
  void scale_by_derivative(const double* z, const double* h, double* d, int n) const {
    switch (activation_) {
      case Activation::Softsign:
        for (int j = 0; j < n; ++j) {
          const double r = 1.0 / std::sqrt(1.0 + z[j] * z[j]);
          d[j] *= r * r * r;
        }
        break;
      case Activation::Tanh:
        for (int j = 0; j < n; ++j) d[j] *= 1.0 - h[j] * h[j];
        break;
      case Activation::Silu:
        for (int j = 0; j < n; ++j) {
          const double sig = 1.0 / (1.0 + std::exp(-z[j]));
          d[j] *= sig * (1.0 + z[j] * (1.0 - sig));
        }
        break;
    }
  }

  double run_forward(const QInput& in, Workspace& ws) const {
    check_input(in);
    ws.input = in;
    const double a_n = in.a / a_max_;
    const double l_n = in.lambda / lambda_max_;

    // First layer: the one-hot block reduces to a row lookup.
    {
      const int width = fan_out(0);
      const auto w = weights(0);
      const auto b = biases(0);
      const double* w_state = w.data() + static_cast<std::size_t>(in.s) * width;
      const double* w_action = w.data() + static_cast<std::size_t>(state_count_) * width;
      const double* w_lambda = w_action + width;
      double* z = ws.pre[0].data();
      double* h = ws.post[0].data();
      for (int j = 0; j < width; ++j) z[j] = b[j] + w_state[j] + w_action[j] * a_n + w_lambda[j] * l_n;
      activate(z, h, width);
    }
    const std::size_t hidden = layer_count() - 1;
    for (std::size_t l = 1; l < hidden; ++l) {
      const int n_in = fan_in(l);
      const int n_out = fan_out(l);
      const auto w = weights(l);
      const auto b = biases(l);
      const double* __restrict h_prev = ws.post[l - 1].data();
      double* __restrict z = ws.pre[l].data();
      double* h = ws.post[l].data();
      for (int j = 0; j < n_out; ++j) z[j] = b[j];
      detail::accumulate_rows(z, w.data(), h_prev, n_in, n_out);
      activate(z, h, n_out);
    }
    const std::size_t last = layer_count() - 1;
    const auto w = weights(last);
    const double* h_prev = ws.post[hidden - 1].data();
    double y = biases(last)[0];
    for (int k = 0; k < fan_in(last); ++k) y += w[k] * h_prev[k];
    return output_scale_ * y;
  }

  static double dot(const double* __restrict a, const double* __restrict b, int n) {
    // Four fixed partial sums: vectorizable and independent of call site.
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      for (int u = 0; u < 4; ++u) acc[u] += a[j + u] * b[j + u];
    }
    for (; j < n; ++j) acc[0] += a[j] * b[j];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
  }

  // Back-propagates dL/dy (y = raw output) through the cached forward pass
  // into ws.delta (dL/d pre-activation of every hidden layer).
  void propagate_deltas(Workspace& ws, double dy) const {
    const std::size_t hidden = layer_count() - 1;
    {
      const auto w = weights(hidden);
      const int n_in = fan_in(hidden);
      double* d_prev = ws.delta[hidden - 1].data();
      for (int k = 0; k < n_in; ++k) d_prev[k] = w[k] * dy;
      scale_by_derivative(ws.pre[hidden - 1].data(), ws.post[hidden - 1].data(), d_prev, n_in);
    }
    for (std::size_t l = hidden - 1; l >= 1; --l) {
      const int n_in = fan_in(l);
      const int n_out = fan_out(l);
      const auto w = weights(l);
      const double* d = ws.delta[l].data();
      double* d_prev = ws.delta[l - 1].data();
      for (int k = 0; k < n_in; ++k) d_prev[k] = dot(w.data() + static_cast<std::size_t>(k) * n_out, d, n_out);
      scale_by_derivative(ws.pre[l - 1].data(), ws.post[l - 1].data(), d_prev, n_in);
    }
  }

  // Adds dy * dy/d(params) for the sample cached in ws (deltas already propagated).
  void accumulate_parameter_gradient(const Workspace& ws, double dy, double* grad) const {
    const std::size_t hidden = layer_count() - 1;
    {
      const int n_in = fan_in(hidden);
      const double* h_prev = ws.post[hidden - 1].data();
      double* gw = grad + offsets_[hidden];
      for (int k = 0; k < n_in; ++k) gw[k] += h_prev[k] * dy;
      gw[n_in] += dy;
    }
    for (std::size_t l = hidden - 1; l >= 1; --l) {
      const int n_in = fan_in(l);
      const int n_out = fan_out(l);
      const double* d = ws.delta[l].data();
      const double* h_prev = ws.post[l - 1].data();
      double* gw = grad + offsets_[l];
      double* gb = gw + static_cast<std::size_t>(n_in) * n_out;
      for (int k = 0; k < n_in; ++k) {
        const double hk = h_prev[k];
        double* row = gw + static_cast<std::size_t>(k) * n_out;
        for (int j = 0; j < n_out; ++j) row[j] += hk * d[j];
      }
      for (int j = 0; j < n_out; ++j) gb[j] += d[j];
    }
    accumulate_first_layer(ws.input, ws.delta[0].data(), grad);
  }

  void accumulate_first_layer(const QInput& in, const double* d, double* grad) const {
    const int width = fan_out(0);
    double* gw = grad + offsets_[0];
    double* g_state = gw + static_cast<std::size_t>(in.s) * width;
    double* g_action = gw + static_cast<std::size_t>(state_count_) * width;
    double* g_lambda = g_action + width;
    double* gb = gw + static_cast<std::size_t>(fan_in(0)) * width;
    const double a_n = in.a / a_max_;
    const double l_n = in.lambda / lambda_max_;
    for (int j = 0; j < width; ++j) {
      g_state[j] += d[j];
      g_action[j] += a_n * d[j];
      g_lambda[j] += l_n * d[j];
      gb[j] += d[j];
    }
  }

  void run_backward(Workspace& ws, double dy, double* grad) const {
    propagate_deltas(ws, dy);
    if (grad) accumulate_parameter_gradient(ws, dy, grad);
  }

  // Per-sample activations and deltas of a whole batch, so that the
  // weight-gradient outer products can be accumulated row by row.
  struct Tape {
    std::vector<std::vector<double>> post;   // [layer][n * width + j]
    std::vector<std::vector<double>> delta;  // [layer][n * width + j]
    std::vector<std::vector<double>> transposed;  // [layer][j * fan_in + k]
    std::vector<double> dy;
  };

  double run_batch_gradient(std::span<const QInput> inputs, std::span<const double> targets, double weight,
                            double* grad) const {
    thread_local Tape tape;
    Workspace& ws = workspace();
    const std::size_t hidden = layer_count() - 1;
    const std::size_t n = inputs.size();
    tape.post.resize(hidden);
    tape.delta.resize(hidden);
    tape.transposed.resize(hidden);
    for (std::size_t l = 0; l < hidden; ++l) {
      tape.post[l].resize(n * static_cast<std::size_t>(fan_out(l)));
      tape.delta[l].resize(n * static_cast<std::size_t>(fan_out(l)));
    }
    tape.dy.resize(n);
    // Transposed hidden weights turn delta propagation into row accumulation.
    for (std::size_t l = 1; l < hidden; ++l) {
      const int n_in = fan_in(l);
      const int n_out = fan_out(l);
      const auto w = weights(l);
      auto& t = tape.transposed[l];
      t.resize(w.size());
      for (int k = 0; k < n_in; ++k) {
        for (int j = 0; j < n_out; ++j) t[static_cast<std::size_t>(j) * n_in + k] = w[static_cast<std::size_t>(k) * n_out + j];
      }
    }

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = run_forward(inputs[i], ws);
      const double err = q - targets[i];
      sse += err * err;
      const double dy = weight * 2.0 * err * output_scale_;
      tape.dy[i] = dy;
      {
        const auto w = weights(hidden);
        const int n_in = fan_in(hidden);
        double* d = tape.delta[hidden - 1].data() + i * static_cast<std::size_t>(n_in);
        for (int k = 0; k < n_in; ++k) d[k] = w[k] * dy;
        scale_by_derivative(ws.pre[hidden - 1].data(), ws.post[hidden - 1].data(), d, n_in);
      }
      for (std::size_t l = hidden - 1; l >= 1; --l) {
        const int n_in = fan_in(l);
        const int n_out = fan_out(l);
        const double* d = tape.delta[l].data() + i * static_cast<std::size_t>(n_out);
        double* d_prev = tape.delta[l - 1].data() + i * static_cast<std::size_t>(n_in);
        std::fill(d_prev, d_prev + n_in, 0.0);
        detail::accumulate_rows(d_prev, tape.transposed[l].data(), d, n_out, n_in);
        scale_by_derivative(ws.pre[l - 1].data(), ws.post[l - 1].data(), d_prev, n_in);
      }
      for (std::size_t l = 0; l < hidden; ++l) {
        const auto w = static_cast<std::size_t>(fan_out(l));
        std::copy(ws.post[l].begin(), ws.post[l].end(), tape.post[l].begin() + static_cast<std::ptrdiff_t>(i * w));
      }
      accumulate_first_layer(inputs[i], tape.delta[0].data() + i * static_cast<std::size_t>(fan_out(0)), grad);
    }

    {
      const int n_in = fan_in(hidden);
      double* gw = grad + offsets_[hidden];
      const double* post = tape.post[hidden - 1].data();
      for (std::size_t i = 0; i < n; ++i) {
        const double dy = tape.dy[i];
        const double* h = post + i * static_cast<std::size_t>(n_in);
        for (int k = 0; k < n_in; ++k) gw[k] += h[k] * dy;
        gw[n_in] += dy;
      }
    }
    for (std::size_t l = hidden - 1; l >= 1; --l) {
      const int n_in = fan_in(l);
      const int n_out = fan_out(l);
      const double* post = tape.post[l - 1].data();
      const double* delta = tape.delta[l].data();
      double* gw = grad + offsets_[l];
      double* gb = gw + static_cast<std::size_t>(n_in) * n_out;
      constexpr std::size_t kBlock = 32;
      double column[kBlock];
      for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
        const std::size_t i1 = std::min(n, i0 + kBlock);
        const int count = static_cast<int>(i1 - i0);
        const double* d_block = delta + i0 * static_cast<std::size_t>(n_out);
        for (int k = 0; k < n_in; ++k) {
          for (int c = 0; c < count; ++c) column[c] = post[(i0 + static_cast<std::size_t>(c)) * n_in + k];
          detail::accumulate_rows(gw + static_cast<std::size_t>(k) * n_out, d_block, column, count, n_out);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double* d = delta + i * static_cast<std::size_t>(n_out);
        for (int j = 0; j < n_out; ++j) gb[j] += d[j];
      }
    }
    return sse;
  }

  int state_count_ = 0;
  double a_max_ = 1.0;
  double lambda_max_ = 1.0;
  double output_scale_ = 1.0;
  Activation activation_ = Activation::Softsign;
  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Adaptive moment estimation over a flat parameter vector.
class AdamOptimizer {
 public:
  struct Config {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  AdamOptimizer() = default;
  AdamOptimizer(std::size_t n, Config cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw ContractViolation("AdamOptimizer: size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double step = cfg_.learning_rate * std::sqrt(c2) / c1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= step * m_[i] / (std::sqrt(v_[i]) + cfg_.epsilon * std::sqrt(c2));
    }
  }

  std::size_t steps() const { return t_; }
  double learning_rate() const { return cfg_.learning_rate; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

 private:
  Config cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint I/O.
//
// Text container, one item per line:
//
//   lpca-qnet 1
//   lambda_input 1
//   state_count <int>
//   a_max <hexfloat>
//   lambda_max <hexfloat>
//   lambda_points <int>
//   output_scale <hexfloat>
//   activation softsign|tanh|silu
//   layers <L>
//   layer <l> <fan_in> <fan_out>
//   <fan_in lines of fan_out hexfloats: weight matrix, row-major>
//   <one line of fan_out hexfloats: bias>
//   ... repeated for every layer ...
//   end
//
// Hexfloat (%a) round-trips every double exactly.

struct Checkpoint {
  QNetwork net;
  LambdaGrid grid;
};

namespace detail {
inline std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

inline double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ConfigError("checkpoint: bad number '" + tok + "'");
  return v;
}

inline std::string expect_key(std::istream& in, const std::string& key) {
  std::string k, v;
  if (!(in >> k >> v) || k != key) throw ConfigError("checkpoint: expected key '" + key + "'");
  return v;
}
}  // namespace detail

inline void write_checkpoint(std::ostream& out, const QNetwork& net, const LambdaGrid& grid) {
  if (grid.lambda_max() != net.lambda_max()) {
    throw ContractViolation("write_checkpoint: grid and network disagree on lambda_max");
  }
  out << "lpca-qnet 1\n";
  out << "lambda_input 1\n";
  out << "state_count " << net.state_count() << "\n";
  out << "a_max " << detail::hexfloat(net.a_max()) << "\n";
  out << "lambda_max " << detail::hexfloat(grid.lambda_max()) << "\n";
  out << "lambda_points " << grid.size() << "\n";
  out << "output_scale " << detail::hexfloat(net.output_scale()) << "\n";
  out << "activation " << to_string(net.activation()) << "\n";
  out << "layers " << net.layer_count() << "\n";
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    out << "layer " << l << ' ' << net.fan_in(l) << ' ' << net.fan_out(l) << "\n";
    const auto w = net.weights(l);
    for (int r = 0; r < net.fan_in(l); ++r) {
      for (int c = 0; c < net.fan_out(l); ++c) {
        if (c) out << ' ';
        out << detail::hexfloat(w[static_cast<std::size_t>(r) * net.fan_out(l) + c]);
      }
      out << "\n";
    }
    const auto b = net.biases(l);
    for (int c = 0; c < net.fan_out(l); ++c) {
      if (c) out << ' ';
      out << detail::hexfloat(b[c]);
    }
    out << "\n";
  }
  out << "end\n";
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "lpca-qnet") throw ConfigError("checkpoint: bad magic");
  if (version != "1") throw ConfigError("checkpoint: unsupported version " + version);
  if (detail::expect_key(in, "lambda_input") != "1") {
    throw ConfigError("checkpoint: only lambda-as-input networks are supported");
  }
  const int state_count = std::stoi(detail::expect_key(in, "state_count"));
  const double a_max = detail::parse_double(detail::expect_key(in, "a_max"));
  const double lambda_max = detail::parse_double(detail::expect_key(in, "lambda_max"));
  const auto points = static_cast<std::size_t>(std::stoul(detail::expect_key(in, "lambda_points")));
  const double scale = detail::parse_double(detail::expect_key(in, "output_scale"));
  const Activation act = parse_activation(detail::expect_key(in, "activation"));
  const auto layers = static_cast<std::size_t>(std::stoul(detail::expect_key(in, "layers")));

  std::vector<int> widths;
  std::vector<double> params;
  for (std::size_t l = 0; l < layers; ++l) {
    std::string tag;
    std::size_t idx = 0;
    int n_in = 0, n_out = 0;
    if (!(in >> tag >> idx >> n_in >> n_out) || tag != "layer" || idx != l) {
      throw ConfigError("checkpoint: malformed layer header");
    }
    if (l == 0) widths.push_back(n_in);
    if (widths.back() != n_in) throw ConfigError("checkpoint: layer widths do not chain");
    widths.push_back(n_out);
    const std::size_t count = static_cast<std::size_t>(n_in) * n_out + n_out;
    for (std::size_t i = 0; i < count; ++i) {
      std::string tok;
      if (!(in >> tok)) throw ConfigError("checkpoint: truncated weights");
      params.push_back(detail::parse_double(tok));
    }
  }
  std::string tail;
  if (!(in >> tail) || tail != "end") throw ConfigError("checkpoint: missing end marker");
  return {QNetwork::from_parts(state_count, a_max, lambda_max, scale, act, widths, std::move(params)),
          LambdaGrid(lambda_max, points)};
}

inline void save_checkpoint(const std::string& path, const QNetwork& net, const LambdaGrid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, net, grid);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace lpca
