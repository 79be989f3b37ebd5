#pragma once

// Weakly coupled MDP model: independent finite-state projects with
// continuous actions on [0, a_max], coupled by a per-step budget on the
// summed action cost.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "lpca/errors.hpp"
#include "lpca/random.hpp"

namespace lpca {

using JointState = std::vector<int>;
using ActionVector = std::vector<double>;

/// One project of a weakly coupled MDP.
///
/// Projects whose `name` compares equal are assumed to share dynamics and
/// share a Q-network during learning.
struct ProjectModel {
  std::string name;
  int state_count = 0;
  double a_max = 0.0;
  std::function<std::vector<double>(int, double)> kernel;
  std::function<double(int)> reward;
  std::function<double(int, double)> cost;

  void check_state(int s) const {
    if (s < 0 || s >= state_count) {
      throw DomainError(name + ": state " + std::to_string(s) + " outside [0, " +
                        std::to_string(state_count) + ")");
    }
  }

  void check_action(double a) const {
    if (std::isnan(a) || a < 0.0 || a > a_max) {
      throw DomainError(name + ": action " + std::to_string(a) + " outside [0, " +
                        std::to_string(a_max) + "]");
    }
  }

  std::vector<double> transition_row(int s, double a) const {
    check_state(s);
    check_action(a);
    return kernel(s, a);
  }

  double reward_at(int s) const {
    check_state(s);
    return reward(s);
  }

  double cost_at(int s, double a) const {
    check_state(s);
    check_action(a);
    return cost(s, a);
  }
};

enum class EnvKind { TypeA, TypeB, Mixed, SpeedScaling };

inline std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::TypeA: return "type_a";
    case EnvKind::TypeB: return "type_b";
    case EnvKind::Mixed: return "mixed";
    case EnvKind::SpeedScaling: return "speed_scaling";
  }
  return "unknown";
}

inline EnvKind parse_env_kind(std::string_view text) {
  for (EnvKind k : {EnvKind::TypeA, EnvKind::TypeB, EnvKind::Mixed, EnvKind::SpeedScaling}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown environment '" + std::string(text) +
                    "'; valid: type_a, type_b, mixed, speed_scaling");
}

struct EnvironmentSpec {
  std::string kind_name;
  std::vector<ProjectModel> projects;
  double budget = 0.0;
  double gamma = 0.9;

  std::size_t size() const { return projects.size(); }
};

// ---------------------------------------------------------------------------
// Closed-form kernels of the benchmark projects (a in [0, 2]).

namespace detail {
inline void require_action(double a, double a_max, const char* who) {
  if (std::isnan(a) || a < 0.0 || a > a_max) {
    throw DomainError(std::string(who) + ": action " + std::to_string(a) + " outside [0, " +
                      std::to_string(a_max) + "]");
  }
}
inline void require_binary_state(int s, const char* who) {
  if (s != 0 && s != 1) throw DomainError(std::string(who) + ": state must be 0 or 1");
}
}  // namespace detail

inline std::vector<double> type_a_kernel(int s, double a) {
  detail::require_binary_state(s, "type_a_kernel");
  detail::require_action(a, 2.0, "type_a_kernel");
  if (s == 0) {
    const double stay = 0.02 * a * a - 0.09 * a + 0.8;
    return {stay, -0.02 * a * a + 0.09 * a + 0.2};
  }
  const double down = 0.75 * std::exp(-0.947 * a);
  return {down, 1.0 - down};
}

inline std::vector<double> type_b_kernel(int s, double a) {
  detail::require_binary_state(s, "type_b_kernel");
  detail::require_action(a, 2.0, "type_b_kernel");
  const double down = s == 0 ? 0.95 * std::exp(-2.235 * a) : 0.3347 * std::exp(-1.609 * a);
  return {down, 1.0 - down};
}

namespace detail {
inline ProjectModel binary_project(std::string name, std::vector<double> (*kernel)(int, double)) {
  ProjectModel m;
  m.name = std::move(name);
  m.state_count = 2;
  m.a_max = 2.0;
  m.kernel = kernel;
  m.reward = [](int s) { return static_cast<double>(s); };
  m.cost = [](int, double a) { return a; };
  return m;
}
}  // namespace detail

inline ProjectModel type_a_model() { return detail::binary_project("type_a", &type_a_kernel); }
inline ProjectModel type_b_model() { return detail::binary_project("type_b", &type_b_kernel); }

/// Uniformization constants of the speed-scaling queue.
struct SpeedScalingConstants {
  static constexpr int states = 6;
  static constexpr double arrival = 0.9;
  static constexpr double a_max = 2.0;
  static constexpr double rejection_cost = -10.0;
  double nu = 0.0;    // dominating rate max_a (arrival + sqrt(a))
  double beta = 0.0;  // continuous discount rate, nu / gamma - nu

  static SpeedScalingConstants from_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("speed scaling: gamma must lie in (0, 1)");
    SpeedScalingConstants c;
    c.nu = arrival + std::sqrt(a_max);
    c.beta = c.nu / gamma - c.nu;
    return c;
  }

  double normalizer() const { return nu + beta; }
};

/// Six-state uniformized queue with service rate sqrt(a) and a rejection
/// penalty in the full state.
inline ProjectModel speed_scaling_model(double gamma) {
  const auto c = SpeedScalingConstants::from_gamma(gamma);
  constexpr int last = SpeedScalingConstants::states - 1;
  ProjectModel m;
  m.name = "speed_scaling";
  m.state_count = SpeedScalingConstants::states;
  m.a_max = SpeedScalingConstants::a_max;
  m.kernel = [c](int s, double a) {
    if (s < 0 || s > last) throw DomainError("speed_scaling: state outside [0, 5]");
    detail::require_action(a, SpeedScalingConstants::a_max, "speed_scaling");
    const double up = SpeedScalingConstants::arrival / c.nu;
    const double down = std::sqrt(a) / c.nu;
    std::vector<double> row(SpeedScalingConstants::states, 0.0);
    if (s == 0) {
      row[0] = 1.0 - up;
      row[1] = up;
    } else if (s == last) {
      row[last - 1] = down;
      row[last] = 1.0 - down;
    } else {
      row[s - 1] = down;
      row[s] = 1.0 - (SpeedScalingConstants::arrival + std::sqrt(a)) / c.nu;
      row[s + 1] = up;
    }
    return row;
  };
  const double norm = c.normalizer();
  m.reward = [norm](int s) {
    if (s == last) return (-static_cast<double>(last) + SpeedScalingConstants::rejection_cost) / norm;
    return -static_cast<double>(s) / norm;
  };
  m.cost = [norm](int s, double a) { return s > 0 ? a / norm : 0.0; };
  return m;
}

inline void validate_environment(const EnvironmentSpec& env) {
  if (env.projects.empty()) throw ConfigError("environment needs at least one project");
  if (!(env.gamma > 0.0 && env.gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (!(env.budget >= 0.0)) throw DomainError("budget must be nonnegative");
}

/// Largest total cost any joint action can incur.
inline double max_total_cost(const EnvironmentSpec& env) {
  double total = 0.0;
  for (const auto& p : env.projects) {
    double worst = 0.0;
    for (int s = 0; s < p.state_count; ++s) worst = std::max(worst, p.cost(s, p.a_max));
    total += worst;
  }
  return total;
}

/// True when the budget can never bind.
inline bool budget_is_vacuous(const EnvironmentSpec& env) { return env.budget >= max_total_cost(env); }

inline EnvironmentSpec make_environment(EnvKind kind, int n_projects, double budget, double gamma) {
  if (n_projects < 1) throw ConfigError("n_projects must be at least 1");
  if (kind == EnvKind::Mixed && n_projects % 2 != 0) {
    throw ConfigError("mixed environment needs an even number of projects");
  }
  EnvironmentSpec env;
  env.kind_name = std::string(to_string(kind));
  env.budget = budget;
  env.gamma = gamma;
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (!(budget >= 0.0)) throw DomainError("budget must be nonnegative");
  env.projects.reserve(static_cast<std::size_t>(n_projects));
  for (int i = 0; i < n_projects; ++i) {
    switch (kind) {
      case EnvKind::TypeA: env.projects.push_back(type_a_model()); break;
      case EnvKind::TypeB: env.projects.push_back(type_b_model()); break;
      case EnvKind::Mixed:
        env.projects.push_back(i < (n_projects + 1) / 2 ? type_a_model() : type_b_model());
        break;
      case EnvKind::SpeedScaling: env.projects.push_back(speed_scaling_model(gamma)); break;
    }
  }
  return env;
}

/// Groups projects with identical model names.
struct ModelGroups {
  std::vector<std::size_t> model_of_project;
  std::vector<std::size_t> representative;  // first project index of each model

  std::size_t model_count() const { return representative.size(); }
};

inline ModelGroups model_groups(const EnvironmentSpec& env) {
  ModelGroups g;
  for (std::size_t i = 0; i < env.size(); ++i) {
    std::size_t found = g.representative.size();
    for (std::size_t m = 0; m < g.representative.size(); ++m) {
      if (env.projects[g.representative[m]].name == env.projects[i].name) {
        found = m;
        break;
      }
    }
    if (found == g.representative.size()) g.representative.push_back(i);
    g.model_of_project.push_back(found);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Joint state enumeration (mixed radix, project 0 most significant).

class JointStateSpace {
 public:
  JointStateSpace() = default;
  explicit JointStateSpace(const EnvironmentSpec& env) {
    for (const auto& p : env.projects) radix_.push_back(p.state_count);
  }
  explicit JointStateSpace(std::vector<int> radix) : radix_(std::move(radix)) {}

  /// Number of joint states; saturates at SIZE_MAX / 2 instead of overflowing.
  std::size_t size() const {
    std::size_t n = 1;
    for (int r : radix_) {
      if (n > (std::numeric_limits<std::size_t>::max() / 2) / static_cast<std::size_t>(r)) {
        return std::numeric_limits<std::size_t>::max() / 2;
      }
      n *= static_cast<std::size_t>(r);
    }
    return n;
  }

  std::size_t projects() const { return radix_.size(); }
  const std::vector<int>& radix() const { return radix_; }

  std::size_t index(const JointState& s) const {
    if (s.size() != radix_.size()) throw ContractViolation("joint state has wrong length");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < radix_.size(); ++i) {
      if (s[i] < 0 || s[i] >= radix_[i]) throw DomainError("joint state entry out of range");
      idx = idx * static_cast<std::size_t>(radix_[i]) + static_cast<std::size_t>(s[i]);
    }
    return idx;
  }

  JointState state(std::size_t idx) const {
    JointState s(radix_.size());
    for (std::size_t i = radix_.size(); i-- > 0;) {
      s[i] = static_cast<int>(idx % static_cast<std::size_t>(radix_[i]));
      idx /= static_cast<std::size_t>(radix_[i]);
    }
    return s;
  }

 private:
  std::vector<int> radix_;
};

inline std::string format_joint_state(const JointState& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ':';
    out += std::to_string(s[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation.

struct StepResult {
  JointState next_states;
  std::vector<double> rewards;
  std::vector<double> costs;
  bool done = false;
};

inline double total_cost(const EnvironmentSpec& env, const JointState& s, const ActionVector& a) {
  double c = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) c += env.projects[i].cost_at(s[i], a[i]);
  return c;
}

/// Samples an index from a probability row using one uniform draw.
inline int sample_row(const std::vector<double>& row, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < row.size(); ++k) {
    acc += row[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(row.size()) - 1;
}

/// Advances every project one step. Rewards are paid on the pre-transition
/// state; all benchmark tasks are continuing, so done is always false.
inline StepResult step(const EnvironmentSpec& env, const JointState& state, const ActionVector& action,
                       Rng& rng) {
  if (state.size() != env.size() || action.size() != env.size()) {
    throw DomainError("step: state/action length does not match project count");
  }
  StepResult out;
  out.next_states.resize(env.size());
  out.rewards.resize(env.size());
  out.costs.resize(env.size());
  for (std::size_t i = 0; i < env.size(); ++i) {
    const auto& p = env.projects[i];
    const auto row = p.transition_row(state[i], action[i]);
    out.rewards[i] = p.reward(state[i]);
    out.costs[i] = p.cost(state[i], action[i]);
    out.next_states[i] = sample_row(row, uniform01(rng));
  }
  return out;
}

}  // namespace lpca
