#pragma once

// Exact value iteration on the coupled problem for small instances: joint
// states, discretized joint actions, budget enforced per step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/whittle.hpp"

namespace lpca {

enum class BudgetMode { AtMost, Exact };

inline std::string_view to_string(BudgetMode m) { return m == BudgetMode::AtMost ? "at_most" : "exact"; }

struct JointDPOptions {
  BudgetMode mode = BudgetMode::AtMost;
  double tol = 1e-8;
  std::size_t max_iterations = 100000;
  double capacity_guard = 1e7;  // joint states x joint action grid
};

struct JointDPSolution {
  JointStateSpace space;
  std::vector<double> value;                // by joint index
  std::vector<ActionVector> policy;         // by joint index
  double action_step = 0.0;
  BudgetMode mode = BudgetMode::AtMost;
  double residual = 0.0;
  std::size_t iterations = 0;

  double value_at(const JointState& s) const { return value[space.index(s)]; }
  const ActionVector& action_at(const JointState& s) const { return policy[space.index(s)]; }
};

namespace detail {

struct DPProject {
  int states = 0;
  std::vector<double> actions;
  std::vector<double> reward;  // [s]
  std::vector<double> cost;    // [s * K + k]
  std::vector<double> rows;    // [(s * K + k) * S + t]
};

class JointBackup {
 public:
  JointBackup(const EnvironmentSpec& env, const std::vector<DPProject>& projects, BudgetMode mode, double slack)
      : env_(env), projects_(projects), mode_(mode), slack_(slack) {
    const std::size_t n = projects.size();
    sizes_.assign(n + 1, 1);
    for (std::size_t d = n; d-- > 0;) sizes_[d] = sizes_[d + 1] * static_cast<std::size_t>(projects[d].states);
    buffers_.resize(n + 1);
    for (std::size_t d = 1; d <= n; ++d) buffers_[d].resize(sizes_[d]);
    levels_.assign(n, 0);
  }

  // Best expected next value over feasible joint actions; returns false if none.
  bool run(const JointState& s, const std::vector<double>& v, double& best, std::vector<std::size_t>& best_levels) {
    state_ = &s;
    best_ = -std::numeric_limits<double>::infinity();
    found_ = false;
    best_levels_ = &best_levels;
    descend(0, v.data(), 0.0);
    best = best_;
    return found_;
  }

 private:
  void descend(std::size_t d, const double* w, double spent) {
    const std::size_t n = projects_.size();
    if (d == n) {
      if (mode_ == BudgetMode::Exact && std::abs(spent - env_.budget) > slack_) return;
      if (w[0] > best_) {
        best_ = w[0];
        found_ = true;
        *best_levels_ = levels_;
      }
      return;
    }
    const auto& p = projects_[d];
    const auto S = static_cast<std::size_t>(p.states);
    const std::size_t K = p.actions.size();
    const auto s = static_cast<std::size_t>((*state_)[d]);
    const std::size_t rest = sizes_[d + 1];
    double* out = buffers_[d + 1].data();
    for (std::size_t k = 0; k < K; ++k) {
      const double c = spent + p.cost[s * K + k];
      if (c > env_.budget + (mode_ == BudgetMode::Exact ? slack_ : 1e-12)) continue;
      const double* row = p.rows.data() + (s * K + k) * S;
      std::fill(out, out + rest, 0.0);
      for (std::size_t t = 0; t < S; ++t) {
        const double pr = row[t];
        if (pr == 0.0) continue;
        const double* src = w + t * rest;
        for (std::size_t r = 0; r < rest; ++r) out[r] += pr * src[r];
      }
      levels_[d] = k;
      descend(d + 1, out, c);
    }
  }

  const EnvironmentSpec& env_;
  const std::vector<DPProject>& projects_;
  BudgetMode mode_;
  double slack_;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<double>> buffers_;
  std::vector<std::size_t> levels_;
  const JointState* state_ = nullptr;
  double best_ = 0.0;
  bool found_ = false;
  std::vector<std::size_t>* best_levels_ = nullptr;
};

}  // namespace detail

/// Joint state count times the unfiltered joint action grid size.
inline double joint_dp_work(const EnvironmentSpec& env, double action_step) {
  double work = static_cast<double>(JointStateSpace(env).size());
  for (const auto& p : env.projects) work *= static_cast<double>(action_levels(p.a_max, action_step).size());
  return work;
}

inline JointDPSolution solve_joint_dp(const EnvironmentSpec& env, double action_step, const JointDPOptions& opt = {}) {
  validate_environment(env);
  if (!(opt.tol > 0.0)) throw DomainError("joint DP: tol must be positive");
  const double work = joint_dp_work(env, action_step);
  if (work > opt.capacity_guard) {
    std::ostringstream msg;
    msg << "joint DP: " << work << " state-action pairs exceed the guard of " << opt.capacity_guard;
    throw CapacityError(msg.str());
  }

  std::vector<detail::DPProject> projects;
  for (const auto& m : env.projects) {
    detail::DPProject p;
    p.states = m.state_count;
    p.actions = action_levels(m.a_max, action_step);
    const auto S = static_cast<std::size_t>(p.states);
    const std::size_t K = p.actions.size();
    p.reward.resize(S);
    p.cost.resize(S * K);
    p.rows.resize(S * K * S);
    for (std::size_t s = 0; s < S; ++s) {
      p.reward[s] = m.reward_at(static_cast<int>(s));
      for (std::size_t k = 0; k < K; ++k) {
        p.cost[s * K + k] = m.cost_at(static_cast<int>(s), p.actions[k]);
        const auto row = m.transition_row(static_cast<int>(s), p.actions[k]);
        std::copy(row.begin(), row.end(), p.rows.begin() + static_cast<std::ptrdiff_t>((s * K + k) * S));
      }
    }
    projects.push_back(std::move(p));
  }

  JointDPSolution sol;
  sol.space = JointStateSpace(env);
  sol.action_step = action_step;
  sol.mode = opt.mode;
  const std::size_t J = sol.space.size();
  std::vector<JointState> states(J);
  std::vector<double> reward(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    states[j] = sol.space.state(j);
    for (std::size_t i = 0; i < env.size(); ++i) reward[j] += projects[i].reward[static_cast<std::size_t>(states[j][i])];
  }

  const double slack = action_step * static_cast<double>(env.size());
  detail::JointBackup backup(env, projects, opt.mode, slack);
  std::vector<double> v(J, 0.0), next(J, 0.0);
  std::vector<std::vector<std::size_t>> choice(J, std::vector<std::size_t>(env.size(), 0));
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    double residual = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      double ev = 0.0;
      if (!backup.run(states[j], v, ev, choice[j])) {
        throw SolverError("joint DP: no action satisfies the exact budget in state " + format_joint_state(states[j]) +
                          "; use the at-most budget mode");
      }
      next[j] = reward[j] + env.gamma * ev;
      residual = std::max(residual, std::abs(next[j] - v[j]));
    }
    v.swap(next);
    if (residual < opt.tol) {
      sol.residual = residual;
      sol.iterations = it;
      sol.value = std::move(v);
      sol.policy.resize(J);
      for (std::size_t j = 0; j < J; ++j) {
        // Recompute the greedy action against the converged values.
        double ev = 0.0;
        backup.run(states[j], sol.value, ev, choice[j]);
        ActionVector a(env.size());
        for (std::size_t i = 0; i < env.size(); ++i) a[i] = projects[i].actions[choice[j][i]];
        sol.policy[j] = std::move(a);
      }
      return sol;
    }
  }
  throw SolverError("joint DP: value iteration did not converge within " + std::to_string(opt.max_iterations) +
                    " iterations");
}

// ---------------------------------------------------------------------------
// Golden-file format, 12 significant digits:
//   joint_dp mode <at_most|exact> action_step <x> projects <N> states <J>
//   joint_state,value,a_1,...,a_N
//   ...

inline void write_joint_dp(std::ostream& out, const JointDPSolution& sol) {
  const std::size_t n = sol.space.projects();
  out << std::setprecision(12);
  out << "joint_dp mode " << to_string(sol.mode) << " action_step " << sol.action_step << " projects " << n
      << " states " << sol.value.size() << '\n';
  out << "joint_state,value";
  for (std::size_t i = 1; i <= n; ++i) out << ",a_" << i;
  out << '\n';
  for (std::size_t j = 0; j < sol.value.size(); ++j) {
    out << format_joint_state(sol.space.state(j)) << ',' << sol.value[j];
    for (double a : sol.policy[j]) out << ',' << a;
    out << '\n';
  }
}

struct JointDPGolden {
  std::string mode;
  double action_step = 0.0;
  std::vector<std::string> states;
  std::vector<double> values;
  std::vector<ActionVector> actions;
};

inline JointDPGolden read_joint_dp(std::istream& in) {
  JointDPGolden g;
  std::string tag, key;
  std::size_t n = 0, count = 0;
  in >> tag >> key >> g.mode >> key >> g.action_step >> key >> n >> key >> count;
  if (!in || tag != "joint_dp") throw ConfigError("joint DP golden: bad header");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  for (std::size_t r = 0; r < count; ++r) {
    if (!std::getline(in, line)) throw ConfigError("joint DP golden: truncated");
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    g.states.push_back(cell);
    std::getline(ss, cell, ',');
    g.values.push_back(std::stod(cell));
    ActionVector a;
    while (std::getline(ss, cell, ',')) a.push_back(std::stod(cell));
    if (a.size() != n) throw ConfigError("joint DP golden: action width mismatch");
    g.actions.push_back(std::move(a));
  }
  return g;
}

}  // namespace lpca
