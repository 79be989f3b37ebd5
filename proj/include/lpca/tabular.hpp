#pragma once

// Exact per-project solver of the multiplier-parameterized Bellman equation
//   Q(s, a, lambda) = r(s) - lambda c(s, a) + gamma sum_s' T(s, a, s') max_a' Q(s', a', lambda)
// over a discretized action set.

#include <cmath>
#include <cstddef>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/lambda_grid.hpp"
#include "lpca/parallel.hpp"

namespace lpca {

/// Kernel rows, rewards and costs of one project on a fixed action set.
struct DiscretizedProject {
  int states = 0;
  std::vector<double> actions;
  std::vector<double> reward;  // [s]
  std::vector<double> cost;    // [s * A + k]
  std::vector<double> rows;    // [(s * A + k) * S + s']

  DiscretizedProject(const ProjectModel& model, std::vector<double> action_set)
      : states(model.state_count), actions(std::move(action_set)) {
    const std::size_t S = static_cast<std::size_t>(states);
    const std::size_t A = actions.size();
    reward.resize(S);
    cost.resize(S * A);
    rows.resize(S * A * S);
    for (std::size_t s = 0; s < S; ++s) {
      reward[s] = model.reward_at(static_cast<int>(s));
      for (std::size_t k = 0; k < A; ++k) {
        cost[s * A + k] = model.cost_at(static_cast<int>(s), actions[k]);
        const auto row = model.transition_row(static_cast<int>(s), actions[k]);
        for (std::size_t t = 0; t < S; ++t) rows[(s * A + k) * S + t] = row[t];
      }
    }
  }

  std::size_t action_count() const { return actions.size(); }

  double expected(std::size_t s, std::size_t k, const std::vector<double>& v) const {
    const std::size_t S = static_cast<std::size_t>(states);
    const double* row = rows.data() + (s * actions.size() + k) * S;
    double acc = 0.0;
    for (std::size_t t = 0; t < S; ++t) acc += row[t] * v[t];
    return acc;
  }
};

inline std::vector<double> equispaced_actions(double a_max, int count) {
  if (count < 2) throw DomainError("action grid needs at least two points");
  std::vector<double> a(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    a[static_cast<std::size_t>(k)] =
        k == count - 1 ? a_max : a_max * static_cast<double>(k) / static_cast<double>(count - 1);
  }
  return a;
}

/// Q(s, k) and V(s) of the relaxed project MDP at one multiplier.
struct ProjectSolution {
  std::vector<double> q;  // [s * A + k]
  std::vector<double> v;  // [s]
  std::size_t iterations = 0;
};

inline ProjectSolution solve_project_at(const DiscretizedProject& p, double lambda, double gamma, double tol,
                                        std::size_t max_iterations = 100000) {
  if (!(tol > 0.0)) throw DomainError("tabular solver: tol must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("tabular solver: gamma must lie in (0, 1)");
  const std::size_t S = static_cast<std::size_t>(p.states);
  const std::size_t A = p.action_count();
  ProjectSolution sol;
  sol.q.assign(S * A, 0.0);
  sol.v.assign(S, 0.0);
  std::vector<double> next(S);
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    double residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < A; ++k) {
        const double q = p.reward[s] - lambda * p.cost[s * A + k] + gamma * p.expected(s, k, sol.v);
        if (q > best) best = q;
      }
      next[s] = best;
      residual = std::max(residual, std::abs(best - sol.v[s]));
    }
    sol.v.swap(next);
    if (residual < tol) {
      sol.iterations = it;
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < A; ++k) {
          sol.q[s * A + k] = p.reward[s] - lambda * p.cost[s * A + k] + gamma * p.expected(s, k, sol.v);
        }
      }
      return sol;
    }
  }
  throw SolverError("tabular value iteration did not converge within " + std::to_string(max_iterations) +
                    " iterations");
}

/// Tabular Q over (state, action grid, multiplier grid).
class TabularQ {
 public:
  TabularQ(std::size_t states, std::vector<double> actions, std::vector<double> lambdas)
      : states_(states),
        actions_(std::move(actions)),
        lambdas_(std::move(lambdas)),
        values_(states_ * actions_.size() * lambdas_.size(), 0.0) {}

  double& at(std::size_t s, std::size_t k, std::size_t l) {
    return values_[(s * actions_.size() + k) * lambdas_.size() + l];
  }
  double at(std::size_t s, std::size_t k, std::size_t l) const {
    return values_[(s * actions_.size() + k) * lambdas_.size() + l];
  }

  /// max over the action grid.
  double max_value(std::size_t s, std::size_t l) const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < actions_.size(); ++k) best = std::max(best, at(s, k, l));
    return best;
  }

  std::size_t states() const { return states_; }
  const std::vector<double>& actions() const { return actions_; }
  const std::vector<double>& lambdas() const { return lambdas_; }

 private:
  std::size_t states_;
  std::vector<double> actions_;
  std::vector<double> lambdas_;
  std::vector<double> values_;
};

/// Value iteration for every multiplier on the grid (independent solves).
inline TabularQ solve_project_tabular(const ProjectModel& model, const std::vector<double>& lambdas,
                                      int action_grid_size, double gamma, double tol) {
  const DiscretizedProject p(model, equispaced_actions(model.a_max, action_grid_size));
  TabularQ table(static_cast<std::size_t>(model.state_count), p.actions, lambdas);
  const std::size_t S = static_cast<std::size_t>(p.states);
  const std::size_t A = p.action_count();
  parallel_for(lambdas.size(), [&](std::size_t l) {
    const auto sol = solve_project_at(p, lambdas[l], gamma, tol);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < A; ++k) table.at(s, k, l) = sol.q[s * A + k];
    }
  });
  return table;
}

inline TabularQ solve_project_tabular(const ProjectModel& model, const LambdaGrid& grid, int action_grid_size,
                                      double gamma, double tol) {
  return solve_project_tabular(model, grid.values(), action_grid_size, gamma, tol);
}

}  // namespace lpca
