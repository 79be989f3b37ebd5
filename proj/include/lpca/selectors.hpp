#pragma once

// Budgeted action selection at a fixed multiplier: maximize sum_i Q_i(s_i, a_i, lambda)
// subject to sum_i c_i(s_i, a_i) <= B and 0 <= a_i <= a_max_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/qprovider.hpp"
#include "lpca/random.hpp"

namespace lpca {

inline constexpr double kBudgetTolerance = 1e-9;

struct DEConfig {
  int population_factor = 15;
  double mutation_f = 0.8;
  double crossover_cr = 0.9;
  int max_generations = 100;
  double tolerance = 1e-6;
  double penalty_constant = 1e6;
  std::uint64_t seed = 0;

  void validate(std::size_t n_projects) const {
    if (population_factor < 1 || static_cast<std::size_t>(population_factor) * n_projects < 4) {
      throw DomainError("DE: population (factor x N) must be at least 4");
    }
    if (!(mutation_f > 0.0 && mutation_f <= 2.0)) throw DomainError("DE: mutation_f must lie in (0, 2]");
    if (!(crossover_cr >= 0.0 && crossover_cr <= 1.0)) throw DomainError("DE: crossover_cr must lie in [0, 1]");
    if (max_generations < 1) throw DomainError("DE: max_generations must be positive");
    if (!(tolerance > 0.0)) throw DomainError("DE: tolerance must be positive");
    if (!(penalty_constant > 0.0)) throw DomainError("DE: penalty_constant must be positive");
  }
};

struct GreedyConfig {
  double delta = 0.05;
  // 0 derives the bound sum_i ceil(a_max_i / delta) + N.
  std::size_t max_iterations_guard = 0;

  void validate(const EnvironmentSpec& env) const {
    if (!(delta > 0.0)) throw DomainError("greedy: delta must be positive");
    for (const auto& p : env.projects) {
      if (delta > p.a_max) throw DomainError("greedy: delta exceeds a_max of project '" + p.name + "'");
    }
  }
};

/// True when a respects the box and the budget (with kBudgetTolerance slack).
inline bool is_feasible(const EnvironmentSpec& env, const JointState& s, const ActionVector& a,
                        double tol = kBudgetTolerance) {
  if (a.size() != env.size() || s.size() != env.size()) return false;
  double c = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const auto& p = env.projects[i];
    if (std::isnan(a[i]) || a[i] < 0.0 || a[i] > p.a_max) return false;
    c += p.cost_at(s[i], a[i]);
  }
  return c <= env.budget + tol;
}

/// Shrinks the positive-cost part of a uniformly until the budget holds.
/// Projects with zero cost at their current action keep it.
inline ActionVector project_to_budget(const EnvironmentSpec& env, const JointState& s, ActionVector a) {
  const std::size_t n = env.size();
  for (std::size_t i = 0; i < n; ++i) a[i] = std::clamp(a[i], 0.0, env.projects[i].a_max);
  auto cost_at_scale = [&](double f) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = env.projects[i];
      const double ci = p.cost_at(s[i], a[i]);
      c += ci > 0.0 ? p.cost_at(s[i], f * a[i]) : ci;
    }
    return c;
  };
  if (cost_at_scale(1.0) <= env.budget) return a;
  double free_cost = 0.0;
  double scaled_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ci = env.projects[i].cost_at(s[i], a[i]);
    (ci > 0.0 ? scaled_cost : free_cost) += ci;
  }
  // Exact for linear costs; bisection covers the rest.
  double f = std::clamp((env.budget - free_cost) / scaled_cost, 0.0, 1.0);
  if (cost_at_scale(f) > env.budget) {
    double lo = 0.0;
    double hi = f;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      (cost_at_scale(mid) <= env.budget ? lo : hi) = mid;
    }
    f = lo;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (env.projects[i].cost_at(s[i], a[i]) > 0.0) a[i] *= f;
  }
  return a;
}

/// Minimization objective: -(sum Q - penalty). Overspending costs the
/// penalty constant; underspending costs the unused budget.
template <QProvider P>
double de_objective(const ActionVector& a, const JointState& s, double lambda, const P& q,
                    const EnvironmentSpec& env, double penalty_constant = 1e6) {
  double q_total = 0.0;
  double c_total = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    q_total += q.q(i, s[i], a[i], lambda);
    c_total += env.projects[i].cost_at(s[i], a[i]);
  }
  double penalty = 0.0;
  if (c_total > env.budget + kBudgetTolerance) {
    penalty = penalty_constant;
  } else if (c_total < env.budget - kBudgetTolerance) {
    penalty = env.budget - c_total;
  }
  return -(q_total - penalty);
}

/// rand/1/bin differential evolution over [0, a_max]^N.
template <QProvider P>
ActionVector differential_evolution(const JointState& s, double lambda, const P& q, const EnvironmentSpec& env,
                                    const DEConfig& cfg) {
  const std::size_t n = env.size();
  cfg.validate(n);
  if (s.size() != n) throw ContractViolation("differential_evolution: state length mismatch");
  const std::size_t pop = static_cast<std::size_t>(cfg.population_factor) * n;
  Rng rng(cfg.seed);

  std::vector<ActionVector> x(pop, ActionVector(n));
  std::vector<double> fx(pop);
  for (std::size_t k = 0; k < pop; ++k) {
    for (std::size_t i = 0; i < n; ++i) x[k][i] = uniform(rng, 0.0, env.projects[i].a_max);
    fx[k] = de_objective(x[k], s, lambda, q, env, cfg.penalty_constant);
  }

  auto spread = [&] {
    double mean = 0.0;
    for (double v : fx) mean += v;
    mean /= static_cast<double>(pop);
    double var = 0.0;
    for (double v : fx) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(pop));
  };

  std::vector<ActionVector> next = x;
  std::vector<double> f_next = fx;
  ActionVector trial(n);
  for (int gen = 0; gen < cfg.max_generations; ++gen) {
    if (spread() < cfg.tolerance) break;
    for (std::size_t k = 0; k < pop; ++k) {
      std::size_t r[3];
      for (int j = 0; j < 3; ++j) {
        std::size_t c;
        do {
          c = uniform_index(rng, pop);
        } while (c == k || (j > 0 && c == r[0]) || (j > 1 && c == r[1]));
        r[j] = c;
      }
      const std::size_t forced = uniform_index(rng, n);
      for (std::size_t i = 0; i < n; ++i) {
        if (i == forced || uniform01(rng) < cfg.crossover_cr) {
          const double v = x[r[0]][i] + cfg.mutation_f * (x[r[1]][i] - x[r[2]][i]);
          trial[i] = std::clamp(v, 0.0, env.projects[i].a_max);
        } else {
          trial[i] = x[k][i];
        }
      }
      const double ft = de_objective(trial, s, lambda, q, env, cfg.penalty_constant);
      if (ft <= fx[k]) {
        next[k] = trial;
        f_next[k] = ft;
      } else {
        next[k] = x[k];
        f_next[k] = fx[k];
      }
    }
    x.swap(next);
    fx.swap(f_next);
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < pop; ++k) {
    if (fx[k] < fx[best]) best = k;
  }
  return project_to_budget(env, s, x[best]);
}

namespace detail {
// Largest step t in [0, step] with cost(a + t) - cost(a) <= room.
inline double fitting_increment(const ProjectModel& p, int s, double a, double step, double room) {
  const double base = p.cost_at(s, a);
  const double full = p.cost_at(s, std::min(p.a_max, a + step)) - base;
  if (full <= room) return step;
  double t = step * room / full;
  if (p.cost_at(s, a + t) - base <= room) return t;
  double lo = 0.0;
  double hi = t;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (p.cost_at(s, a + mid) - base <= room ? lo : hi) = mid;
  }
  return lo;
}
}  // namespace detail

/// Repeatedly raises the action with the largest dQ/da by delta; the last
/// increment is shrunk to exhaust the budget exactly.
template <QProvider P>
ActionVector greedy_select(const JointState& s, double lambda, const P& q, const EnvironmentSpec& env,
                           const GreedyConfig& cfg) {
  cfg.validate(env);
  const std::size_t n = env.size();
  if (s.size() != n) throw ContractViolation("greedy_select: state length mismatch");
  std::size_t guard = cfg.max_iterations_guard;
  if (guard == 0) {
    for (const auto& p : env.projects) guard += static_cast<std::size_t>(std::ceil(p.a_max / cfg.delta));
    guard += n;
  }
  ActionVector a(n, 0.0);
  constexpr double kExhausted = 1e-12;
  for (std::size_t iter = 0;; ++iter) {
    double spent = 0.0;
    for (std::size_t i = 0; i < n; ++i) spent += env.projects[i].cost_at(s[i], a[i]);
    const double remaining = env.budget - spent;
    if (remaining <= kExhausted) break;

    std::size_t pick = n;
    double best_grad = -std::numeric_limits<double>::infinity();
    double pick_step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = env.projects[i];
      if (a[i] >= p.a_max) continue;
      const double step = std::min(cfg.delta, p.a_max - a[i]);
      const double t = detail::fitting_increment(p, s[i], a[i], step, remaining);
      if (!(t > 0.0)) continue;
      const double g = q.dq(i, s[i], a[i], lambda);
      if (g > best_grad) {
        best_grad = g;
        pick = i;
        pick_step = t;
      }
    }
    if (pick == n) break;
    if (iter >= guard) {
      throw ContractViolation("greedy_select: exceeded iteration guard " + std::to_string(guard));
    }
    a[pick] = std::min(env.projects[pick].a_max, a[pick] + pick_step);
  }
  return a;
}

}  // namespace lpca
