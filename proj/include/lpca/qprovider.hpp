#pragma once

// Per-project Q sources consumed by the selectors and the multiplier search.
//
// A provider answers, for project i in state s:
//   q(i, s, a, lambda)       Q_i(s, a, lambda)
//   dq(i, s, a, lambda)      dQ_i/da
//   max_q(i, s, lambda)      max over the provider's action grid
//   model_of(i)              projects mapping to the same id share Q

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/qlearning.hpp"
#include "lpca/qnet.hpp"
#include "lpca/tabular.hpp"

namespace lpca {

template <class P>
concept QProvider = requires(const P& p, std::size_t i, int s, double a, double lambda) {
  { p.q(i, s, a, lambda) } -> std::convertible_to<double>;
  { p.dq(i, s, a, lambda) } -> std::convertible_to<double>;
  { p.max_q(i, s, lambda) } -> std::convertible_to<double>;
  { p.model_of(i) } -> std::convertible_to<std::size_t>;
  { p.project_count() } -> std::convertible_to<std::size_t>;
};

/// Frozen copies of one network per distinct project model.
class NetworkQ {
 public:
  NetworkQ(const EnvironmentSpec& env, std::vector<QNetwork> nets, int action_grid_size = 51)
      : groups_(model_groups(env)), nets_(std::move(nets)), action_grid_size_(action_grid_size) {
    if (nets_.size() != groups_.model_count()) {
      throw ContractViolation("NetworkQ: need one network per distinct project model");
    }
    for (std::size_t m = 0; m < nets_.size(); ++m) {
      const auto& p = env.projects[groups_.representative[m]];
      if (nets_[m].state_count() != p.state_count || nets_[m].a_max() != p.a_max) {
        throw ContractViolation("NetworkQ: network shape does not match project '" + p.name + "'");
      }
    }
  }

  double q(std::size_t i, int s, double a, double lambda) const { return net(i).forward(s, a, lambda); }
  double dq(std::size_t i, int s, double a, double lambda) const { return net(i).grad_action(s, a, lambda); }
  double max_q(std::size_t i, int s, double lambda) const {
    return max_over_actions(net(i), s, lambda, action_grid_size_).value;
  }
  std::size_t model_of(std::size_t i) const { return groups_.model_of_project.at(i); }
  std::size_t project_count() const { return groups_.model_of_project.size(); }

  const QNetwork& net(std::size_t i) const { return nets_[model_of(i)]; }
  const std::vector<QNetwork>& networks() const { return nets_; }

 private:
  ModelGroups groups_;
  std::vector<QNetwork> nets_;
  int action_grid_size_;
};

/// Exact tabular Q, piecewise-linear in the action and in lambda.
class TabularQProvider {
 public:
  TabularQProvider(const EnvironmentSpec& env, std::vector<TabularQ> tables)
      : groups_(model_groups(env)), tables_(std::move(tables)) {
    if (tables_.size() != groups_.model_count()) {
      throw ContractViolation("TabularQProvider: need one table per distinct project model");
    }
    for (const auto& t : tables_) {
      if (t.actions().size() < 2 || t.lambdas().empty()) throw ContractViolation("TabularQProvider: empty table");
      if (!std::is_sorted(t.lambdas().begin(), t.lambdas().end())) {
        throw ContractViolation("TabularQProvider: lambdas must be ascending");
      }
    }
  }

  /// Solves every distinct model on the given multipliers.
  static TabularQProvider solve(const EnvironmentSpec& env, const std::vector<double>& lambdas,
                                int action_grid_size, double tol = 1e-10) {
    const auto groups = model_groups(env);
    std::vector<TabularQ> tables;
    for (std::size_t rep : groups.representative) {
      tables.push_back(solve_project_tabular(env.projects[rep], lambdas, action_grid_size, env.gamma, tol));
    }
    return TabularQProvider(env, std::move(tables));
  }

  double q(std::size_t i, int s, double a, double lambda) const {
    const auto& t = table(i);
    const auto [k, u] = locate(t.actions(), a);
    return (1.0 - u) * at_lambda(t, s, k, lambda) + u * at_lambda(t, s, k + 1, lambda);
  }

  /// Slope of the segment containing a (the right segment at interior grid points).
  double dq(std::size_t i, int s, double a, double lambda) const {
    const auto& t = table(i);
    const auto [k, u] = locate(t.actions(), a);
    (void)u;
    const double h = t.actions()[k + 1] - t.actions()[k];
    return (at_lambda(t, s, k + 1, lambda) - at_lambda(t, s, k, lambda)) / h;
  }

  double max_q(std::size_t i, int s, double lambda) const {
    const auto& t = table(i);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < t.actions().size(); ++k) best = std::max(best, at_lambda(t, s, k, lambda));
    return best;
  }

  std::size_t model_of(std::size_t i) const { return groups_.model_of_project.at(i); }
  std::size_t project_count() const { return groups_.model_of_project.size(); }
  const TabularQ& table(std::size_t i) const { return tables_[model_of(i)]; }

 private:
  // Segment index k and weight u with x = (1-u) v[k] + u v[k+1].
  static std::pair<std::size_t, double> locate(const std::vector<double>& v, double x) {
    if (x <= v.front()) return {0, 0.0};
    if (x >= v.back()) return {v.size() - 2, 1.0};
    const auto it = std::upper_bound(v.begin(), v.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - v.begin()) - 1;
    return {k, (x - v[k]) / (v[k + 1] - v[k])};
  }

  static double at_lambda(const TabularQ& t, int s, std::size_t k, double lambda) {
    const auto& ls = t.lambdas();
    const auto ss = static_cast<std::size_t>(s);
    if (ls.size() == 1) return t.at(ss, k, 0);
    const auto it = std::lower_bound(ls.begin(), ls.end(), lambda);
    if (it != ls.end() && *it == lambda) return t.at(ss, k, static_cast<std::size_t>(it - ls.begin()));
    const auto [l, u] = locate(ls, lambda);
    return (1.0 - u) * t.at(ss, k, l) + u * t.at(ss, k, l + 1);
  }

  ModelGroups groups_;
  std::vector<TabularQ> tables_;
};

}  // namespace lpca
