#pragma once

// Whittle-type indices for multi-level actions.
//
// Actions are discretized to levels k * delta_a. The index of level k in
// state s is the largest multiplier at which the exact per-project optimum
// still picks a level >= k. Levels that stay optimal over the whole search
// range get +sentinel; levels never reached get -sentinel.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/selectors.hpp"
#include "lpca/tabular.hpp"

namespace lpca {

struct WhittleOptions {
  double lambda_bound = 10.0;  // search range [-bound, bound]
  double refinement = 1e-4;    // bracket width of each threshold
  double solver_tol = 1e-10;
};

struct WhittleTable {
  double delta_a = 0.1;
  double sentinel = 100.0;
  std::vector<double> actions;             // level -> action
  std::vector<std::vector<double>> index;  // [state][level]
  bool indexable = true;
  std::size_t violations = 0;

  std::size_t levels() const { return actions.size(); }
};

/// Levels k * delta_a for k = 0..K-1, the last one pinned to a_max.
inline std::vector<double> action_levels(double a_max, double delta_a) {
  if (!(delta_a > 0.0)) throw DomainError("delta_a must be positive");
  const double ratio = a_max / delta_a;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw DomainError("delta_a must divide a_max into an integer number of steps");
  }
  const auto steps = static_cast<std::size_t>(rounded);
  std::vector<double> a(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) a[k] = k == steps ? a_max : static_cast<double>(k) * delta_a;
  return a;
}

namespace detail {
// Optimal level per state at one multiplier; ties go to the lower level.
inline std::vector<int> optimal_levels(const DiscretizedProject& p, double lambda, double gamma, double tol) {
  const auto sol = solve_project_at(p, lambda, gamma, tol);
  const std::size_t A = p.action_count();
  std::vector<int> out(static_cast<std::size_t>(p.states));
  for (std::size_t s = 0; s < out.size(); ++s) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < A; ++k) {
      if (sol.q[s * A + k] > sol.q[s * A + best]) best = k;
    }
    out[s] = static_cast<int>(best);
  }
  return out;
}
}  // namespace detail

inline WhittleTable compute_whittle(const ProjectModel& model, double delta_a, double gamma,
                                    const WhittleOptions& opt = {}) {
  if (!(opt.lambda_bound > 0.0) || !(opt.refinement > 0.0)) throw DomainError("whittle: invalid search options");
  WhittleTable table;
  table.delta_a = delta_a;
  table.sentinel = opt.lambda_bound * 10.0;
  table.actions = action_levels(model.a_max, delta_a);
  const DiscretizedProject project(model, table.actions);
  const auto S = static_cast<std::size_t>(model.state_count);
  const int K = static_cast<int>(table.levels());

  std::map<double, std::vector<int>> memo;
  auto levels_at = [&](double lambda) -> const std::vector<int>& {
    auto it = memo.find(lambda);
    if (it == memo.end()) it = memo.emplace(lambda, detail::optimal_levels(project, lambda, gamma, opt.solver_tol)).first;
    return it->second;
  };

  table.index.assign(S, std::vector<double>(static_cast<std::size_t>(K), -table.sentinel));
  const double lo = -opt.lambda_bound;
  const double hi = opt.lambda_bound;
  const std::vector<int> top = levels_at(lo);
  const std::vector<int> bottom = levels_at(hi);
  for (std::size_t s = 0; s < S; ++s) {
    table.index[s][0] = table.sentinel;
    for (int k = 1; k <= bottom[s]; ++k) table.index[s][static_cast<std::size_t>(k)] = table.sentinel;
  }

  // Split [a, b] until every state's optimal level is equal at both ends or
  // the bracket is narrower than the refinement.
  struct Bracket {
    double a, b;
  };
  std::vector<Bracket> work{{lo, hi}};
  while (!work.empty()) {
    const Bracket br = work.back();
    work.pop_back();
    const std::vector<int> la = levels_at(br.a);
    const std::vector<int> lb = levels_at(br.b);
    bool differs = false;
    for (std::size_t s = 0; s < S; ++s) {
      if (la[s] < lb[s]) {
        table.indexable = false;
        ++table.violations;
      }
      differs = differs || la[s] != lb[s];
    }
    if (!differs) continue;
    if (br.b - br.a <= opt.refinement) {
      for (std::size_t s = 0; s < S; ++s) {
        for (int k = lb[s] + 1; k <= la[s]; ++k) {
          auto& slot = table.index[s][static_cast<std::size_t>(k)];
          slot = std::max(slot, br.a);
        }
      }
      continue;
    }
    const double mid = 0.5 * (br.a + br.b);
    work.push_back({br.a, mid});
    work.push_back({mid, br.b});
  }

  for (std::size_t s = 0; s < S; ++s) {
    for (int k = 1; k < K; ++k) {
      if (table.index[s][static_cast<std::size_t>(k)] > table.index[s][static_cast<std::size_t>(k - 1)]) {
        table.indexable = false;
        ++table.violations;
      }
    }
  }
  return table;
}

/// One table per distinct model; tables[model_of_project[i]] serves project i.
struct WhittlePolicy {
  ModelGroups groups;
  std::vector<WhittleTable> tables;

  const WhittleTable& table(std::size_t project) const { return tables[groups.model_of_project.at(project)]; }
};

inline WhittlePolicy compute_whittle_policy(const EnvironmentSpec& env, double delta_a,
                                            const WhittleOptions& opt = {}) {
  WhittlePolicy w;
  w.groups = model_groups(env);
  for (std::size_t rep : w.groups.representative) {
    w.tables.push_back(compute_whittle(env.projects[rep], delta_a, env.gamma, opt));
  }
  return w;
}

/// Grants delta_a increments in decreasing index order while they fit the
/// budget; ties go to the lowest project index.
inline ActionVector whittle_action(const EnvironmentSpec& env, const JointState& s, const WhittlePolicy& w) {
  const std::size_t n = env.size();
  if (s.size() != n) throw ContractViolation("whittle_action: state length mismatch");
  const double delta = w.tables.empty() ? 0.0 : w.tables.front().delta_a;
  for (const auto& t : w.tables) {
    if (t.delta_a != delta) throw ContractViolation("whittle_action: tables use different delta_a");
  }
  std::vector<std::size_t> level(n, 0);
  double spent = 0.0;
  for (std::size_t i = 0; i < n; ++i) spent += env.projects[i].cost_at(s[i], 0.0);
  for (;;) {
    std::size_t pick = n;
    double best = 0.0;
    double pick_cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = w.table(i);
      const std::size_t k = level[i] + 1;
      if (k >= t.levels()) continue;
      const auto& p = env.projects[i];
      const double extra = p.cost_at(s[i], t.actions[k]) - p.cost_at(s[i], t.actions[k - 1]);
      if (spent + extra > env.budget + 1e-12) continue;
      const double idx = t.index[static_cast<std::size_t>(s[i])][k];
      if (pick == n || idx > best) {
        pick = i;
        best = idx;
        pick_cost = extra;
      }
    }
    if (pick == n) break;
    ++level[pick];
    spent += pick_cost;
  }
  ActionVector a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = w.table(i).actions[level[i]];
  // Guard against accumulated rounding in `spent`.
  return project_to_budget(env, s, std::move(a));
}

// ---------------------------------------------------------------------------
// Golden-file format, 12 significant digits:
//   whittle delta_a <d> levels <K> states <S> sentinel <x>
//   state,level,action,index
//   ...

inline void write_whittle_table(std::ostream& out, const WhittleTable& t) {
  out << std::setprecision(12);
  out << "whittle delta_a " << t.delta_a << " levels " << t.levels() << " states " << t.index.size() << " sentinel "
      << t.sentinel << '\n';
  out << "state,level,action,index\n";
  for (std::size_t s = 0; s < t.index.size(); ++s) {
    for (std::size_t k = 0; k < t.levels(); ++k) {
      out << s << ',' << k << ',' << t.actions[k] << ',' << t.index[s][k] << '\n';
    }
  }
}

inline WhittleTable read_whittle_table(std::istream& in) {
  WhittleTable t;
  std::string tag, key;
  std::size_t levels = 0, states = 0;
  in >> tag >> key >> t.delta_a >> key >> levels >> key >> states >> key >> t.sentinel;
  if (!in || tag != "whittle") throw ConfigError("whittle table: bad header");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  if (line != "state,level,action,index") throw ConfigError("whittle table: bad column header");
  t.actions.assign(levels, 0.0);
  t.index.assign(states, std::vector<double>(levels, 0.0));
  for (std::size_t r = 0; r < levels * states; ++r) {
    if (!std::getline(in, line)) throw ConfigError("whittle table: truncated");
    std::stringstream ss(line);
    std::string c[4];
    for (auto& x : c) std::getline(ss, x, ',');
    const auto s = std::stoul(c[0]);
    const auto k = std::stoul(c[1]);
    if (s >= states || k >= levels) throw ConfigError("whittle table: row out of range");
    t.actions[k] = std::stod(c[2]);
    t.index[s][k] = std::stod(c[3]);
  }
  return t;
}

}  // namespace lpca
