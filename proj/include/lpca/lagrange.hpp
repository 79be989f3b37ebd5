#pragma once

// Decoupled value J(s, lambda) = lambda B / (1 - gamma) + sum_i max_a Q_i(s_i, a, lambda),
// its grid minimizer lambda*(s), and the joint-state policy dictionary.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/lambda_grid.hpp"
#include "lpca/parallel.hpp"
#include "lpca/qprovider.hpp"
#include "lpca/random.hpp"
#include "lpca/selectors.hpp"

namespace lpca {

/// values[l * N + i] = max_a Q_i(s_i, a, lambda_l).
struct QTable {
  std::size_t n_lambda = 0;
  std::size_t n_projects = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(std::size_t lambdas, std::size_t projects)
      : n_lambda(lambdas), n_projects(projects), values(lambdas * projects, 0.0) {}

  double& at(std::size_t l, std::size_t i) { return values[l * n_projects + i]; }
  double at(std::size_t l, std::size_t i) const { return values[l * n_projects + i]; }
};

inline double compute_J(const QTable& table, std::size_t lambda_index, double lambda, double budget,
                        double gamma) {
  if (lambda_index >= table.n_lambda) throw ContractViolation("compute_J: lambda index out of range");
  double total = lambda * budget / (1.0 - gamma);
  for (std::size_t i = 0; i < table.n_projects; ++i) total += table.at(lambda_index, i);
  return total;
}

inline double compute_J(const QTable& table, const LambdaGrid& grid, std::size_t lambda_index, double budget,
                        double gamma) {
  if (lambda_index >= grid.size()) throw ContractViolation("compute_J: lambda index out of range");
  return compute_J(table, lambda_index, grid[lambda_index], budget, gamma);
}

struct LambdaStar {
  double lambda = 0.0;
  std::size_t index = 0;
  double J = 0.0;
};

/// Exhaustive scan; the first (smallest) minimizing lambda wins ties.
inline LambdaStar lambda_star(const QTable& table, const LambdaGrid& grid, double budget, double gamma) {
  if (table.n_lambda != grid.size()) throw ContractViolation("lambda_star: table does not match grid");
  LambdaStar best{grid[0], 0, std::numeric_limits<double>::infinity()};
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const double j = compute_J(table, l, grid[l], budget, gamma);
    if (j < best.J) best = {grid[l], l, j};
  }
  return best;
}

/// max_a Q(s, a, lambda_l) for every (model, state, grid index), computed once.
class MaxQCache {
 public:
  MaxQCache() = default;

  template <QProvider P>
  MaxQCache(const EnvironmentSpec& env, const P& q, const LambdaGrid& grid) : n_lambda_(grid.size()) {
    const auto groups = model_groups(env);
    model_of_ = groups.model_of_project;
    offsets_.resize(groups.model_count());
    std::size_t total = 0;
    for (std::size_t m = 0; m < groups.model_count(); ++m) {
      offsets_[m] = total;
      total += static_cast<std::size_t>(env.projects[groups.representative[m]].state_count) * n_lambda_;
    }
    values_.resize(total);
    for (std::size_t m = 0; m < groups.model_count(); ++m) {
      const std::size_t rep = groups.representative[m];
      const int states = env.projects[rep].state_count;
      for (int s = 0; s < states; ++s) {
        double* row = values_.data() + offsets_[m] + static_cast<std::size_t>(s) * n_lambda_;
        for (std::size_t l = 0; l < n_lambda_; ++l) row[l] = q.max_q(rep, s, grid[l]);
      }
    }
  }

  double at(std::size_t project, int s, std::size_t l) const {
    return values_[offsets_[model_of_[project]] + static_cast<std::size_t>(s) * n_lambda_ + l];
  }

  QTable table(const JointState& state) const {
    QTable t(n_lambda_, state.size());
    for (std::size_t l = 0; l < n_lambda_; ++l) {
      for (std::size_t i = 0; i < state.size(); ++i) t.at(l, i) = at(i, state[i], l);
    }
    return t;
  }

  std::size_t lambda_count() const { return n_lambda_; }

 private:
  std::size_t n_lambda_ = 0;
  std::vector<std::size_t> model_of_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

/// Naive q_table for one joint state (no sharing); the cache must agree bit for bit.
template <QProvider P>
QTable build_q_table(const JointState& state, const P& q, const LambdaGrid& grid) {
  QTable t(grid.size(), state.size());
  for (std::size_t l = 0; l < grid.size(); ++l) {
    for (std::size_t i = 0; i < state.size(); ++i) t.at(l, i) = q.max_q(i, state[i], grid[l]);
  }
  return t;
}

enum class SelectorMethod { Evolution, Greedy };

inline std::string_view to_string(SelectorMethod m) { return m == SelectorMethod::Evolution ? "de" : "greedy"; }

inline SelectorMethod parse_selector(std::string_view text) {
  if (text == "de") return SelectorMethod::Evolution;
  if (text == "greedy") return SelectorMethod::Greedy;
  throw ConfigError("unknown selector '" + std::string(text) + "'; valid: de, greedy");
}

struct PolicyEntry {
  ActionVector action;
  double lambda_star = 0.0;
  std::size_t lambda_index = 0;
};

struct DictionaryOptions {
  SelectorMethod method = SelectorMethod::Greedy;
  DEConfig de;  // de.seed is the master seed; each joint state derives its own stream
  GreedyConfig greedy;
  std::size_t enumeration_guard = 1000000;
  bool on_demand = false;  // memoized lookups instead of full enumeration
  std::size_t threads = 0;
};

/// Joint state -> (feasible action vector, lambda*).
class PolicyDictionary {
 public:
  using Resolver = std::function<PolicyEntry(const JointState&, std::size_t)>;

  PolicyDictionary() = default;

  static PolicyDictionary enumerated(JointStateSpace space, std::vector<PolicyEntry> entries) {
    if (entries.size() != space.size()) throw ContractViolation("PolicyDictionary: entry count mismatch");
    PolicyDictionary d;
    d.space_ = std::move(space);
    d.entries_ = std::move(entries);
    return d;
  }

  static PolicyDictionary on_demand(JointStateSpace space, Resolver resolver) {
    PolicyDictionary d;
    d.space_ = std::move(space);
    d.resolver_ = std::move(resolver);
    d.memo_ = std::make_shared<Memo>();
    return d;
  }

  bool is_enumerated() const { return !resolver_; }
  const JointStateSpace& space() const { return space_; }

  /// Thread-safe; on-demand entries are computed on first visit.
  const PolicyEntry& lookup(const JointState& s) const {
    const std::size_t idx = space_.index(s);
    if (!resolver_) {
      if (idx >= entries_.size()) throw ContractViolation("PolicyDictionary: missing entry");
      return entries_[idx];
    }
    {
      std::lock_guard lock(memo_->mutex);
      auto it = memo_->entries.find(idx);
      if (it != memo_->entries.end()) return it->second;
    }
    PolicyEntry e = resolver_(s, idx);
    std::lock_guard lock(memo_->mutex);
    return memo_->entries.emplace(idx, std::move(e)).first->second;
  }

  const ActionVector& action(const JointState& s) const { return lookup(s).action; }

  /// Stored entries in joint-index order (on-demand: visited entries only).
  std::vector<std::pair<JointState, PolicyEntry>> entries() const {
    std::vector<std::pair<JointState, PolicyEntry>> out;
    if (!resolver_) {
      for (std::size_t i = 0; i < entries_.size(); ++i) out.emplace_back(space_.state(i), entries_[i]);
    } else {
      std::lock_guard lock(memo_->mutex);
      for (const auto& [i, e] : memo_->entries) out.emplace_back(space_.state(i), e);
    }
    return out;
  }

  std::size_t size() const {
    if (!resolver_) return entries_.size();
    std::lock_guard lock(memo_->mutex);
    return memo_->entries.size();
  }

 private:
  struct Memo {
    std::mutex mutex;
    std::map<std::size_t, PolicyEntry> entries;
  };

  JointStateSpace space_;
  std::vector<PolicyEntry> entries_;
  Resolver resolver_;
  std::shared_ptr<Memo> memo_;
};

/// lambda* and the selector's action for one joint state.
template <QProvider P>
PolicyEntry resolve_policy_entry(const EnvironmentSpec& env, const P& q, const LambdaGrid& grid,
                                 const MaxQCache& cache, const DictionaryOptions& opt, const JointState& s,
                                 std::size_t joint_index) {
  const auto star = lambda_star(cache.table(s), grid, env.budget, env.gamma);
  PolicyEntry e;
  e.lambda_star = star.lambda;
  e.lambda_index = star.index;
  if (opt.method == SelectorMethod::Evolution) {
    DEConfig de = opt.de;
    de.seed = derive_seed(opt.de.seed, joint_index);
    e.action = differential_evolution(s, star.lambda, q, env, de);
  } else {
    e.action = greedy_select(s, star.lambda, q, env, opt.greedy);
  }
  if (!is_feasible(env, s, e.action)) {
    throw ContractViolation("policy dictionary: selector returned an infeasible action for state " +
                            format_joint_state(s));
  }
  return e;
}

/// Rebuilds the policy for every joint state (or lazily, in on-demand mode).
/// The provider is copied so the dictionary owns a frozen snapshot.
template <QProvider P>
PolicyDictionary update_policy_dictionary(const EnvironmentSpec& env, const P& q, const LambdaGrid& grid,
                                          const DictionaryOptions& opt) {
  JointStateSpace space(env);
  if (!opt.on_demand && space.size() > opt.enumeration_guard) {
    throw CapacityError("policy dictionary: " + std::to_string(space.size()) + " joint states exceed the guard of " +
                        std::to_string(opt.enumeration_guard) + "; use on-demand mode");
  }
  auto snapshot = std::make_shared<const P>(q);
  auto cache = std::make_shared<const MaxQCache>(env, *snapshot, grid);
  if (opt.on_demand) {
    auto env_copy = std::make_shared<const EnvironmentSpec>(env);
    return PolicyDictionary::on_demand(space, [env_copy, snapshot, cache, grid, opt](const JointState& s,
                                                                                      std::size_t idx) {
      return resolve_policy_entry(*env_copy, *snapshot, grid, *cache, opt, s, idx);
    });
  }
  std::vector<PolicyEntry> entries(space.size());
  parallel_for(
      space.size(),
      [&](std::size_t idx) { entries[idx] = resolve_policy_entry(env, *snapshot, grid, *cache, opt, space.state(idx), idx); },
      opt.threads);
  return PolicyDictionary::enumerated(space, std::move(entries));
}

// ---------------------------------------------------------------------------
// Policy dump: one row per joint state,
//   joint_state,lambda_star,a_1,...,a_N,total_cost
// with states formatted "s1:s2:..." and reals at 17 significant digits.

inline void write_policy_dump(std::ostream& out, const EnvironmentSpec& env, const PolicyDictionary& dict) {
  out << "joint_state,lambda_star";
  for (std::size_t i = 1; i <= env.size(); ++i) out << ",a_" << i;
  out << ",total_cost\n";
  out << std::setprecision(17);
  for (const auto& [s, e] : dict.entries()) {
    out << format_joint_state(s) << ',' << e.lambda_star;
    for (double a : e.action) out << ',' << a;
    out << ',' << total_cost(env, s, e.action) << '\n';
  }
}

struct PolicyDumpRow {
  JointState state;
  double lambda_star = 0.0;
  ActionVector action;
  double total_cost = 0.0;
};

inline std::vector<PolicyDumpRow> read_policy_dump(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("policy dump: missing header");
  if (line.rfind("joint_state,lambda_star", 0) != 0) throw ConfigError("policy dump: unexpected header '" + line + "'");
  std::size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (columns < 4) throw ConfigError("policy dump: header has too few columns");
  const std::size_t n = columns - 3;
  std::vector<PolicyDumpRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) throw ConfigError("policy dump: row has wrong column count: " + line);
    PolicyDumpRow row;
    std::stringstream st(cells[0]);
    std::string part;
    while (std::getline(st, part, ':')) row.state.push_back(std::stoi(part));
    if (row.state.size() != n) throw ConfigError("policy dump: state width mismatch: " + line);
    row.lambda_star = std::stod(cells[1]);
    for (std::size_t i = 0; i < n; ++i) row.action.push_back(std::stod(cells[2 + i]));
    row.total_cost = std::stod(cells.back());
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Dictionary built from a dump; every joint state must be present.
inline PolicyDictionary policy_from_dump(const EnvironmentSpec& env, const std::vector<PolicyDumpRow>& rows) {
  JointStateSpace space(env);
  std::vector<std::optional<PolicyEntry>> slots(space.size());
  for (const auto& r : rows) {
    if (r.action.size() != env.size()) throw ConfigError("policy dump: action width does not match environment");
    const std::size_t idx = space.index(r.state);
    if (!is_feasible(env, r.state, r.action)) {
      throw ConfigError("policy dump: infeasible action for state " + format_joint_state(r.state));
    }
    slots[idx] = PolicyEntry{r.action, r.lambda_star, 0};
  }
  std::vector<PolicyEntry> entries;
  entries.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw ConfigError("policy dump: missing state " + format_joint_state(space.state(i)));
    entries.push_back(std::move(*slots[i]));
  }
  return PolicyDictionary::enumerated(space, std::move(entries));
}

/// Number of stored actions violating the box or the budget.
inline std::size_t audit_dictionary(const EnvironmentSpec& env, const PolicyDictionary& dict) {
  std::size_t bad = 0;
  for (const auto& [s, e] : dict.entries()) bad += is_feasible(env, s, e.action) ? 0 : 1;
  return bad;
}

}  // namespace lpca
