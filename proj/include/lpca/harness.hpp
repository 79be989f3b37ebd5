#pragma once

// Experiment driver: the exploration / replay / periodic-policy training loop,
// the discounted-return evaluation protocol, configs, and result files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/joint_dp.hpp"
#include "lpca/lagrange.hpp"
#include "lpca/lambda_grid.hpp"
#include "lpca/parallel.hpp"
#include "lpca/qlearning.hpp"
#include "lpca/qnet.hpp"
#include "lpca/qprovider.hpp"
#include "lpca/random.hpp"
#include "lpca/selectors.hpp"
#include "lpca/whittle.hpp"

namespace lpca {

inline constexpr const char* kVersion = "lpca 1.0.0";

// ---------------------------------------------------------------------------
// Configuration.

struct TrainConfig {
  // environment
  std::string env_kind = "type_a";
  int n_projects = 4;
  double budget = 2.0;
  double gamma = 0.9;

  // training loop
  std::size_t n_iter = 30000;
  std::size_t update_frequency = 1000;
  std::size_t batch_size = 128;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_iterations = 0;  // 0: half of n_iter
  std::size_t episode_length = 51;           // 0: one continuing trajectory
  std::uint64_t seed = 1;
  std::string selector = "greedy";

  // value network
  int hidden_width = 64;
  int hidden_layers = 2;
  std::string activation = "softsign";
  double output_scale = 0.0;
  double learning_rate = 1e-2;
  double final_learning_rate = 1e-5;  // linear decay over n_iter updates
  double tau = 0.1;
  std::size_t k_lambdas = 16;
  int action_grid = 51;
  std::size_t replay_capacity = 100000;
  double lambda_max = 0.0;  // 0: 10 for speed scaling, 5 otherwise
  std::size_t lambda_points = 1000;

  // selectors
  int de_population_factor = 15;
  double de_mutation_f = 0.8;
  double de_crossover_cr = 0.9;
  int de_max_generations = 100;
  double de_tolerance = 1e-6;
  double de_penalty_constant = 1e6;
  double greedy_delta = 0.05;
  bool dictionary_on_demand = false;
  std::size_t dictionary_guard = 1000000;

  // evaluation
  std::size_t eval_repetitions = 100;
  std::size_t eval_horizon = 50;
  std::size_t threads = 0;

  // baselines
  double whittle_delta_a = 0.01;
  double whittle_lambda_bound = 10.0;
  double whittle_refinement = 1e-4;
  double oracle_action_step = 0.25;
  std::string oracle_mode = "at_most";
  double oracle_tol = 1e-8;

  std::vector<std::string> algorithms{"lpca-de", "lpca-greedy", "whittle", "oracle"};

  double effective_lambda_max() const {
    if (lambda_max > 0.0) return lambda_max;
    return env_kind == "speed_scaling" ? 10.0 : 5.0;
  }
  std::size_t effective_decay_iterations() const {
    return epsilon_decay_iterations ? epsilon_decay_iterations : n_iter / 2;
  }

  void validate() const {
    parse_env_kind(env_kind);
    parse_selector(selector);
    parse_activation(activation);
    if (n_projects < 1) throw ConfigError("env.n_projects must be positive");
    if (!(budget >= 0.0)) throw ConfigError("env.budget must be nonnegative");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("env.gamma must lie in (0, 1)");
    if (n_iter == 0) throw ConfigError("train.n_iter must be positive");
    if (update_frequency == 0) throw ConfigError("train.update_frequency must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(0.0 <= epsilon_end && epsilon_end <= epsilon_start && epsilon_start <= 1.0)) {
      throw ConfigError("epsilon schedule needs 0 <= end <= start <= 1");
    }
    if (eval_repetitions == 0) throw ConfigError("eval.repetitions must be positive");
    if (lambda_max < 0.0 || lambda_points < 2) throw ConfigError("lambda.max must be >= 0 and lambda.points >= 2");
    if (oracle_mode != "at_most" && oracle_mode != "exact") {
      throw ConfigError("unknown oracle.mode '" + oracle_mode + "'; valid: at_most, exact");
    }
    for (const auto& a : algorithms) {
      if (a != "lpca-de" && a != "lpca-greedy" && a != "whittle" && a != "oracle") {
        throw ConfigError("unknown algorithm '" + a + "'; valid: lpca-de, lpca-greedy, whittle, oracle");
      }
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

inline std::string format_real(double x) {
  std::ostringstream o;
  o << std::setprecision(17) << x;
  return o.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

struct ConfigField {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
ConfigField number_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>("", v); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_real(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

inline ConfigField string_field(std::string TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    f["env.kind"] = string_field(&TrainConfig::env_kind);
    f["env.n_projects"] = number_field(&TrainConfig::n_projects);
    f["env.budget"] = number_field(&TrainConfig::budget);
    f["env.gamma"] = number_field(&TrainConfig::gamma);
    f["train.n_iter"] = number_field(&TrainConfig::n_iter);
    f["train.update_frequency"] = number_field(&TrainConfig::update_frequency);
    f["train.batch_size"] = number_field(&TrainConfig::batch_size);
    f["train.epsilon_start"] = number_field(&TrainConfig::epsilon_start);
    f["train.epsilon_end"] = number_field(&TrainConfig::epsilon_end);
    f["train.epsilon_decay_iterations"] = number_field(&TrainConfig::epsilon_decay_iterations);
    f["train.episode_length"] = number_field(&TrainConfig::episode_length);
    f["seed"] = number_field(&TrainConfig::seed);
    f["selector"] = string_field(&TrainConfig::selector);
    f["net.hidden_width"] = number_field(&TrainConfig::hidden_width);
    f["net.hidden_layers"] = number_field(&TrainConfig::hidden_layers);
    f["net.activation"] = string_field(&TrainConfig::activation);
    f["net.output_scale"] = number_field(&TrainConfig::output_scale);
    f["net.learning_rate"] = number_field(&TrainConfig::learning_rate);
    f["net.final_learning_rate"] = number_field(&TrainConfig::final_learning_rate);
    f["net.tau"] = number_field(&TrainConfig::tau);
    f["net.k_lambdas"] = number_field(&TrainConfig::k_lambdas);
    f["net.action_grid"] = number_field(&TrainConfig::action_grid);
    f["net.replay_capacity"] = number_field(&TrainConfig::replay_capacity);
    f["lambda.max"] = number_field(&TrainConfig::lambda_max);
    f["lambda.points"] = number_field(&TrainConfig::lambda_points);
    f["de.population_factor"] = number_field(&TrainConfig::de_population_factor);
    f["de.mutation_f"] = number_field(&TrainConfig::de_mutation_f);
    f["de.crossover_cr"] = number_field(&TrainConfig::de_crossover_cr);
    f["de.max_generations"] = number_field(&TrainConfig::de_max_generations);
    f["de.tolerance"] = number_field(&TrainConfig::de_tolerance);
    f["de.penalty_constant"] = number_field(&TrainConfig::de_penalty_constant);
    f["greedy.delta"] = number_field(&TrainConfig::greedy_delta);
    f["dictionary.on_demand"] = {
        [](TrainConfig& c, const std::string& v) { c.dictionary_on_demand = parse_bool("dictionary.on_demand", v); },
        [](const TrainConfig& c) { return std::string(c.dictionary_on_demand ? "true" : "false"); }};
    f["dictionary.guard"] = number_field(&TrainConfig::dictionary_guard);
    f["eval.repetitions"] = number_field(&TrainConfig::eval_repetitions);
    f["eval.horizon"] = number_field(&TrainConfig::eval_horizon);
    f["threads"] = number_field(&TrainConfig::threads);
    f["whittle.delta_a"] = number_field(&TrainConfig::whittle_delta_a);
    f["whittle.lambda_bound"] = number_field(&TrainConfig::whittle_lambda_bound);
    f["whittle.refinement"] = number_field(&TrainConfig::whittle_refinement);
    f["oracle.action_step"] = number_field(&TrainConfig::oracle_action_step);
    f["oracle.mode"] = string_field(&TrainConfig::oracle_mode);
    f["oracle.tol"] = number_field(&TrainConfig::oracle_tol);
    f["algorithms"] = {[](TrainConfig& c, const std::string& v) {
                         c.algorithms.clear();
                         std::stringstream ss(v);
                         std::string item;
                         while (std::getline(ss, item, ',')) {
                           item = trim(item);
                           if (!item.empty()) c.algorithms.push_back(item);
                         }
                       },
                       [](const TrainConfig& c) {
                         std::string out;
                         for (const auto& a : c.algorithms) out += (out.empty() ? "" : ",") + a;
                         return out;
                       }};
    return f;
  }();
  return fields;
}

}  // namespace detail

/// Sets one key; unknown keys and malformed values are configuration errors.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  const auto it = fields.find(key);
  if (it == fields.end()) {
    std::string valid;
    for (const auto& [k, f] : fields) valid += (valid.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
  }
  try {
    it->second.set(cfg, detail::unquote(detail::trim(value)));
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': invalid value '" + value + "'");
  }
}

/// Flat key=value text; '#' starts a comment.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Canonical dump; parse_config(config_text(c)) reproduces c.
inline std::string config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : detail::config_fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

inline EnvironmentSpec make_environment(const TrainConfig& cfg) {
  return make_environment(parse_env_kind(cfg.env_kind), cfg.n_projects, cfg.budget, cfg.gamma);
}

inline DictionaryOptions dictionary_options(const TrainConfig& cfg, SelectorMethod method) {
  DictionaryOptions o;
  o.method = method;
  o.de.population_factor = cfg.de_population_factor;
  o.de.mutation_f = cfg.de_mutation_f;
  o.de.crossover_cr = cfg.de_crossover_cr;
  o.de.max_generations = cfg.de_max_generations;
  o.de.tolerance = cfg.de_tolerance;
  o.de.penalty_constant = cfg.de_penalty_constant;
  o.de.seed = derive_seed(cfg.seed, 0xde);
  o.greedy.delta = cfg.greedy_delta;
  o.enumeration_guard = cfg.dictionary_guard;
  o.on_demand = cfg.dictionary_on_demand;
  o.threads = cfg.threads;
  return o;
}

inline QLearnerConfig learner_config(const TrainConfig& cfg) {
  QLearnerConfig q;
  q.hidden_width = cfg.hidden_width;
  q.hidden_layers = cfg.hidden_layers;
  q.activation = parse_activation(cfg.activation);
  q.output_scale = cfg.output_scale;
  q.learning_rate = cfg.learning_rate;
  q.final_learning_rate = cfg.final_learning_rate;
  q.decay_updates = cfg.final_learning_rate != cfg.learning_rate ? cfg.n_iter : 0;
  q.tau = cfg.tau;
  q.replay_capacity = cfg.replay_capacity;
  q.step.batch_size = cfg.batch_size;
  q.step.k_lambdas = cfg.k_lambdas;
  q.step.gamma = cfg.gamma;
  q.step.action_grid_size = cfg.action_grid;
  return q;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalReport {
  std::vector<double> returns;
  double mean = 0.0;
  double ci_half_width = 0.0;
  std::size_t horizon = 50;
  double gamma = 0.9;

  double ci_low() const { return mean - ci_half_width; }
  double ci_high() const { return mean + ci_half_width; }
};

/// Mean and 95% normal half-width 1.96 sd / sqrt(n) (0 for a single return).
inline EvalReport summarize_returns(std::vector<double> returns, std::size_t horizon, double gamma) {
  EvalReport r;
  r.returns = std::move(returns);
  r.horizon = horizon;
  r.gamma = gamma;
  const double n = static_cast<double>(r.returns.size());
  if (r.returns.empty()) return r;
  double sum = 0.0;
  for (double x : r.returns) sum += x;
  r.mean = sum / n;
  if (r.returns.size() > 1) {
    double ss = 0.0;
    for (double x : r.returns) ss += (x - r.mean) * (x - r.mean);
    r.ci_half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

using Policy = std::function<ActionVector(const JointState&)>;

struct EvalOptions {
  std::size_t repetitions = 100;
  std::size_t horizon = 50;
  std::uint64_t seed = 0;
  std::optional<JointState> start;  // default: uniform over joint states
  std::size_t threads = 0;
};

/// R = sum_{t=0}^{horizon} gamma^t sum_i r_i(s_i^t), one rollout per repetition.
/// Repetition k uses its own stream derived from the seed, so results do not
/// depend on the thread count.
inline EvalReport evaluate(const Policy& policy, const EnvironmentSpec& env, const EvalOptions& opt) {
  validate_environment(env);
  const JointStateSpace space(env);
  if (opt.start) space.index(*opt.start);
  std::vector<double> returns(opt.repetitions, 0.0);
  parallel_for(
      opt.repetitions,
      [&](std::size_t rep) {
        Rng rng(derive_seed(opt.seed, rep));
        JointState s = opt.start ? *opt.start : space.state(uniform_index(rng, space.size()));
        double total = 0.0;
        double discount = 1.0;
        for (std::size_t t = 0; t <= opt.horizon; ++t) {
          const ActionVector a = policy(s);
          if (!is_feasible(env, s, a)) {
            throw ContractViolation("evaluate: policy returned an infeasible action in state " + format_joint_state(s));
          }
          StepResult r = step(env, s, a, rng);
          double reward = 0.0;
          for (double x : r.rewards) reward += x;
          total += discount * reward;
          discount *= env.gamma;
          s = std::move(r.next_states);
        }
        returns[rep] = total;
      },
      opt.threads);
  return summarize_returns(std::move(returns), opt.horizon, env.gamma);
}

inline Policy dictionary_policy(const PolicyDictionary& dict) {
  return [dict](const JointState& s) { return dict.action(s); };
}

inline Policy whittle_policy(const EnvironmentSpec& env, const WhittlePolicy& w) {
  return [env, w](const JointState& s) { return whittle_action(env, s, w); };
}

inline Policy joint_dp_policy(const JointDPSolution& sol) {
  return [sol](const JointState& s) { return sol.action_at(s); };
}

// ---------------------------------------------------------------------------
// Training loop.

struct CurvePoint {
  std::size_t iteration = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct TrainResult {
  std::vector<QNetwork> networks;  // one per distinct model
  PolicyDictionary dictionary;
  std::vector<CurvePoint> curve;
  std::size_t updates = 0;
  double last_loss = 0.0;
};

/// Uniform action in the box, shrunk onto the budget.
inline ActionVector random_feasible_action(const EnvironmentSpec& env, const JointState& s, Rng& rng) {
  ActionVector a(env.size());
  for (std::size_t i = 0; i < env.size(); ++i) a[i] = uniform(rng, 0.0, env.projects[i].a_max);
  return project_to_budget(env, s, std::move(a));
}

inline double epsilon_at(const TrainConfig& cfg, std::size_t iteration) {
  const std::size_t decay = cfg.effective_decay_iterations();
  if (decay == 0 || iteration >= decay) return cfg.epsilon_end;
  const double frac = static_cast<double>(iteration) / static_cast<double>(decay);
  return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

inline EvalOptions snapshot_eval_options(const TrainConfig& cfg) {
  EvalOptions o;
  o.repetitions = cfg.eval_repetitions;
  o.horizon = cfg.eval_horizon;
  o.seed = derive_seed(cfg.seed, 0xe7a1);
  o.threads = cfg.threads;
  return o;
}

using ProgressFn = std::function<void(std::size_t iteration, const CurvePoint* snapshot)>;

/// Runs n_iter environment steps: epsilon-greedy over the current (stale)
/// dictionary, one replay update per model per step once memory holds a
/// batch, and a dictionary rebuild plus evaluation snapshot every
/// update_frequency steps (and at iteration 0).
inline TrainResult train(const TrainConfig& cfg, SelectorMethod method, const ProgressFn& progress = {}) {
  cfg.validate();
  const EnvironmentSpec env = make_environment(cfg);
  const LambdaGrid grid(cfg.effective_lambda_max(), cfg.lambda_points);
  const ModelGroups groups = model_groups(env);
  const QLearnerConfig qcfg = learner_config(cfg);
  std::vector<QLearner> learners;
  for (std::size_t m = 0; m < groups.model_count(); ++m) {
    learners.emplace_back(env.projects[groups.representative[m]], grid, qcfg, derive_seed(cfg.seed, 100 + m));
  }
  const DictionaryOptions dopt = dictionary_options(cfg, method);
  const EvalOptions eopt = snapshot_eval_options(cfg);

  TrainResult result;
  auto snapshot_networks = [&] {
    std::vector<QNetwork> nets;
    for (const auto& l : learners) nets.push_back(l.network());
    return nets;
  };
  auto rebuild_and_evaluate = [&](std::size_t iteration) {
    const NetworkQ provider(env, snapshot_networks(), cfg.action_grid);
    result.dictionary = update_policy_dictionary(env, provider, grid, dopt);
    const EvalReport rep = evaluate(dictionary_policy(result.dictionary), env, eopt);
    result.curve.push_back({iteration, rep.mean, rep.ci_low(), rep.ci_high()});
    if (progress) progress(iteration, &result.curve.back());
  };

  Rng env_rng(derive_seed(cfg.seed, 1));
  Rng explore_rng(derive_seed(cfg.seed, 2));
  Rng train_rng(derive_seed(cfg.seed, 3));
  const JointStateSpace space(env);
  JointState state = space.state(uniform_index(env_rng, space.size()));

  rebuild_and_evaluate(0);
  for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
    const double eps = epsilon_at(cfg, it - 1);
    const ActionVector action = uniform01(explore_rng) < eps ? random_feasible_action(env, state, explore_rng)
                                                            : result.dictionary.action(state);
    const StepResult r = step(env, state, action, env_rng);
    for (std::size_t i = 0; i < env.size(); ++i) {
      learners[groups.model_of_project[i]].remember(
          {i, state[i], action[i], r.rewards[i], r.next_states[i], r.done});
    }
    for (auto& l : learners) {
      if (l.ready()) {
        result.last_loss = l.update(train_rng);
        ++result.updates;
      }
    }
    state = r.next_states;
    if (cfg.episode_length && it % cfg.episode_length == 0) state = space.state(uniform_index(env_rng, space.size()));
    if (it % cfg.update_frequency == 0) {
      rebuild_and_evaluate(it);
    } else if (progress) {
      progress(it, nullptr);
    }
  }
  result.networks = snapshot_networks();
  return result;
}

// ---------------------------------------------------------------------------
// Result files.

inline constexpr const char* kCurveHeader = "iteration,algorithm,environment,seed,mean_return,ci_low,ci_high";

inline void write_curve_header(std::ostream& out) { out << kCurveHeader << '\n'; }

inline void write_curve_rows(std::ostream& out, const std::string& algorithm, const std::string& environment,
                             std::uint64_t seed, const std::vector<CurvePoint>& points) {
  for (const auto& p : points) {
    out << p.iteration << ',' << algorithm << ',' << environment << ',' << seed << ','
        << detail::format_real(p.mean) << ',' << detail::format_real(p.ci_low) << ','
        << detail::format_real(p.ci_high) << '\n';
  }
}

/// `repetition,return` rows followed by summary rows keyed mean,
/// ci_half_width, ci_low, ci_high, horizon and gamma.
inline void write_eval_report(std::ostream& out, const EvalReport& r) {
  out << "repetition,return\n";
  for (std::size_t i = 0; i < r.returns.size(); ++i) out << i << ',' << detail::format_real(r.returns[i]) << '\n';
  out << "mean," << detail::format_real(r.mean) << '\n';
  out << "ci_half_width," << detail::format_real(r.ci_half_width) << '\n';
  out << "ci_low," << detail::format_real(r.ci_low()) << '\n';
  out << "ci_high," << detail::format_real(r.ci_high()) << '\n';
  out << "horizon," << r.horizon << '\n';
  out << "gamma," << detail::format_real(r.gamma) << '\n';
}

inline EvalReport read_eval_report(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (detail::trim(line) != "repetition,return") throw ConfigError("eval report: bad header");
  std::vector<double> returns;
  std::size_t horizon = 0;
  double gamma = 0.0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    if (!key.empty() && std::isdigit(static_cast<unsigned char>(key[0]))) {
      returns.push_back(std::stod(value));
    } else if (key == "horizon") {
      horizon = std::stoul(value);
    } else if (key == "gamma") {
      gamma = std::stod(value);
    }
  }
  return summarize_returns(std::move(returns), horizon, gamma);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

struct RunSummary {
  std::map<std::string, EvalReport> reports;
  std::map<std::string, std::string> failures;
};

/// Trains / solves every configured algorithm and writes
///   learning_curve.csv, eval_<algo>.csv, policy_<algo>.csv,
///   qnet_<algo>_<model>.txt, whittle_<model>.txt, oracle.txt, manifest.txt
/// into out_dir. An algorithm that fails (e.g. the oracle on an instance
/// above its capacity guard) is recorded and the others still run.
inline RunSummary run_experiment(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                                 std::ostream* log = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const EnvironmentSpec env = make_environment(cfg);
  const ModelGroups groups = model_groups(env);
  const EvalOptions eopt = snapshot_eval_options(cfg);
  const LambdaGrid grid(cfg.effective_lambda_max(), cfg.lambda_points);
  RunSummary summary;

  std::ostringstream curve;
  write_curve_header(curve);
  std::vector<std::size_t> snapshot_iterations{0};
  for (std::size_t it = cfg.update_frequency; it <= cfg.n_iter; it += cfg.update_frequency) {
    snapshot_iterations.push_back(it);
  }
  auto flat_curve = [&](const EvalReport& r) {
    std::vector<CurvePoint> pts;
    for (std::size_t it : snapshot_iterations) pts.push_back({it, r.mean, r.ci_low(), r.ci_high()});
    return pts;
  };
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << std::endl;
  };

  for (const auto& algo : cfg.algorithms) {
    try {
      if (algo == "lpca-de" || algo == "lpca-greedy") {
        const auto method = algo == "lpca-de" ? SelectorMethod::Evolution : SelectorMethod::Greedy;
        say("[" + algo + "] training " + std::to_string(cfg.n_iter) + " iterations");
        const TrainResult tr = train(cfg, method, [&](std::size_t it, const CurvePoint* p) {
          if (p && log) *log << "[" << algo << "] iteration " << it << " mean " << p->mean << std::endl;
        });
        write_curve_rows(curve, algo, cfg.env_kind, cfg.seed, tr.curve);
        const EvalReport rep = evaluate(dictionary_policy(tr.dictionary), env, eopt);
        std::ostringstream e, p;
        write_eval_report(e, rep);
        write_policy_dump(p, env, tr.dictionary);
        write_text_file(out_dir / ("eval_" + algo + ".csv"), e.str());
        write_text_file(out_dir / ("policy_" + algo + ".csv"), p.str());
        for (std::size_t m = 0; m < tr.networks.size(); ++m) {
          std::ostringstream ck;
          write_checkpoint(ck, tr.networks[m], grid);
          write_text_file(out_dir / ("qnet_" + algo + "_" + env.projects[groups.representative[m]].name + ".txt"),
                          ck.str());
        }
        summary.reports[algo] = rep;
      } else if (algo == "whittle") {
        say("[whittle] computing indices, delta_a " + detail::format_real(cfg.whittle_delta_a));
        WhittleOptions wopt;
        wopt.lambda_bound = cfg.whittle_lambda_bound;
        wopt.refinement = cfg.whittle_refinement;
        const WhittlePolicy w = compute_whittle_policy(env, cfg.whittle_delta_a, wopt);
        for (std::size_t m = 0; m < w.tables.size(); ++m) {
          std::ostringstream t;
          write_whittle_table(t, w.tables[m]);
          write_text_file(out_dir / ("whittle_" + env.projects[groups.representative[m]].name + ".txt"), t.str());
        }
        const EvalReport rep = evaluate(whittle_policy(env, w), env, eopt);
        write_curve_rows(curve, algo, cfg.env_kind, cfg.seed, flat_curve(rep));
        std::ostringstream e;
        write_eval_report(e, rep);
        write_text_file(out_dir / "eval_whittle.csv", e.str());
        summary.reports[algo] = rep;
      } else if (algo == "oracle") {
        say("[oracle] joint value iteration, action step " + detail::format_real(cfg.oracle_action_step));
        JointDPOptions jopt;
        jopt.mode = cfg.oracle_mode == "exact" ? BudgetMode::Exact : BudgetMode::AtMost;
        jopt.tol = cfg.oracle_tol;
        const JointDPSolution sol = solve_joint_dp(env, cfg.oracle_action_step, jopt);
        std::ostringstream t;
        write_joint_dp(t, sol);
        write_text_file(out_dir / "oracle.txt", t.str());
        const EvalReport rep = evaluate(joint_dp_policy(sol), env, eopt);
        write_curve_rows(curve, algo, cfg.env_kind, cfg.seed, flat_curve(rep));
        std::ostringstream e;
        write_eval_report(e, rep);
        write_text_file(out_dir / "eval_oracle.csv", e.str());
        summary.reports[algo] = rep;
      }
    } catch (const CapacityError& e) {
      summary.failures[algo] = e.what();
      say("[" + algo + "] skipped: " + e.what());
    } catch (const SolverError& e) {
      summary.failures[algo] = e.what();
      say("[" + algo + "] failed: " + e.what());
    }
  }
  write_text_file(out_dir / "learning_curve.csv", curve.str());

  std::ostringstream manifest;
  manifest << "version " << kVersion << '\n';
  manifest << "seed " << cfg.seed << '\n';
  manifest << "eval_seed " << eopt.seed << '\n';
  manifest << "environment " << cfg.env_kind << " n_projects " << cfg.n_projects << " budget "
           << detail::format_real(cfg.budget) << " gamma " << detail::format_real(cfg.gamma) << '\n';
  for (const auto& algo : cfg.algorithms) {
    const auto f = summary.failures.find(algo);
    if (f != summary.failures.end()) {
      manifest << "status " << algo << " failed: " << f->second << '\n';
    } else {
      manifest << "status " << algo << " ok mean " << detail::format_real(summary.reports[algo].mean) << '\n';
    }
  }
  manifest << "\n[config]\n" << config_text(cfg);
  write_text_file(out_dir / "manifest.txt", manifest.str());
  return summary;
}

}  // namespace lpca
