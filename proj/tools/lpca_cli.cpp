// lpca — command-line front end for training, baselines and experiment runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpca/lpca.hpp"

namespace fs = std::filesystem;
using namespace lpca;

namespace {

struct Common {
  std::string config;
  std::optional<std::string> env;
  std::optional<int> n_projects;
  std::optional<double> budget;
  std::optional<std::string> algo;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::vector<std::string> set;
  std::string out = "results";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--env", c.env, "type_a | type_b | mixed | speed_scaling");
  cmd->add_option("--n-projects", c.n_projects, "number of projects");
  cmd->add_option("--budget", c.budget, "per-step budget B");
  cmd->add_option("--algo", c.algo, "lpca-de | lpca-greedy | whittle | oracle");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--iters", c.iters, "training iterations");
  cmd->add_option("--set", c.set, "extra key=value override (repeatable)");
  cmd->add_option("--out", c.out, "output directory");
}

TrainConfig resolve(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_config(c.config);
  if (c.env) cfg.env_kind = *c.env;
  if (c.n_projects) cfg.n_projects = *c.n_projects;
  if (c.budget) cfg.budget = *c.budget;
  if (c.seed) cfg.seed = *c.seed;
  if (c.iters) cfg.n_iter = *c.iters;
  for (const auto& kv : c.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

SelectorMethod selector_for(const Common& c, const TrainConfig& cfg) {
  if (!c.algo) return parse_selector(cfg.selector);
  if (*c.algo == "lpca-de") return SelectorMethod::Evolution;
  if (*c.algo == "lpca-greedy") return SelectorMethod::Greedy;
  throw ConfigError("train needs --algo lpca-de or lpca-greedy, got '" + *c.algo + "'");
}

WhittleOptions whittle_options(const TrainConfig& cfg) {
  WhittleOptions w;
  w.lambda_bound = cfg.whittle_lambda_bound;
  w.refinement = cfg.whittle_refinement;
  return w;
}

JointDPOptions oracle_options(const TrainConfig& cfg) {
  JointDPOptions o;
  o.mode = cfg.oracle_mode == "exact" ? BudgetMode::Exact : BudgetMode::AtMost;
  o.tol = cfg.oracle_tol;
  return o;
}

void print_report(const std::string& label, const EvalReport& r) {
  std::cout << label << " mean " << r.mean << " ci [" << r.ci_low() << ", " << r.ci_high() << "] over "
            << r.returns.size() << " repetitions\n";
}

int cmd_train(const Common& c) {
  const TrainConfig cfg = resolve(c);
  const SelectorMethod method = selector_for(c, cfg);
  const std::string algo = method == SelectorMethod::Evolution ? "lpca-de" : "lpca-greedy";
  const EnvironmentSpec env = make_environment(cfg);
  const LambdaGrid grid(cfg.effective_lambda_max(), cfg.lambda_points);
  fs::create_directories(c.out);
  const TrainResult tr = train(cfg, method, [](std::size_t it, const CurvePoint* p) {
    if (p) std::cerr << "iteration " << it << " mean " << p->mean << '\n';
  });
  std::ostringstream curve, policy;
  write_curve_header(curve);
  write_curve_rows(curve, algo, cfg.env_kind, cfg.seed, tr.curve);
  write_policy_dump(policy, env, tr.dictionary);
  write_text_file(fs::path(c.out) / "learning_curve.csv", curve.str());
  write_text_file(fs::path(c.out) / ("policy_" + algo + ".csv"), policy.str());
  const ModelGroups groups = model_groups(env);
  for (std::size_t m = 0; m < tr.networks.size(); ++m) {
    std::ostringstream ck;
    write_checkpoint(ck, tr.networks[m], grid);
    write_text_file(fs::path(c.out) / ("qnet_" + algo + "_" + env.projects[groups.representative[m]].name + ".txt"),
                    ck.str());
  }
  std::cout << algo << " trained: " << tr.updates << " updates, final snapshot mean " << tr.curve.back().mean
            << ", outputs in " << c.out << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& policy_path) {
  const TrainConfig cfg = resolve(c);
  const EnvironmentSpec env = make_environment(cfg);
  const EvalOptions eopt = snapshot_eval_options(cfg);
  EvalReport rep;
  std::string label;
  if (!policy_path.empty()) {
    std::ifstream in(policy_path);
    if (!in) throw ConfigError("cannot open policy file '" + policy_path + "'");
    const PolicyDictionary dict = policy_from_dump(env, read_policy_dump(in));
    rep = evaluate(dictionary_policy(dict), env, eopt);
    label = fs::path(policy_path).stem().string();
  } else if (c.algo && *c.algo == "whittle") {
    rep = evaluate(whittle_policy(env, compute_whittle_policy(env, cfg.whittle_delta_a, whittle_options(cfg))), env,
                   eopt);
    label = "whittle";
  } else if (c.algo && *c.algo == "oracle") {
    rep = evaluate(joint_dp_policy(solve_joint_dp(env, cfg.oracle_action_step, oracle_options(cfg))), env, eopt);
    label = "oracle";
  } else {
    throw ConfigError("evaluate needs --policy FILE or --algo whittle|oracle");
  }
  fs::create_directories(c.out);
  std::ostringstream e;
  write_eval_report(e, rep);
  write_text_file(fs::path(c.out) / ("eval_" + label + ".csv"), e.str());
  print_report(label, rep);
  return 0;
}

int cmd_oracle(const Common& c) {
  const TrainConfig cfg = resolve(c);
  const EnvironmentSpec env = make_environment(cfg);
  const JointDPSolution sol = solve_joint_dp(env, cfg.oracle_action_step, oracle_options(cfg));
  fs::create_directories(c.out);
  std::ostringstream t;
  write_joint_dp(t, sol);
  write_text_file(fs::path(c.out) / "oracle.txt", t.str());
  std::cout << t.str();
  std::cerr << "converged in " << sol.iterations << " sweeps, residual " << sol.residual << '\n';
  return 0;
}

int cmd_whittle(const Common& c) {
  const TrainConfig cfg = resolve(c);
  const EnvironmentSpec env = make_environment(cfg);
  const WhittlePolicy w = compute_whittle_policy(env, cfg.whittle_delta_a, whittle_options(cfg));
  const ModelGroups groups = model_groups(env);
  fs::create_directories(c.out);
  for (std::size_t m = 0; m < w.tables.size(); ++m) {
    const std::string name = env.projects[groups.representative[m]].name;
    std::ostringstream t;
    write_whittle_table(t, w.tables[m]);
    write_text_file(fs::path(c.out) / ("whittle_" + name + ".txt"), t.str());
    std::cout << name << ": " << w.tables[m].levels() << " levels, "
              << (w.tables[m].indexable ? "indexable" : "NOT indexable (" + std::to_string(w.tables[m].violations) +
                                                              " violations)")
              << '\n';
  }
  return 0;
}

int cmd_run(const Common& c) {
  TrainConfig cfg = resolve(c);
  if (c.algo) {
    cfg.algorithms = {*c.algo};
    cfg.validate();
  }
  const RunSummary s = run_experiment(cfg, c.out, &std::cerr);
  for (const auto& [algo, rep] : s.reports) print_report(algo, rep);
  for (const auto& [algo, why] : s.failures) std::cout << algo << " not run: " << why << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LPCA solver lab: Lagrange-relaxed Q-learning for budget-coupled MDPs"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common train_c, eval_c, oracle_c, whittle_c, run_c;
  std::string policy_path;
  auto* train_cmd = app.add_subcommand("train", "train LPCA and write the learned policy and networks");
  add_common(train_cmd, train_c);
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a policy dump or a baseline");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_option("--policy", policy_path, "policy CSV written by train/run")->check(CLI::ExistingFile);
  auto* oracle_cmd = app.add_subcommand("oracle", "solve the joint problem exactly (small instances)");
  add_common(oracle_cmd, oracle_c);
  auto* whittle_cmd = app.add_subcommand("whittle", "compute Whittle index tables");
  add_common(whittle_cmd, whittle_c);
  auto* run_cmd = app.add_subcommand("run", "train and evaluate every configured algorithm");
  add_common(run_cmd, run_c);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(train_c);
    if (*eval_cmd) return cmd_evaluate(eval_c, policy_path);
    if (*oracle_cmd) return cmd_oracle(oracle_c);
    if (*whittle_cmd) return cmd_whittle(whittle_c);
    if (*run_cmd) return cmd_run(run_c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
