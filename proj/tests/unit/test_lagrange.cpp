#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lpca/lagrange.hpp"
#include "lpca/qprovider.hpp"

using namespace lpca;

namespace {

std::vector<QNetwork> random_nets(const EnvironmentSpec& env, double lambda_max, std::uint64_t seed) {
  std::vector<QNetwork> nets;
  const auto groups = model_groups(env);
  for (std::size_t m = 0; m < groups.model_count(); ++m) {
    const auto& p = env.projects[groups.representative[m]];
    QNetworkConfig c;
    c.state_count = p.state_count;
    c.a_max = p.a_max;
    c.lambda_max = lambda_max;
    c.hidden_width = 16;
    c.zero_output_layer = false;
    c.seed = seed + m;
    nets.emplace_back(c);
  }
  return nets;
}

// J(lambda) for one project straight from value iteration at that lambda.
double exact_J(const DiscretizedProject& p, int s, double lambda, double budget, double gamma) {
  const auto sol = solve_project_at(p, lambda, gamma, 1e-12);
  return lambda * budget / (1.0 - gamma) + sol.v[static_cast<std::size_t>(s)];
}

}  // namespace

TEST(ComputeJ, Examples) {
  QTable t(1, 1);
  t.at(0, 0) = 5.0;
  EXPECT_DOUBLE_EQ(compute_J(t, 0, 0.0, 2.0, 0.9), 5.0);
  QTable z(1, 3);
  EXPECT_DOUBLE_EQ(compute_J(z, 0, 1.0, 2.0, 0.9), 20.0);
  EXPECT_THROW(compute_J(z, 1, 1.0, 2.0, 0.9), ContractViolation);
}

TEST(LambdaStar, ZeroTableGoesToLeftEnd) {
  const LambdaGrid grid(5.0);
  const QTable t(grid.size(), 2);
  const auto star = lambda_star(t, grid, 1.0, 0.9);
  EXPECT_EQ(star.index, 0u);
  EXPECT_EQ(star.lambda, -5.0);
}

TEST(LambdaStar, TiesGoToSmallestLambda) {
  const LambdaGrid grid(5.0);
  QTable t(grid.size(), 1);
  for (std::size_t l = 0; l < grid.size(); ++l) t.at(l, 0) = 3.0;
  const auto star = lambda_star(t, grid, 0.0, 0.9);
  EXPECT_EQ(star.index, 0u);
  EXPECT_EQ(star.J, 3.0);
}

TEST(LambdaStar, GridScanAgreesWithGoldenSectionOnExactJ) {
  const auto env = make_environment(EnvKind::TypeA, 1, 1.0, 0.9);
  const LambdaGrid grid(5.0);
  const auto provider = TabularQProvider::solve(env, grid.values(), 51, 1e-12);
  const DiscretizedProject p(env.projects[0], equispaced_actions(2.0, 51));
  for (int s = 0; s < 2; ++s) {
    const auto star = lambda_star(build_q_table({s}, provider, grid), grid, 1.0, 0.9);
    // golden-section search on the convex function J(s, .)
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -5.0, b = 5.0;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = exact_J(p, s, c, 1.0, 0.9), fd = exact_J(p, s, d, 1.0, 0.9);
    while (b - a > 1e-9) {
      if (fc <= fd) {
        b = d, d = c, fd = fc;
        c = b - phi * (b - a);
        fc = exact_J(p, s, c, 1.0, 0.9);
      } else {
        a = c, c = d, fc = fd;
        d = a + phi * (b - a);
        fd = exact_J(p, s, d, 1.0, 0.9);
      }
    }
    const double lambda_gs = 0.5 * (a + b);
    EXPECT_LE(std::abs(star.lambda - lambda_gs), grid.step()) << "state " << s;
  }
}

TEST(MaxQCache, BitIdenticalToNaiveTables) {
  const auto env = make_environment(EnvKind::Mixed, 4, 2.0, 0.9);
  const LambdaGrid grid(5.0, 200);
  const NetworkQ q(env, random_nets(env, 5.0, 3), 11);
  const MaxQCache cache(env, q, grid);
  const JointStateSpace space(env);
  for (std::size_t j = 0; j < space.size(); ++j) {
    const auto s = space.state(j);
    EXPECT_EQ(cache.table(s).values, build_q_table(s, q, grid).values);
  }
}

TEST(PolicyDictionary, EnumeratesEveryJointState) {
  const LambdaGrid grid(5.0, 100);
  auto a = make_environment(EnvKind::TypeA, 4, 2.0, 0.9);
  const auto da = update_policy_dictionary(a, NetworkQ(a, random_nets(a, 5.0, 1), 11), grid, {});
  EXPECT_EQ(da.size(), 16u);
  EXPECT_EQ(audit_dictionary(a, da), 0u);

  auto ss = make_environment(EnvKind::SpeedScaling, 4, 1.5, 0.9);
  const LambdaGrid grid10(10.0, 100);
  const auto ds = update_policy_dictionary(ss, NetworkQ(ss, random_nets(ss, 10.0, 1), 11), grid10, {});
  EXPECT_EQ(ds.size(), 1296u);
  EXPECT_EQ(audit_dictionary(ss, ds), 0u);
}

TEST(PolicyDictionary, EvolutionEntriesAreFeasibleAndReproducible) {
  const LambdaGrid grid(5.0, 100);
  const auto env = make_environment(EnvKind::TypeB, 3, 1.0, 0.9);
  const NetworkQ q(env, random_nets(env, 5.0, 9), 11);
  DictionaryOptions opt;
  opt.method = SelectorMethod::Evolution;
  opt.de.seed = 5;
  opt.de.max_generations = 30;
  const auto d1 = update_policy_dictionary(env, q, grid, opt);
  opt.threads = 1;
  const auto d2 = update_policy_dictionary(env, q, grid, opt);
  EXPECT_EQ(audit_dictionary(env, d1), 0u);
  for (const auto& [s, e] : d1.entries()) EXPECT_EQ(e.action, d2.action(s));
}

TEST(PolicyDictionary, GuardAndOnDemandMode) {
  const LambdaGrid grid(5.0, 50);
  const auto env = make_environment(EnvKind::TypeA, 4, 2.0, 0.9);
  const NetworkQ q(env, random_nets(env, 5.0, 2), 11);
  DictionaryOptions opt;
  opt.enumeration_guard = 8;
  EXPECT_THROW(update_policy_dictionary(env, q, grid, opt), CapacityError);

  opt.on_demand = true;
  const auto lazy = update_policy_dictionary(env, q, grid, opt);
  EXPECT_FALSE(lazy.is_enumerated());
  EXPECT_EQ(lazy.size(), 0u);
  opt.on_demand = false;
  opt.enumeration_guard = 1000;
  const auto full = update_policy_dictionary(env, q, grid, opt);
  EXPECT_EQ(lazy.action({1, 0, 1, 1}), full.action({1, 0, 1, 1}));
  EXPECT_EQ(lazy.lookup({1, 0, 1, 1}).lambda_star, full.lookup({1, 0, 1, 1}).lambda_star);
  EXPECT_EQ(lazy.size(), 1u);
}

TEST(PolicyDump, RoundTripAndValidation) {
  const LambdaGrid grid(5.0, 50);
  const auto env = make_environment(EnvKind::TypeA, 2, 1.0, 0.9);
  const auto dict = update_policy_dictionary(env, NetworkQ(env, random_nets(env, 5.0, 4), 11), grid, {});
  std::stringstream buf;
  write_policy_dump(buf, env, dict);
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), "joint_state,lambda_star,a_1,a_2,total_cost");
  const auto rows = read_policy_dump(buf);
  ASSERT_EQ(rows.size(), 4u);
  const auto back = policy_from_dump(env, rows);
  for (const auto& [s, e] : dict.entries()) {
    EXPECT_EQ(back.action(s), e.action);
    EXPECT_EQ(back.lookup(s).lambda_star, e.lambda_star);
  }

  std::stringstream missing("joint_state,lambda_star,a_1,a_2,total_cost\n0:0,0,0.5,0.5,1\n");
  EXPECT_THROW(policy_from_dump(env, read_policy_dump(missing)), ConfigError);
  std::stringstream infeasible(
      "joint_state,lambda_star,a_1,a_2,total_cost\n0:0,0,1,1,2\n0:1,0,0,0,0\n1:0,0,0,0,0\n1:1,0,0,0,0\n");
  EXPECT_THROW(policy_from_dump(env, read_policy_dump(infeasible)), ConfigError);
  std::stringstream bad_header("state,a\n");
  EXPECT_THROW(read_policy_dump(bad_header), ConfigError);
}

TEST(SelectorParsing, NamesRoundTrip) {
  EXPECT_EQ(parse_selector("de"), SelectorMethod::Evolution);
  EXPECT_EQ(parse_selector("greedy"), SelectorMethod::Greedy);
  EXPECT_EQ(to_string(SelectorMethod::Evolution), "de");
  EXPECT_THROW(parse_selector("random"), ConfigError);
}
