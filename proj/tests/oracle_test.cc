#include "hinf/oracle.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace hinf::oracle {
namespace {

env::LqModel scalar(double a, double b, double e, double q = 1.0, double r = 1.0) {
  env::LqModel m;
  m.A = Eigen::MatrixXd::Constant(1, 1, a);
  m.B = Eigen::MatrixXd::Constant(1, 1, b);
  m.E = Eigen::MatrixXd::Constant(1, 1, e);
  m.Q = Eigen::MatrixXd::Constant(1, 1, q);
  m.R_u = Eigen::MatrixXd::Constant(1, 1, r);
  return m;
}

// positive root of s p^2 + (1 - q s - a^2) p - q = 0, s = b^2/r - e^2/g^2
double scalar_p(double a, double b, double e, double q, double r, double g) {
  const double s = b * b / r - e * e / (g * g);
  const double k = 1.0 - q * s - a * a;
  return (-k + std::sqrt(k * k + 4.0 * s * q)) / (2.0 * s);
}

TEST(Riccati, ScalarLqrClosedForm) {
  const RiccatiSolution sol = solve_lq_hinf(scalar(1.0, 1.0, 0.0), 1.0);
  ASSERT_TRUE(sol.feasible) << sol.status;
  EXPECT_NEAR(sol.P(0, 0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-9);
  EXPECT_NEAR(sol.K_u(0, 0), -sol.P(0, 0) / (1.0 + sol.P(0, 0)), 1e-9);
}

TEST(Riccati, ScalarGameClosedForm) {
  const RiccatiSolution sol = solve_lq_hinf(scalar(0.9, 1.0, 1.0), 3.0);
  ASSERT_TRUE(sol.feasible) << sol.status;
  EXPECT_NEAR(sol.P(0, 0), scalar_p(0.9, 1.0, 1.0, 1.0, 1.0, 3.0), 1e-9);
  EXPECT_LT(sol.P(0, 0), 9.0);
}

TEST(Riccati, ZeroDisturbanceInputIgnoresGamma) {
  const env::LqModel m = scalar(1.2, 1.0, 0.0);
  const RiccatiSolution a = solve_lq_hinf(m, 0.5), b = solve_lq_hinf(m, 50.0);
  ASSERT_TRUE(a.feasible && b.feasible);
  EXPECT_NEAR(a.P(0, 0), b.P(0, 0), 1e-12);
  EXPECT_NEAR(a.P(0, 0), scalar_p(1.2, 1.0, 0.0, 1.0, 1.0, 1.0), 1e-9);
}

TEST(Riccati, ThresholdSeparatesFeasibility) {
  const env::LqModel m = scalar(0.9, 1.0, 1.0);
  const double g = feasibility_threshold(m, 0.1, 10.0, 1e-8);
  EXPECT_GT(g, 0.1);
  EXPECT_LT(g, 10.0);
  EXPECT_FALSE(solve_lq_hinf(m, 0.99 * g).feasible);
  EXPECT_TRUE(solve_lq_hinf(m, 1.01 * g).feasible);
}

TEST(Riccati, MatrixSolutionIsPositiveSemidefinite) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n;
  for (int k = 0; k < 10; ++k) {
    env::LqModel m;
    m.A = Eigen::MatrixXd::NullaryExpr(3, 3, [&] { return 0.4 * n(gen); });
    m.B = Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return n(gen); });
    m.E = Eigen::MatrixXd::NullaryExpr(3, 1, [&] { return 0.3 * n(gen); });
    m.Q = Eigen::MatrixXd::Identity(3, 3);
    m.R_u = Eigen::MatrixXd::Identity(2, 2);
    const RiccatiSolution sol = solve_lq_hinf(m, 20.0);
    ASSERT_TRUE(sol.feasible) << sol.status;
    EXPECT_LT((sol.P - sol.P.transpose()).norm(), 1e-9);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sol.P).eigenvalues().minCoeff(),
              -1e-10);
  }
}

TEST(Riccati, BadInputThrows) {
  EXPECT_THROW(solve_lq_hinf(scalar(0.9, 1.0, 1.0), 0.0), std::invalid_argument);
  env::LqModel m = scalar(0.9, 1.0, 1.0);
  m.B = Eigen::MatrixXd::Zero(2, 1);
  EXPECT_THROW(solve_lq_hinf(m, 1.0), std::invalid_argument);
}

TEST(ValueIteration, ZeroCostsGiveZeroValue) {
  env::TabularGame g = env::TabularGame::random(5, 2, 3, 3);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a)
      for (int d = 0; d < 3; ++d) g.cost(s, a, d) = 0.0;
  g.intensity(0) = 0.0;
  const GameValue v = minmax_value_iteration(g, 0.5, 0.8);
  EXPECT_LT(v.value.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ValueIteration, SingleChoiceIsPolicyEvaluation) {
  const env::TabularGame g = env::TabularGame::random(6, 1, 1, 4);
  const GameValue v = minmax_value_iteration(g, 0.0, 0.8);
  Eigen::MatrixXd P(6, 6);
  Eigen::VectorXd c(6);
  for (int s = 0; s < 6; ++s) {
    P.row(s) = env::transition_distribution(g, s, 0, 0).transpose();
    c[s] = g.cost(s, 0, 0);
  }
  const Eigen::VectorXd exact = (Eigen::MatrixXd::Identity(6, 6) - 0.8 * P).lu().solve(c);
  EXPECT_LT((v.value - exact).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ValueIteration, LargeEtaPicksWeakestDisturbance) {
  env::TabularGame g = env::TabularGame::random(4, 2, 3, 5);
  g.intensity(0) = 1.0;
  g.intensity(1) = 0.1;
  g.intensity(2) = 2.0;
  const GameValue v = minmax_value_iteration(g, 1e6, 0.8);
  for (int d : v.disturbance) EXPECT_EQ(d, 1);
}

TEST(ValueIteration, FixedPointAndResidual) {
  const env::TabularGame g = env::TabularGame::random(7, 3, 3, 6);
  const GameValue v = minmax_value_iteration(g, 0.3, 0.9);
  EXPECT_LT(v.residual, 1e-11);
  const GameValue once = bellman_minmax(g, 0.3, 0.9, v.value);
  EXPECT_LT((once.value - v.value).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(once.policy, v.policy);
}

TEST(Bellman, ContractionAndMonotonicity) {
  const env::TabularGame g = env::TabularGame::random(8, 3, 4, 7);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> n;
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd v1 = Eigen::VectorXd::NullaryExpr(8, [&] { return 3.0 * n(gen); });
    const Eigen::VectorXd v2 = Eigen::VectorXd::NullaryExpr(8, [&] { return 3.0 * n(gen); });
    const Eigen::VectorXd t1 = bellman_minmax(g, 0.4, 0.7, v1).value;
    const Eigen::VectorXd t2 = bellman_minmax(g, 0.4, 0.7, v2).value;
    EXPECT_LE((t1 - t2).cwiseAbs().maxCoeff(),
              0.7 * (v1 - v2).cwiseAbs().maxCoeff() * (1.0 + 1e-12));
    const Eigen::VectorXd hi = v1.cwiseMax(v2);
    const Eigen::VectorXd th = bellman_minmax(g, 0.4, 0.7, hi).value;
    EXPECT_TRUE((th.array() >= t1.array() - 1e-12).all());
  }
}

TEST(Ratio, Examples) {
  std::vector<Trajectory> t(1);
  t[0].cost = {0.0, 0.0};
  t[0].force_norm = {1.0, 3.0};
  EXPECT_EQ(empirical_hinf_ratio(t), 0.0);
  t[0].cost = {1.0, 1.0};
  t[0].force_norm = {2.0, 2.0};
  EXPECT_DOUBLE_EQ(empirical_hinf_ratio(t), 0.5);
  t.push_back({{3.0}, {4.0}});
  EXPECT_DOUBLE_EQ(empirical_hinf_ratio(t), 5.0 / 8.0);
  t = {{{1.0}, {0.0}}};
  EXPECT_THROW(empirical_hinf_ratio(t), std::domain_error);
}

TEST(Grid, DiscretizationIsStochastic) {
  ScalarLqGrid grid;
  const env::TabularGame g = discretize_scalar_lq(grid);
  g.validate();
  EXPECT_EQ(g.n_states(), 33);
  const std::vector<double> xs = grid_points(-2.0, 2.0, 33);
  EXPECT_EQ(xs.front(), -2.0);
  EXPECT_EQ(xs.back(), 2.0);
  EXPECT_NEAR(xs[16], 0.0, 1e-15);
  EXPECT_NEAR(g.cost(16, 80, 40), 0.0, 1e-15);
}

TEST(MarkovChain, ConstantPayoff) {
  env::TabularGame g(2, 1, 1);
  g.prob(0, 0, 0, 1) = g.prob(1, 0, 0, 0) = 1.0;
  g.cost(0, 0, 0) = 1.0;
  g.cost(1, 0, 0) = 3.0;
  g.intensity(0) = 2.0;
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(2, 1);
  const MarkovChainResult r = simulate_average_payoff(g, one, one, 0.5, 0, 1000, 1);
  EXPECT_DOUBLE_EQ(r.mean_cost, 2.0);
  EXPECT_DOUBLE_EQ(r.mean_intensity, 2.0);
  EXPECT_DOUBLE_EQ(r.mean_payoff, 1.0);
}

TEST(Csv, RiccatiAndValue) {
  std::ostringstream a, b;
  write_csv(solve_lq_hinf(scalar(0.9, 1.0, 1.0), 3.0), a);
  write_csv(minmax_value_iteration(env::TabularGame::random(3, 2, 2, 1), 0.2, 0.5), b);
  EXPECT_FALSE(a.str().empty());
  const std::string rows = b.str();
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 4);
}

}  // namespace
}  // namespace hinf::oracle
