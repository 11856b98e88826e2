#include "hinf/approx.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_util.h"

namespace hinf::nn {
namespace {

using testing::random_matrix;
using testing::rel_err;

TEST(Mlp, ZeroParamsGiveZeroMean) {
  const GaussianPolicy p(5, 3, {8, 8}, Activation::kTanh, -0.5);
  const PolicyOutput o = p.forward(Eigen::MatrixXd::Random(5, 4));
  EXPECT_EQ(o.mean, Eigen::MatrixXd::Zero(3, 4));
  EXPECT_EQ(o.log_std, Eigen::VectorXd::Constant(3, -0.5));
}

TEST(Mlp, DeterministicAndShapeChecked) {
  Mlp m({4, 6, 2}, Activation::kElu);
  m.init_orthogonal(3, 1.0, 1.0);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 7);
  EXPECT_EQ(m.forward(x), m.forward(x));
  EXPECT_THROW(m.forward(Eigen::MatrixXd::Random(3, 7)), std::invalid_argument);
}

TEST(Mlp, OutputChangeWithinLipschitzBound) {
  std::mt19937_64 gen(1);
  for (auto act : {Activation::kTanh, Activation::kElu}) {
    Mlp m({6, 16, 16, 3}, act);
    m.params() = random_matrix(static_cast<int>(m.num_params()), 1, gen);
    for (int k = 0; k < 50; ++k) {
      const Eigen::MatrixXd x = random_matrix(6, 1, gen);
      const Eigen::MatrixXd dx = random_matrix(6, 1, gen).normalized() * 1e-7;
      const double change = (m.forward(x + dx) - m.forward(x)).norm();
      EXPECT_LE(change, m.lipschitz_bound() * dx.norm() * (1.0 + 1e-6));
    }
  }
}

TEST(Mlp, IdentityNetworkGradientIsOuterProduct) {
  Mlp m({3, 3}, Activation::kTanh);
  Eigen::Map<Eigen::MatrixXd>(m.params().data(), 3, 3) = Eigen::Matrix3d::Identity();
  const Eigen::MatrixXd x = Eigen::Vector3d(1.0, -2.0, 0.5);
  Mlp::Tape tape;
  const Eigen::MatrixXd y = m.forward(x, &tape);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m.num_params());
  m.backward(tape, y, g);  // d(0.5 |y|^2)/dy = y
  EXPECT_EQ(Eigen::Map<Eigen::MatrixXd>(g.data(), 3, 3), x * x.transpose());
  EXPECT_EQ(g.tail(3), x);
}

TEST(Mlp, ConstantLossHasZeroGradient) {
  Mlp m({3, 5, 2}, Activation::kTanh);
  m.init_orthogonal(1, 1.0, 1.0);
  Mlp::Tape tape;
  m.forward(Eigen::MatrixXd::Random(3, 4), &tape);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m.num_params());
  m.backward(tape, Eigen::MatrixXd::Zero(2, 4), g);
  EXPECT_EQ(g, Eigen::VectorXd::Zero(m.num_params()));
}

TEST(Mlp, BackwardWithoutForwardThrows) {
  Mlp m({2, 2}, Activation::kTanh);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m.num_params());
  EXPECT_THROW(m.backward(Mlp::Tape{}, Eigen::MatrixXd::Zero(2, 1), g), std::logic_error);
}

TEST(Mlp, FiniteDifferenceGradients) {
  std::mt19937_64 gen(2);
  for (auto act : {Activation::kTanh, Activation::kElu}) {
    Mlp m({4, 7, 5, 3}, act);
    m.params() = random_matrix(static_cast<int>(m.num_params()), 1, gen, 0.7);
    const Eigen::MatrixXd x = random_matrix(4, 6, gen);
    const Eigen::MatrixXd w = random_matrix(3, 6, gen);
    auto loss = [&](const Mlp& net) { return (net.forward(x).array() * w.array()).sum(); };
    Mlp::Tape tape;
    m.forward(x, &tape);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m.num_params());
    m.backward(tape, w, g);
    for (Eigen::Index i = 0; i < m.num_params(); ++i) {
      Mlp up = m, down = m;
      up.params()[i] += 1e-5;
      down.params()[i] -= 1e-5;
      EXPECT_LT(rel_err(g[i], (loss(up) - loss(down)) / 2e-5), 1e-4) << i;
    }
  }
}

TEST(Critic, CostHeadNonnegativeAndGradients) {
  std::mt19937_64 gen(3);
  DoubleHeadCritic c(4, {6, 6}, Activation::kTanh);
  c.net().params() = random_matrix(static_cast<int>(c.num_params()), 1, gen, 3.0);
  const Eigen::MatrixXd x = random_matrix(4, 40, gen, 5.0);
  const CriticOutput o = c.forward(x);
  EXPECT_GE(o.v_cost.minCoeff(), 0.0);

  const Eigen::RowVectorXd wv = random_matrix(1, 40, gen), wc = random_matrix(1, 40, gen);
  auto loss = [&](const DoubleHeadCritic& cr) {
    const CriticOutput q = cr.forward(x);
    return q.v.dot(wv) + q.v_cost.dot(wc);
  };
  Mlp::Tape tape;
  const CriticOutput out = c.forward(x, &tape);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(c.num_params());
  c.backward(tape, out, wv, wc, g);
  for (Eigen::Index i = 0; i < c.num_params(); ++i) {
    DoubleHeadCritic up = c, down = c;
    up.net().params()[i] += 1e-5;
    down.net().params()[i] -= 1e-5;
    EXPECT_LT(rel_err(g[i], (loss(up) - loss(down)) / 2e-5), 1e-4) << i;
  }
}

TEST(Gaussian, LogprobAtMean) {
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::VectorXd log_std = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(gaussian_logprob(mean, log_std, mean), -0.5 * std::log(2.0 * std::numbers::pi),
              1e-15);
  EXPECT_NEAR(gaussian_logprob(mean, log_std, mean), -0.9189, 1e-4);
}

TEST(Gaussian, DensityIntegratesToOne) {
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(1, 0.4);
  const Eigen::VectorXd log_std = Eigen::VectorXd::Constant(1, std::log(0.7));
  double sum = 0.0;
  const double dx = 1e-3;
  for (double x = -8.0; x < 8.0; x += dx) {
    sum += std::exp(gaussian_logprob(mean, log_std, Eigen::VectorXd::Constant(1, x))) * dx;
  }
  EXPECT_NEAR(sum, 1.0, 1e-3);
}

TEST(Gaussian, FloorStdSamplesMean) {
  GaussianPolicy p(2, 2, {4}, Activation::kTanh, -50.0);
  EXPECT_EQ(p.clamped_log_std(), Eigen::VectorXd::Constant(2, kLogStdMin));
  const Eigen::VectorXd mean = Eigen::Vector2d(0.25, -1.5);
  CounterRng rng(1);
  const Sample s = sample_and_logprob(mean, Eigen::VectorXd::Constant(2, kLogStdMin), rng);
  EXPECT_LT((s.raw - mean).norm(), 0.01);
  EXPECT_TRUE(std::isfinite(s.logp));
}

TEST(Gaussian, SampleMeanMatches) {
  const Eigen::VectorXd mean = Eigen::Vector2d(0.5, -1.0);
  const Eigen::VectorXd log_std = Eigen::Vector2d(0.0, std::log(0.5));
  CounterRng rng(42);
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const Sample s = sample_and_logprob(mean, log_std, rng);
    ASSERT_NEAR(s.logp, gaussian_logprob(mean, log_std, s.raw), 1e-12);
    acc += s.raw;
  }
  acc /= n;
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(acc[i] - mean[i]), 3.0 * std::exp(log_std[i]) / std::sqrt(n));
  }
}

TEST(Gaussian, DisturbanceClippedRadially) {
  const Eigen::VectorXd mean = Eigen::Vector2d(3.0, -2.0);
  CounterRng rng(7);
  for (int k = 0; k < 1000; ++k) {
    const Sample s = sample_disturbance(mean, Eigen::Vector2d(0.5, 0.5), 100.0, rng);
    EXPECT_LE(s.action.norm(), 100.0 * (1.0 + 1e-15));
    EXPECT_NEAR(s.action.normalized().dot(s.raw.normalized()), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.logp, gaussian_logprob(mean, Eigen::Vector2d(0.5, 0.5), s.raw));
  }
  const Eigen::VectorXd small = Eigen::Vector2d(0.3, 0.4);
  EXPECT_EQ(radial_clip(small, 100.0), 100.0 * small);
}

TEST(Gaussian, PolicyGradientsIncludeLogStd) {
  std::mt19937_64 gen(4);
  GaussianPolicy p(3, 2, {5}, Activation::kTanh, -0.3);
  p.init(9, 0.5);
  const Eigen::MatrixXd x = random_matrix(3, 8, gen);
  const Eigen::MatrixXd a = random_matrix(2, 8, gen);
  auto loss = [&](const GaussianPolicy& q) {
    const PolicyOutput o = q.forward(x);
    double s = 0.0;
    for (int j = 0; j < 8; ++j) s += gaussian_logprob(o.mean.col(j), o.log_std, a.col(j));
    return s;
  };
  Mlp::Tape tape;
  const PolicyOutput o = p.forward(x, &tape);
  const Eigen::ArrayXd inv = (-o.log_std.array()).exp();
  Eigen::MatrixXd dm(2, 8);
  Eigen::VectorXd dl = Eigen::VectorXd::Zero(2);
  for (int j = 0; j < 8; ++j) {
    const Eigen::ArrayXd z = (a.col(j) - o.mean.col(j)).array() * inv;
    dm.col(j) = (z * inv).matrix();
    dl.array() += z.square() - 1.0;
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.num_params());
  p.backward(tape, dm, dl, g);
  const Eigen::VectorXd flat = p.flat_params();
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    GaussianPolicy up = p, down = p;
    Eigen::VectorXd f = flat;
    f[i] += 1e-5;
    up.set_flat_params(f);
    f[i] -= 2e-5;
    down.set_flat_params(f);
    EXPECT_LT(rel_err(g[i], (loss(up) - loss(down)) / 2e-5), 1e-4) << i;
  }
}

TEST(Adam, FirstStepIsLearningRateSized) {
  Adam opt(3, 0.1);
  const Eigen::VectorXd d = opt.step(Eigen::Vector3d(2.0, -0.5, 0.0));
  EXPECT_NEAR(d[0], -0.1, 1e-8);
  EXPECT_NEAR(d[1], 0.1, 1e-8);
  EXPECT_EQ(d[2], 0.0);
  EXPECT_EQ(opt.t(), 1);
}

}  // namespace
}  // namespace hinf::nn
