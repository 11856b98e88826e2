#include "hinf/trainer.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "test_util.h"

namespace hinf {
namespace {

using rollout::AdvantageSet;
using rollout::RolloutBuffer;

// One-sample buffer whose disturbance was drawn with log-prob shifted so the
// new/old ratio is q under a zero-parameter policy.
struct Single {
  RolloutBuffer buf;
  AdvantageSet adv;
  nn::GaussianPolicy pol{2, 2, {4}, nn::Activation::kTanh, -0.5};
};

Single single(double q, double a) {
  Single s;
  RolloutBuffer& b = s.buf;
  b.num_envs = b.horizon = 1;
  b.obs = Eigen::MatrixXd::Constant(2, 1, 0.3);
  b.disturbance_raw = Eigen::MatrixXd::Constant(2, 1, 0.2);
  b.action = b.disturbance_raw;
  const double logp = nn::gaussian_logprob(Eigen::VectorXd::Zero(2), s.pol.log_std(),
                                           b.disturbance_raw.col(0));
  b.disturbance_logp = b.action_logp = Eigen::VectorXd::Constant(1, logp - std::log(q));
  b.cost = b.force_norm = b.value_cost = b.next_value_cost = Eigen::VectorXd::Zero(1);
  s.adv.disturber = s.adv.actor = Eigen::VectorXd::Constant(1, a);
  s.adv.returns = s.adv.cost_returns = Eigen::VectorXd::Zero(1);
  return s;
}

const std::vector<int> kOne{0};

TEST(Surrogate, ClipExamples) {
  HinfState h;
  h.disturber_entropy_coef = 0.0;
  Single up = single(1.5, 1.0);
  EXPECT_NEAR(disturber_loss(up.buf, up.adv, up.pol, kOne, h).clip_objective, 1.2, 1e-12);
  Single down = single(0.5, -1.0);
  EXPECT_NEAR(disturber_loss(down.buf, down.adv, down.pol, kOne, h).clip_objective, -0.8, 1e-12);
  Single inside = single(1.1, 2.0);
  EXPECT_NEAR(disturber_loss(inside.buf, inside.adv, inside.pol, kOne, h).clip_objective, 2.2,
              1e-12);
}

TEST(Surrogate, ClippedSampleHasNoGradient) {
  HinfState h;
  h.disturber_entropy_coef = 0.0;
  Single s = single(1.5, 1.0);
  EXPECT_EQ(disturber_loss(s.buf, s.adv, s.pol, kOne, h).policy_grad.norm(), 0.0);
}

TEST(Surrogate, RatioOverflowThrows) {
  HinfState h;
  Single s = single(std::exp(25.0), 1.0);
  EXPECT_THROW(disturber_loss(s.buf, s.adv, s.pol, kOne, h), std::runtime_error);
}

TEST(Surrogate, DisturberLossNeedsLearnedBuffer) {
  HinfState h;
  Single s = single(1.0, 1.0);
  s.buf.disturber = rollout::DisturberMode::kUniform;
  EXPECT_THROW(disturber_loss(s.buf, s.adv, s.pol, kOne, h), std::logic_error);
  s.buf.disturber = rollout::DisturberMode::kLearned;
  EXPECT_THROW(disturber_loss(s.buf, s.adv, s.pol, {}, h), std::invalid_argument);
}

struct Batch {
  RolloutBuffer buf;
  AdvantageSet adv;
  rollout::Networks nets;
};

Batch random_batch(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Batch b;
  b.buf = testing::random_buffer(3, 2, 2, 3, 10, gen);
  b.adv = rollout::compute_advantages(b.buf, 0.99, 0.8, 0.2);
  b.nets = {nn::GaussianPolicy(3, 2, {6}, nn::Activation::kTanh, -0.3),
            nn::GaussianPolicy(3, 2, {6}, nn::Activation::kTanh, -0.3),
            nn::DoubleHeadCritic(3, {6}, nn::Activation::kTanh)};
  b.nets.actor.init(hash_key(seed, 1), 0.5);
  b.nets.critic.init(hash_key(seed, 3));
  return b;
}

std::vector<int> all(const RolloutBuffer& b) {
  std::vector<int> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

TEST(ActorLoss, ZeroAdvantagesGiveNoPolicyGradient) {
  Batch b = random_batch(1);
  b.adv.actor.setZero();
  HinfState h;
  h.lambda = 0.0;
  h.entropy_coef = 0.0;
  const LossValue lv = actor_loss(b.buf, b.adv, b.nets.actor, b.nets.critic, all(b.buf), h);
  EXPECT_EQ(lv.policy_grad.norm(), 0.0);
  EXPECT_EQ(lv.clip_objective, 0.0);
}

TEST(ActorLoss, UnconstrainedIgnoresEtaAndCost) {
  Batch b = random_batch(2);
  HinfState h;
  h.lambda = 0.0;
  const std::vector<int> idx = all(b.buf);
  const LossValue base = actor_loss(b.buf, b.adv, b.nets.actor, b.nets.critic, idx, h);
  h.eta = 17.0;
  b.buf.cost.array() += 0.3;
  const LossValue other = actor_loss(b.buf, b.adv, b.nets.actor, b.nets.critic, idx, h);
  EXPECT_EQ(base.policy_grad, other.policy_grad);
  EXPECT_EQ(base.loss, other.loss);
}

TEST(ActorLoss, ConstraintGradientLinearInLambda) {
  const Batch b = random_batch(3);
  const std::vector<int> idx = all(b.buf);
  auto grad = [&](double lambda) {
    HinfState h;
    h.lambda = lambda;
    return actor_loss(b.buf, b.adv, b.nets.actor, b.nets.critic, idx, h).policy_grad;
  };
  const Eigen::VectorXd g0 = grad(0.0), g1 = grad(1.0);
  for (double l : {0.3, 2.0, 7.5}) {
    EXPECT_LT((grad(l) - g0 - l * (g1 - g0)).norm(), 1e-10 * (1.0 + g1.norm()));
  }
}

TEST(ActorLoss, SurrogateAtOldPolicyMatchesHinfTerms) {
  Batch b = random_batch(4);
  const std::vector<int> idx = all(b.buf);
  const nn::PolicyOutput po = b.nets.actor.forward(b.buf.obs);
  for (int j = 0; j < b.buf.size(); ++j) {
    b.buf.action_logp[j] =
        nn::gaussian_logprob(po.mean.col(j), po.log_std, b.buf.action.col(j));
  }
  HinfState h;
  h.eta = 0.37;
  const LossValue lv = actor_loss(b.buf, b.adv, b.nets.actor, b.nets.critic, idx, h);
  EXPECT_NEAR(lv.l_hinf, hinf_terms(b.buf, 0.37).mean(), 1e-12);
}

TEST(HinfTerms, EtaShiftIsLinearInForce) {
  const Batch b = random_batch(5);
  const Eigen::VectorXd d = hinf_terms(b.buf, 0.9) - hinf_terms(b.buf, 0.4);
  EXPECT_LT((d - 0.5 * b.buf.force_norm).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dual, Examples) {
  HinfState h;
  h.lambda = 0.5;
  h.alpha = 0.1;
  EXPECT_DOUBLE_EQ(dual_update(h, 1.0).lambda, 0.4);
  EXPECT_DOUBLE_EQ(dual_update(h, -1.0).lambda, 0.6);
  h.lambda = 0.05;
  EXPECT_EQ(dual_update(h, 1.0).lambda, 0.0);
  h.lambda = 99.99;
  EXPECT_EQ(dual_update(h, -10.0).lambda, h.lambda_max);
}

TEST(Dual, NeverNegative) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  HinfState h;
  for (int k = 0; k < 1000; ++k) {
    h = dual_update(h, u(gen));
    ASSERT_GE(h.lambda, 0.0);
    ASSERT_LE(h.lambda, h.lambda_max);
  }
}

TEST(Eta, Examples) {
  HinfState h;
  h.eta = 1.0;
  EXPECT_DOUBLE_EQ(eta_update(h, 0.5, 1.0).state.eta, 0.95);
  h.eta = 0.7;
  EXPECT_DOUBLE_EQ(eta_update(h, 0.0, 3.0).state.eta, 0.9 * 0.7);
  const EtaUpdate skip = eta_update(h, 2.0, 0.0);
  EXPECT_TRUE(skip.skipped);
  EXPECT_EQ(skip.state.eta, 0.7);
}

TEST(Eta, ConvergesToFixedRatio) {
  HinfState h;
  h.eta = 5.0;
  for (int k = 0; k < 400; ++k) h = eta_update(h, 0.6, 2.0).state;
  EXPECT_NEAR(h.eta, 0.3, 1e-12);
}

TEST(Helpers, CurriculumAndClip) {
  EXPECT_EQ(curriculum_force(0, 100.0, 2000), 0.0);
  EXPECT_EQ(curriculum_force(1000, 100.0, 2000), 50.0);
  EXPECT_EQ(curriculum_force(5000, 100.0, 2000), 100.0);
  EXPECT_EQ(curriculum_force(3, 100.0, 0), 100.0);
  const Eigen::Vector2d g(3.0, 4.0);
  EXPECT_EQ(clip_grad(g, 0.0), g);
  EXPECT_EQ(clip_grad(g, 10.0), g);
  EXPECT_NEAR(clip_grad(g, 1.0).norm(), 1.0, 1e-15);
}

TrainerConfig tiny() {
  TrainerConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.num_envs = 2;
  c.horizon = 16;
  c.epochs = 2;
  c.minibatches = 2;
  return c;
}

TEST(Trainer, ZeroLearningRatesLeaveParametersUnchanged) {
  TrainerConfig c = tiny();
  c.actor_lr = c.critic_lr = c.disturber_lr = 0.0;
  Trainer t(env::PointMass{}, c, 3);
  const Eigen::VectorXd a = t.networks().actor.flat_params();
  const Eigen::VectorXd d = t.networks().disturber.flat_params();
  const Eigen::VectorXd v = t.networks().critic.net().params();
  t.train_iteration();
  t.train_iteration();
  EXPECT_EQ(t.networks().actor.flat_params(), a);
  EXPECT_EQ(t.networks().disturber.flat_params(), d);
  EXPECT_EQ(t.networks().critic.net().params(), v);
}

TEST(Trainer, Deterministic) {
  Trainer a(env::PointMass{}, tiny(), 9), b(env::PointMass{}, tiny(), 9);
  for (int k = 0; k < 3; ++k) {
    const LossReport ra = a.train_iteration(), rb = b.train_iteration();
    EXPECT_EQ(ra.actor_loss, rb.actor_loss);
    EXPECT_EQ(ra.eta_after, rb.eta_after);
    EXPECT_EQ(ra.lambda_after, rb.lambda_after);
  }
  EXPECT_EQ(a.networks().actor.flat_params(), b.networks().actor.flat_params());
  EXPECT_EQ(a.networks().disturber.flat_params(), b.networks().disturber.flat_params());
}

TEST(Trainer, ReportFollowsUpdateRules) {
  Trainer t(env::PointMass{}, tiny(), 11);
  for (int k = 0; k < 3; ++k) {
    const LossReport r = t.train_iteration();
    HinfState h = t.state();
    h.lambda = r.lambda_before;
    EXPECT_EQ(dual_update(h, r.l_hinf_mean).lambda, r.lambda_after);
    h.eta = r.eta_before;
    EXPECT_EQ(eta_update(h, r.sum_cost, r.sum_force_norm).state.eta, r.eta_after);
    EXPECT_EQ(r.samples, 32);
  }
}

TEST(Trainer, WithoutHinfLossLambdaStaysZero) {
  TrainerConfig c = tiny();
  c.use_hinf_loss = false;
  Trainer t(env::PointMass{}, c, 12);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(t.train_iteration().lambda_after, 0.0);
}

TEST(Trainer, NoDisturberAppliesNoForce) {
  TrainerConfig c = tiny();
  c.disturber = DisturberKind::kNone;
  Trainer t(env::PointMass{}, c, 13);
  EXPECT_EQ(t.train_iteration().mean_force_norm, 0.0);
}

TEST(Trainer, InvalidConfigRejected) {
  TrainerConfig c = tiny();
  c.minibatches = 0;
  EXPECT_THROW(Trainer(env::PointMass{}, c, 1), std::invalid_argument);
  c = tiny();
  c.hinf.gamma2 = 1.0;
  EXPECT_THROW(Trainer(env::PointMass{}, c, 1), std::invalid_argument);
}

}  // namespace
}  // namespace hinf
