#include "hinf/evalkit.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace hinf::eval {
namespace {

TrainerConfig tiny() {
  TrainerConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.num_envs = 2;
  c.horizon = 10;
  c.epochs = 1;
  c.minibatches = 1;
  return c;
}

TEST(Pulses, FiveWindowsInTwentySeconds) {
  const std::vector<PulseWindow> w = pulse_windows(pulses(), 1000, 0.02);
  ASSERT_EQ(w.size(), 5u);
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_EQ(w[k].start, 100 + 200 * static_cast<int>(k));
    EXPECT_EQ(w[k].end - w[k].start, 25);
  }
}

TEST(Pulses, ForceOnlyInsideWindowsAndAxisAligned) {
  const DisturbanceRegime r = pulses(150.0, 4.0, 0.5, PulseAxis::kY);
  const std::vector<PulseWindow> w = pulse_windows(r, 1000, 0.02);
  for (int t = 0; t < 1000; ++t) {
    const bool inside = std::any_of(w.begin(), w.end(),
                                    [&](const PulseWindow& p) { return t >= p.start && t < p.end; });
    const Eigen::Vector2d f = scheduled_force(r, 3, 0, t, 0.02);
    EXPECT_EQ(f.x(), 0.0);
    EXPECT_DOUBLE_EQ(std::abs(f.y()), inside ? 150.0 : 0.0) << t;
  }
}

TEST(Schedule, Deterministic) {
  const DisturbanceRegime r = continuous_uniform(80.0);
  for (int t = 0; t < 100; ++t) {
    EXPECT_EQ(scheduled_force(r, 5, 2, t, 0.02), scheduled_force(r, 5, 2, t, 0.02));
  }
  EXPECT_NE(scheduled_force(r, 5, 2, 0, 0.02), scheduled_force(r, 6, 2, 0, 0.02));
  EXPECT_EQ(scheduled_force(no_disturbance(), 5, 2, 0, 0.02), Eigen::Vector2d::Zero());
}

TEST(Schedule, UniformIntensityPassesKs) {
  const DisturbanceRegime r = continuous_uniform(100.0);
  std::vector<double> u;
  for (int e = 0; e < 20; ++e)
    for (int t = 0; t < 500; ++t) u.push_back(scheduled_force(r, 11, e, t, 0.02).norm() / 100.0);
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, (i + 1) / n - u[i], u[i] - i / n});
  }
  EXPECT_LT(d, 1.36 / std::sqrt(n));
  EXPECT_LE(u.back(), 1.0);
}

TEST(Regime, NamesRoundTrip) {
  for (auto k : {RegimeKind::kNone, RegimeKind::kContinuousUniform, RegimeKind::kPulse,
                 RegimeKind::kTrainedAdversary}) {
    EXPECT_EQ(parse_regime_kind(regime_kind_name(k)), k);
  }
  EXPECT_THROW(parse_regime_kind("gale"), std::invalid_argument);
}

TEST(Evaluate, DeterministicAndCounts) {
  const env::EnvModel m = env::PointMass{};
  const rollout::Networks n = make_networks(m, tiny(), 4);
  EvalOptions o;
  o.episode_steps = 300;
  const EvalReport a = evaluate(m, n.actor, nullptr, pulses(), 3, 7, o);
  const EvalReport b = evaluate(m, n.actor, nullptr, pulses(), 3, 7, o);
  EXPECT_EQ(a.mean_tracking_error, b.mean_tracking_error);
  EXPECT_EQ(a.mean_tracking_curve, b.mean_tracking_curve);
  EXPECT_EQ(a.curve.size(), 300u);
  EXPECT_EQ(a.pulses, 3);
  EXPECT_LE(a.max_force_norm, 150.0);
  EXPECT_THROW(evaluate(m, n.actor, nullptr, trained_adversary(), 1, 7, o), std::invalid_argument);
}

TEST(Evaluate, AdversaryClipped) {
  const env::EnvModel m = env::PointMass{};
  rollout::Networks n = make_networks(m, tiny(), 5);
  n.disturber.init(9, 10.0);
  EvalOptions o;
  o.episode_steps = 100;
  const EvalReport r = evaluate(m, n.actor, &n.disturber, trained_adversary(40.0), 2, 1, o);
  EXPECT_LE(r.max_force_norm, 40.0 * (1.0 + 1e-12));
  EXPECT_GT(r.max_force_norm, 0.0);
}

TEST(Attack, ForcesStayWithinClip) {
  const env::EnvModel m = env::PointMass{};
  const rollout::Networks n = make_networks(m, tiny(), 6);
  AttackOptions o;
  o.epochs = 3;
  o.num_envs = 2;
  o.horizon = 20;
  o.force_limit = 60.0;
  const AttackResult r = train_attack_disturber(m, n, 0.01, tiny(), o, 3);
  ASSERT_EQ(r.max_force_norm.size(), 3u);
  for (double f : r.max_force_norm) EXPECT_LE(f, 60.0 * (1.0 + 1e-12));
  const InflictedCost c = inflicted_cost(m, n.actor, &r.disturber, 60.0, 2, 50, 4);
  EXPECT_LE(c.max_force_norm, 60.0 * (1.0 + 1e-12));
}

TEST(Attack, ZeroEpochsReturnsFreshDisturber) {
  const env::EnvModel m = env::PointMass{};
  const rollout::Networks n = make_networks(m, tiny(), 7);
  AttackOptions o;
  o.epochs = 0;
  const AttackResult a = train_attack_disturber(m, n, 0.5, tiny(), o, 3);
  const AttackResult b = train_attack_disturber(m, n, 2.0, tiny(), o, 3);
  EXPECT_TRUE(a.mean_cost.empty());
  EXPECT_EQ(a.disturber.flat_params(), b.disturber.flat_params());
}

TEST(Inflicted, UniformWithinLimit) {
  const env::EnvModel m = env::PointMass{};
  const rollout::Networks n = make_networks(m, tiny(), 8);
  const InflictedCost c = inflicted_cost(m, n.actor, nullptr, 100.0, 3, 100, 2);
  EXPECT_LE(c.max_force_norm, 100.0);
  EXPECT_NEAR(c.mean_force_norm, 50.0, 10.0);
  EXPECT_GE(c.mean_cost, 0.0);
}

TEST(Variants, CurriculumHalfwayIsHalfForce) {
  const TrainerConfig c = variant_config(tiny(), find_variant("curriculum"), 1000, 1.0);
  EXPECT_EQ(c.disturber, DisturberKind::kCurriculum);
  EXPECT_DOUBLE_EQ(curriculum_force(500, c.curriculum_max_force, c.curriculum_ramp_iterations),
                   50.0);
  EXPECT_FALSE(variant_config(tiny(), find_variant("no_hinf"), 10, 1.0).use_hinf_loss);
  EXPECT_EQ(variant_config(tiny(), find_variant("baseline"), 10, 1.0).disturber,
            DisturberKind::kCurriculum);
  EXPECT_EQ(ablation_variants().size(), 4u);
  EXPECT_THROW(find_variant("mystery"), std::invalid_argument);
}

TEST(Ablation, TableShape) {
  AblationConfig cfg;
  cfg.base = tiny();
  cfg.iterations = 1;
  cfg.eval_episodes = 1;
  cfg.eval.episode_steps = 20;
  cfg.attack.epochs = 1;
  cfg.attack.num_envs = 2;
  cfg.attack.horizon = 10;
  int trained = 0;
  const AblationResult r =
      ablation_suite(cfg, [&](const std::string&, std::uint64_t, const Trainer&) { ++trained; });
  EXPECT_EQ(trained, 12);
  ASSERT_EQ(r.rows.size(), 36u);
  EXPECT_EQ(r.reports.size(), 36u);
  std::set<std::tuple<std::string, std::string, std::uint64_t>> keys;
  for (const AblationRow& row : r.rows) keys.insert({row.variant, row.regime, row.seed});
  EXPECT_EQ(keys.size(), 36u);
  std::ostringstream os;
  write_table(r.rows, os);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 37);
}

}  // namespace
}  // namespace hinf::eval
