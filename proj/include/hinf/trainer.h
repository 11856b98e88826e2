#ifndef HINF_TRAINER_H_
#define HINF_TRAINER_H_

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hinf/approx.h"
#include "hinf/envkit.h"
#include "hinf/rollout.h"

namespace hinf {

// Constraint bookkeeping and the PPO coefficients it is optimized with.
struct HinfState {
  double eta = 1.0;     // cost per unit disturbance intensity
  double lambda = 1.0;  // Lagrangian multiplier, >= 0
  double alpha = 0.01;  // multiplier step size
  double lambda_max = 100.0;
  double r_max_task = 1.5;
  double gamma = 0.99;
  double gamma2 = 0.8;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 1.0;
  double disturber_entropy_coef = 0.001;

  void validate() const;
};

struct LossReport {
  std::int64_t iteration = 0;
  double actor_clip = 0.0;  // mean L^CLIP over the last epoch
  double entropy = 0.0;
  double value_loss = 0.0;
  double cost_value_loss = 0.0;
  double actor_loss = 0.0;
  double disturber_loss = 0.0;
  double l_hinf_mean = 0.0;  // batch mean at collection, drives the dual step
  double sat_frac = 0.0;     // fraction of transitions with a positive constraint term
  double lambda_before = 0.0, lambda_after = 0.0;
  double eta_before = 0.0, eta_after = 0.0;
  bool eta_skipped = false;
  double sum_cost = 0.0;
  double sum_force_norm = 0.0;
  double mean_task_reward = 0.0;
  double mean_cost = 0.0;
  double mean_force_norm = 0.0;
  int samples = 0;
  int falls = 0;
};

struct LossValue {
  double loss = 0.0;
  double clip_objective = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;       // (V - R)^2 mean
  double cost_value_loss = 0.0;  // (V^cost - C_ret)^2 mean
  double l_hinf = 0.0;           // surrogate batch mean
  Eigen::VectorXd policy_grad;   // actor or disturber parameters
  Eigen::VectorXd critic_grad;   // empty for the disturber loss
};

// -(L^CLIP + c1 S - c2 L^VALUE + lambda L^Hinf) on the transitions in idx,
// with gradients for actor and critic. The L^Hinf surrogate is
// mean(eta ||d|| - q_t C_t + V^cost(s_t) - V^cost(s_{t+1})) with the V^cost
// terms taken from the buffer (no critic gradient). Throws std::runtime_error
// when |log ratio| > 20.
LossValue actor_loss(const rollout::RolloutBuffer& buf, const rollout::AdvantageSet& adv,
                     const nn::GaussianPolicy& actor, const nn::DoubleHeadCritic& critic,
                     std::span<const int> idx, const HinfState& h);

// Clipped surrogate on disturber log-probs with the disturber advantages,
// minus its entropy bonus.
LossValue disturber_loss(const rollout::RolloutBuffer& buf, const rollout::AdvantageSet& adv,
                         const nn::GaussianPolicy& disturber, std::span<const int> idx,
                         const HinfState& h);

// Per-transition constraint term eta ||d|| - C + V^cost(s) - V^cost(s').
Eigen::VectorXd hinf_terms(const rollout::RolloutBuffer& buf, double eta);

// lambda' = clamp(lambda - alpha * l_hinf_mean, 0, lambda_max)
HinfState dual_update(const HinfState& h, double l_hinf_mean);

struct EtaUpdate {
  HinfState state;
  bool skipped = false;
};
// eta' = 0.9 eta + 0.1 sum_cost / sum_force_norm; skipped when the
// intensity sum is below guard.
EtaUpdate eta_update(const HinfState& h, double sum_cost, double sum_force_norm,
                     double guard = 1e-6);

enum class DisturberKind { kLearned, kCurriculum, kNone };

struct TrainerConfig {
  HinfState hinf;
  bool use_hinf_loss = true;  // false forces lambda = 0
  DisturberKind disturber = DisturberKind::kLearned;
  rollout::BaselineMode disturber_baseline = rollout::BaselineMode::kOneStep;
  bool normalize_advantages = true;
  double eta_guard = 1e-6;

  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{128, 128};
  nn::Activation activation = nn::Activation::kTanh;
  double actor_init_log_std = -0.7;
  double disturber_init_log_std = -1.2;

  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double disturber_lr = 3e-4;
  int epochs = 5;
  int minibatches = 4;
  double max_grad_norm = 1.0;  // 0 disables clipping

  int num_envs = 64;
  int horizon = 100;
  bool randomize = true;
  double force_limit = -1.0;  // learned-disturber clip; <0 uses the env limit

  double curriculum_max_force = 100.0;
  int curriculum_ramp_iterations = 2000;

  bool update_actor = true;
  bool update_disturber = true;
  bool update_eta = true;
  bool deterministic_actor = false;  // collect with the actor mean

  void validate() const;
};

// Linear ramp 0 -> max reached at ramp_iterations, then held.
double curriculum_force(std::int64_t iteration, double max_force, int ramp_iterations);

struct Optimizers {
  nn::Adam actor, critic, disturber;
};

// One-network gradient step with optional global-norm clipping.
Eigen::VectorXd clip_grad(const Eigen::VectorXd& g, double max_norm);

class Trainer {
 public:
  Trainer(env::EnvModel model, TrainerConfig cfg, std::uint64_t seed);

  // Collect, update actor/critic and disturber, then step lambda and eta.
  LossReport train_iteration();

  const TrainerConfig& config() const { return cfg_; }
  TrainerConfig& mutable_config() { return cfg_; }
  const HinfState& state() const { return state_; }
  HinfState& mutable_state() { return state_; }
  const rollout::Networks& networks() const { return nets_; }
  rollout::Networks& mutable_networks() { return nets_; }
  Optimizers& optimizers() { return opt_; }
  const Optimizers& optimizers() const { return opt_; }
  rollout::EnvBatch& envs() { return envs_; }
  const rollout::EnvBatch& envs() const { return envs_; }
  std::int64_t iteration() const { return iteration_; }
  void set_iteration(std::int64_t it) { iteration_ = it; }
  std::uint64_t seed() const { return seed_; }
  const env::EnvModel& model() const { return envs_.model; }

  // Last collected buffer and advantages, for inspection and tests.
  const rollout::RolloutBuffer& last_buffer() const { return last_buf_; }
  const rollout::AdvantageSet& last_advantages() const { return last_adv_; }

 private:
  double update_actor_critic(const rollout::RolloutBuffer& buf, const rollout::AdvantageSet& adv,
                             LossReport& rep);
  double update_disturber(const rollout::RolloutBuffer& buf, const rollout::AdvantageSet& adv);
  std::vector<std::vector<int>> minibatches(int n, int epoch, std::uint64_t salt) const;

  TrainerConfig cfg_;
  std::uint64_t seed_;
  HinfState state_;
  rollout::Networks nets_;
  Optimizers opt_;
  rollout::EnvBatch envs_;
  std::int64_t iteration_ = 0;
  rollout::RolloutBuffer last_buf_;
  rollout::AdvantageSet last_adv_;
};

rollout::Networks make_networks(const env::EnvModel& model, const TrainerConfig& cfg,
                                std::uint64_t seed);

}  // namespace hinf

#endif  // HINF_TRAINER_H_
