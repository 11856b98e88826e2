#ifndef HINF_ROLLOUT_H_
#define HINF_ROLLOUT_H_

#include <Eigen/Dense>
#include <cstdint>
#include <ostream>
#include <vector>

#include "hinf/approx.h"
#include "hinf/envkit.h"

namespace hinf::rollout {

struct Networks {
  nn::GaussianPolicy actor;
  nn::GaussianPolicy disturber;
  nn::DoubleHeadCritic critic;
};

// N independent environments stepped in lockstep. Each environment draws its
// noise from streams keyed by (seed, env index, global step).
struct EnvBatch {
  env::EnvModel model;
  std::vector<env::EnvState> states;
  std::vector<std::uint64_t> episodes;  // episodes started per env
  std::uint64_t seed = 0;
  bool randomize = false;
  std::int64_t steps = 0;  // lockstep counter across all collections

  static EnvBatch create(env::EnvModel model, int num_envs, std::uint64_t seed, bool randomize);
  int size() const { return static_cast<int>(states.size()); }
  // reset env i into its next episode
  void reset_env(int i);
};

enum class DisturberMode { kLearned, kUniform, kZero };

struct CollectOptions {
  DisturberMode disturber = DisturberMode::kLearned;
  // clip for learned forces, and the max intensity for uniform forces;
  // negative means the model's disturbance limit
  double force_limit = -1.0;
  // act with the policy mean (logp still recorded at the mean)
  bool deterministic_actor = false;
};

// Column j = env * horizon + t, so each env owns a contiguous block.
struct RolloutBuffer {
  int num_envs = 0;
  int horizon = 0;
  double r_max_task = 0.0;
  DisturberMode disturber = DisturberMode::kLearned;

  Eigen::MatrixXd obs;              // obs_dim x NT
  Eigen::MatrixXd action;           // raw actor sample
  Eigen::VectorXd action_logp;
  Eigen::MatrixXd disturbance_raw;  // normalized, pre-clip
  Eigen::MatrixXd force;            // applied, physical units
  Eigen::VectorXd disturbance_logp;
  Eigen::VectorXd force_norm;       // ||d|| as used by the objectives
  Eigen::VectorXd reward;           // R = R^task + R^aux
  Eigen::VectorXd task_reward;
  Eigen::VectorXd cost;             // R_max^task - R^task
  Eigen::VectorXd value;            // V_old(s_t)
  Eigen::VectorXd value_cost;       // V_old^cost(s_t)
  Eigen::VectorXd next_value;       // V_old(s_{t+1}); 0 after a fall
  Eigen::VectorXd next_value_cost;
  std::vector<std::uint8_t> done;      // episode ended at this step
  std::vector<std::uint8_t> terminal;  // ended by failure, bootstrap 0
  std::vector<std::uint8_t> fall;

  int index(int env, int t) const { return env * horizon + t; }
  int size() const { return num_envs * horizon; }
};

RolloutBuffer collect(const Networks& nets, EnvBatch& envs, int horizon,
                      const CollectOptions& opts = {});

enum class BaselineMode { kRaw, kOneStep };

struct AdvantageOptions {
  bool normalize_actor = true;
  BaselineMode disturber_baseline = BaselineMode::kOneStep;
};

struct AdvantageSet {
  Eigen::VectorXd actor_raw;     // n-step (lambda = 1) advantage
  Eigen::VectorXd actor;         // normalized when enabled
  Eigen::VectorXd returns;       // actor_raw + V
  Eigen::VectorXd cost_returns;  // gamma2-discounted cost-to-go
  Eigen::VectorXd disturber;
};

// Throws std::invalid_argument unless gamma, gamma2 are in [0, 1).
AdvantageSet compute_advantages(const RolloutBuffer& buf, double gamma, double gamma2, double eta,
                                const AdvantageOptions& opts = {});

// One row per transition:
// env,t,done,terminal,reward,task_reward,cost,value,value_cost,next_value,
// next_value_cost,action_logp,disturbance_logp,force_norm,obs_*,action_*,force_*
void write_csv(const RolloutBuffer& buf, std::ostream& os);

}  // namespace hinf::rollout

#endif  // HINF_ROLLOUT_H_
