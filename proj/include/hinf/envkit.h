#ifndef HINF_ENVKIT_H_
#define HINF_ENVKIT_H_

#include <Eigen/Dense>
#include <cstdint>
#include <numbers>
#include <variant>
#include <vector>

#include "hinf/rewards.h"
#include "hinf/rng.h"

namespace hinf::env {

// Episode-level physical randomization (ranges of the Table III analog).
struct RandomizationDraw {
  double friction = 1.0;
  double restitution = 0.5;
  double kp_scale = 1.0;
  double kd_scale = 1.0;
  double init_state_scale = 1.0;
};

struct RandomizationRanges {
  static constexpr double kFrictionMin = 0.2, kFrictionMax = 2.75;
  static constexpr double kRestitutionMin = 0.0, kRestitutionMax = 1.0;
  static constexpr double kKpMin = 0.8, kKpMax = 1.2;
  static constexpr double kKdMin = 0.8, kKdMax = 1.2;
  static constexpr double kInitMin = 0.5, kInitMax = 1.5;
};

RandomizationDraw sample_randomization(CounterRng& rng);
bool in_ranges(const RandomizationDraw& d);

struct EnvState {
  // point-mass
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double angular_velocity = 0.0;
  Eigen::Vector3d command = Eigen::Vector3d::Zero();
  double heading_target = 0.0;
  int speed_fault_steps = 0;
  int heading_fault_steps = 0;

  // linear-quadratic
  Eigen::VectorXd x;
  // tabular
  int cell = 0;

  Eigen::VectorXd last_action;  // a_{t-1}
  Eigen::VectorXd prev_action;  // a_{t-2}
  std::int64_t time_index = 0;
  bool terminated = false;
  bool randomized = false;
  RandomizationDraw draw;
  std::uint64_t stream_seed = 0;
};

struct Disturbance {
  Eigen::VectorXd force;
};

struct RewardDecomposition {
  double task = 0.0;
  double aux = 0.0;
};

struct StepResult {
  EnvState next_state;
  RewardDecomposition reward;
  bool terminated = false;  // episode over (fall or time limit)
  bool truncated = false;   // over because of the time limit only
  bool fall = false;
};

// Planar point mass tracking a (v_x, v_y, omega_z) body-frame command. Actions
// are normalized body-frame forces and a yaw torque, disturbances are world
// frame forces in Newtons.
struct PointMassConfig {
  double mass = 12.0;
  double dt = 0.02;
  double actuator_force_limit = 150.0;  // per axis
  double yaw_inertia = 1.0;
  double yaw_torque_limit = 5.0;
  double yaw_damping = 1.0;
  double friction = 1.0;  // velocity damping rate when not randomized
  double disturbance_limit = 100.0;
  double fall_speed_error = 3.0;
  double fall_heading_error = std::numbers::pi / 2.0;
  double fall_hold_time = 0.5;
  int episode_steps = 1000;
  bool terminate_on_fall = true;
  Eigen::Vector3d command_min{-1.0, -0.5, -1.0};
  Eigen::Vector3d command_max{1.5, 0.5, 1.0};
  Eigen::Vector2d init_velocity = Eigen::Vector2d::Zero();
  double init_heading = 0.0;
  double sigma_track = 0.25;
  rewards::LocomotionScales scales;
};

class PointMass {
 public:
  explicit PointMass(PointMassConfig cfg = {});
  const PointMassConfig& config() const { return cfg_; }
  void validate() const;
  int fall_hold_steps() const;

 private:
  PointMassConfig cfg_;
};

// x' = A x + B u + E w with stage cost x'Qx + u'R_u u.
struct LqModel {
  Eigen::MatrixXd A, B, E, Q, R_u;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int l() const { return static_cast<int>(E.cols()); }
  // throws std::invalid_argument on shape, definiteness or stabilizability failure
  void validate() const;
};

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct LqEnvConfig {
  LqModel model;
  Eigen::VectorXd x_init;  // nominal initial state
  double u_limit = 1e3;    // per component
  double w_limit = 1.0;    // l2 norm
  double fail_norm = 1e3;
  double r_max_task = 1.5;
  int episode_steps = 200;
};

class LqEnv {
 public:
  explicit LqEnv(LqEnvConfig cfg);
  const LqEnvConfig& config() const { return cfg_; }
  void validate() const;

 private:
  LqEnvConfig cfg_;
};

// Finite min-max game: P(s'|s,a,d), cost C(s,a,d) >= 0, and a per-disturbance
// intensity ||d|| used by the payoff C - eta ||d||.
class TabularGame {
 public:
  TabularGame(int n_states, int n_actions, int n_disturbances);

  int n_states() const { return ns_; }
  int n_actions() const { return na_; }
  int n_disturbances() const { return nd_; }

  double& prob(int s, int a, int d, int s_next) { return p_[index(s, a, d) * ns_ + s_next]; }
  double prob(int s, int a, int d, int s_next) const { return p_[index(s, a, d) * ns_ + s_next]; }
  double& cost(int s, int a, int d) { return c_[index(s, a, d)]; }
  double cost(int s, int a, int d) const { return c_[index(s, a, d)]; }
  double& intensity(int d) { return norm_[d]; }
  double intensity(int d) const { return norm_[d]; }

  double max_cost() const;
  void validate() const;

  static TabularGame random(int n_states, int n_actions, int n_disturbances, std::uint64_t seed);

 private:
  std::size_t index(int s, int a, int d) const {
    return (static_cast<std::size_t>(s) * na_ + a) * nd_ + d;
  }
  int ns_, na_, nd_;
  std::vector<double> p_, c_, norm_;
};

// Exact row P(.|s,a,d); throws std::out_of_range on bad indices.
Eigen::VectorXd transition_distribution(const TabularGame& game, int s, int a, int d);

struct TabularEnvConfig {
  static constexpr int kMaxStates = 16, kMaxActions = 4, kMaxDisturbances = 4;
  int episode_steps = 100;
  int initial_state = 0;
};

// The tabular game as a continuous-control environment: action[0] and
// force[0] in [-1, 1] are binned to indices.
class TabularEnv {
 public:
  TabularEnv(TabularGame game, TabularEnvConfig cfg = {});
  const TabularGame& game() const { return game_; }
  const TabularEnvConfig& config() const { return cfg_; }
  void validate() const;
  int action_index(double a) const;
  int disturbance_index(double f) const;

 private:
  TabularGame game_;
  TabularEnvConfig cfg_;
};

using EnvModel = std::variant<PointMass, LqEnv, TabularEnv>;

EnvState reset(const EnvModel& model, std::uint64_t seed, bool randomize);
StepResult step(const EnvModel& model, const EnvState& state, const Eigen::VectorXd& action,
                const Disturbance& disturbance);

int observation_dim(const EnvModel& model);
int action_dim(const EnvModel& model);
int disturbance_dim(const EnvModel& model);
double disturbance_limit(const EnvModel& model);
double r_max_task(const EnvModel& model);
int episode_steps(const EnvModel& model);
double control_dt(const EnvModel& model);

// Network input features for a state.
void observe(const EnvModel& model, const EnvState& state, Eigen::Ref<Eigen::VectorXd> out);
Eigen::VectorXd observe(const EnvModel& model, const EnvState& state);

// ||d|| as it enters the H-infinity objectives.
double intensity(const EnvModel& model, const Disturbance& d);

// Point-mass helpers.
Eigen::Vector2d body_velocity(const EnvState& s);
double tracking_error(const EnvState& s);
double wrap_angle(double a);  // into (-pi, pi]

// Builds a zero force of the model's disturbance dimension.
Disturbance zero_disturbance(const EnvModel& model);

}  // namespace hinf::env

#endif  // HINF_ENVKIT_H_
