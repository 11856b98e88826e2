#ifndef HINF_REWARDS_H_
#define HINF_REWARDS_H_

#include <Eigen/Dense>
#include <string_view>
#include <utility>
#include <vector>

namespace hinf::rewards {

// Inputs for every locomotion / standing reward term. Joint-space vectors may
// be empty, in which case the terms that consume them evaluate to 0.
struct RewardInputs {
  Eigen::Vector2d v_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d v_cmd_xy = Eigen::Vector2d::Zero();
  double omega_z = 0.0;
  double omega_z_cmd = 0.0;
  double v_z = 0.0;
  Eigen::Vector2d omega_xy = Eigen::Vector2d::Zero();

  Eigen::VectorXd q, q_dot, q_ddot, tau;
  Eigen::VectorXd q_min, q_max, q_dot_min, q_dot_max, tau_min, tau_max;

  Eigen::VectorXd action, action_prev, action_prev2;

  Eigen::Vector2d gravity_xy = Eigen::Vector2d::Zero();
  double height = 0.0;
  double height_target = 0.0;

  // contact flags of penalized bodies P, the harder-penalized subset E_p,
  // and the two front feet (FL, FR)
  std::vector<bool> penalized_contacts;
  std::vector<bool> extra_penalized_contacts;
  bool front_left_contact = false;
  bool front_right_contact = false;

  // body forward axis (standing task)
  Eigen::Vector3d forward_axis = Eigen::Vector3d::UnitX();
};

struct LocomotionScales {
  double lin_vel_tracking = 1.0;
  double ang_vel_tracking = 0.5;
  double z_vel = -2.0;
  double roll_pitch_vel = -0.05;
  double joint_power = -2e-5;
  double power_distribution = -1e-5;
  double joint_acc = -2.5e-7;
  double action_rate = -0.01;
  double smoothness = -0.01;
  double joint_pos_limits = -5.0;
  double joint_vel_limits = -5.0;
  double torque_limits = -5.0;
  double orientation = -0.2;
  double base_height = -1.0;
};

struct StandingScales {
  double lin_vel_tracking = 1.0;
  double ang_vel_tracking = 0.5;
  double joint_vel = -2e-4;
  double joint_acc = -2.5e-7;
  double action_rate = -0.01;
  double joint_pos_limits = -10.0;
  double joint_vel_limits = -10.0;
  double torque_limits = -10.0;
  double collision = -1.0;
  double extra_collision = -1.0;
  double front_feet_contact = 1.0;
  double orientation = 1.0;
  double root_height = 1.0;
};

// One row per term: name, raw value, scaled value, whether it is a task term.
struct RewardTerm {
  const char* name = "";
  double raw = 0.0;
  double scaled = 0.0;
  bool task = false;
};

struct RewardBreakdown {
  std::vector<RewardTerm> terms;
  double task = 0.0;
  double aux = 0.0;

  double total() const { return task + aux; }
  // scaled value of a named term; throws std::out_of_range if absent
  double term(std::string_view name) const;
};

// Upper bound of the task aggregate: the sum of the tracking scales.
double max_task_reward(const LocomotionScales& s);
double max_task_reward(const StandingScales& s);

// Ideal standing orientation v* = (0.2, 0, 1), normalized.
Eigen::Vector3d standing_target_axis();

double tracking_kernel(double squared_error, double sigma_track);
// (0.5 cos(v_f, v_hat) + 0.5)^2; throws on a zero-length axis
double orientation_reward(const Eigen::Vector3d& forward_axis);
// number of components outside the open interval (lo, hi)
double limit_violations(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi);
// population variance; 0 for empty input
double population_variance(const Eigen::VectorXd& x);

RewardBreakdown locomotion_reward(const RewardInputs& in, double sigma_track,
                                  const LocomotionScales& scales = {});
RewardBreakdown standing_reward(const RewardInputs& in, double sigma_track,
                                const StandingScales& scales = {});

// C = R_max^task - R^task, clamped at 0. Throws std::domain_error when the
// task reward exceeds the bound by more than 1e-9.
double cost(double task_reward, double r_max_task);

}  // namespace hinf::rewards

#endif  // HINF_REWARDS_H_
