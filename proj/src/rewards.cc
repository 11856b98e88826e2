#include "hinf/rewards.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hinf::rewards {
namespace {

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string("non-finite reward input: ") + what);
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string("non-finite reward input: ") + what);
  }
}

void check_limits(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                  const Eigen::VectorXd& hi, const char* what) {
  if (x.size() == 0 && lo.size() == 0 && hi.size() == 0) return;
  if (lo.size() != x.size() || hi.size() != x.size()) {
    throw std::invalid_argument(std::string("limit size mismatch: ") + what);
  }
  if ((lo.array() >= hi.array()).any()) {
    throw std::invalid_argument(std::string("limits need min < max: ") + what);
  }
}

void validate(const RewardInputs& in) {
  require_finite(in.v_xy, "v_xy");
  require_finite(in.v_cmd_xy, "v_cmd_xy");
  require_finite(in.omega_z, "omega_z");
  require_finite(in.omega_z_cmd, "omega_z_cmd");
  require_finite(in.v_z, "v_z");
  require_finite(in.omega_xy, "omega_xy");
  require_finite(in.q, "q");
  require_finite(in.q_dot, "q_dot");
  require_finite(in.q_ddot, "q_ddot");
  require_finite(in.tau, "tau");
  require_finite(in.action, "action");
  require_finite(in.action_prev, "action_prev");
  require_finite(in.action_prev2, "action_prev2");
  require_finite(in.gravity_xy, "gravity_xy");
  require_finite(in.height, "height");
  require_finite(in.height_target, "height_target");
  require_finite(in.forward_axis, "forward_axis");
  check_limits(in.q, in.q_min, in.q_max, "q");
  check_limits(in.q_dot, in.q_dot_min, in.q_dot_max, "q_dot");
  check_limits(in.tau, in.tau_min, in.tau_max, "tau");
}

double squared_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 && b.size() == 0) return 0.0;
  if (a.size() != b.size()) throw std::invalid_argument("action size mismatch");
  return (a - b).squaredNorm();
}

double second_diff(const Eigen::VectorXd& a0, const Eigen::VectorXd& a1,
                   const Eigen::VectorXd& a2) {
  if (a0.size() == 0 && a1.size() == 0 && a2.size() == 0) return 0.0;
  if (a0.size() != a1.size() || a1.size() != a2.size()) {
    throw std::invalid_argument("action size mismatch");
  }
  return (a0 - 2.0 * a1 + a2).squaredNorm();
}

double contact_fraction(const std::vector<bool>& contacts) {
  if (contacts.empty()) return 0.0;
  const auto n = std::count(contacts.begin(), contacts.end(), true);
  return static_cast<double>(n) / static_cast<double>(contacts.size());
}

Eigen::VectorXd joint_power_vector(const RewardInputs& in) {
  if (in.tau.size() == 0 && in.q_dot.size() == 0) return {};
  if (in.tau.size() != in.q_dot.size()) throw std::invalid_argument("tau/q_dot size mismatch");
  return in.tau.cwiseAbs().cwiseProduct(in.q_dot.cwiseAbs());
}

void add(RewardBreakdown& out, const char* name, double raw, double scale, bool task) {
  const double scaled = raw * scale;
  out.terms.push_back({name, raw, scaled, task});
  (task ? out.task : out.aux) += scaled;
}

}  // namespace

double RewardBreakdown::term(std::string_view name) const {
  for (const auto& t : terms) {
    if (name == t.name) return t.scaled;
  }
  throw std::out_of_range("no reward term named " + std::string(name));
}

double max_task_reward(const LocomotionScales& s) {
  return std::max(0.0, s.lin_vel_tracking) + std::max(0.0, s.ang_vel_tracking);
}

double max_task_reward(const StandingScales& s) {
  return std::max(0.0, s.lin_vel_tracking) + std::max(0.0, s.ang_vel_tracking);
}

Eigen::Vector3d standing_target_axis() { return Eigen::Vector3d(0.2, 0.0, 1.0).normalized(); }

double tracking_kernel(double squared_error, double sigma_track) {
  if (!(sigma_track > 0.0)) throw std::invalid_argument("sigma_track must be > 0");
  return std::exp(-squared_error / sigma_track);
}

double orientation_reward(const Eigen::Vector3d& forward_axis) {
  const double n = forward_axis.norm();
  if (!(n > 0.0)) throw std::invalid_argument("zero-length forward axis");
  const double cosine = forward_axis.dot(standing_target_axis()) / n;
  const double r = 0.5 * cosine + 0.5;
  return r * r;
}

double limit_violations(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  if (x.size() == 0) return 0.0;
  return static_cast<double>(((x.array() <= lo.array()) || (x.array() >= hi.array())).count());
}

double population_variance(const Eigen::VectorXd& x) {
  if (x.size() == 0) return 0.0;
  const double mean = x.mean();
  return (x.array() - mean).square().mean();
}

RewardBreakdown locomotion_reward(const RewardInputs& in, double sigma_track,
                                  const LocomotionScales& s) {
  if (!(sigma_track > 0.0)) throw std::invalid_argument("sigma_track must be > 0");
  validate(in);
  RewardBreakdown out;
  out.terms.reserve(14);
  const double dw = in.omega_z - in.omega_z_cmd;
  add(out, "lin_vel_tracking", tracking_kernel((in.v_xy - in.v_cmd_xy).squaredNorm(), sigma_track),
      s.lin_vel_tracking, true);
  add(out, "ang_vel_tracking", tracking_kernel(dw * dw, sigma_track), s.ang_vel_tracking, true);
  add(out, "z_vel", in.v_z * in.v_z, s.z_vel, false);
  add(out, "roll_pitch_vel", in.omega_xy.squaredNorm(), s.roll_pitch_vel, false);
  const Eigen::VectorXd power = joint_power_vector(in);
  add(out, "joint_power", power.sum(), s.joint_power, false);
  add(out, "power_distribution", population_variance(power), s.power_distribution, false);
  add(out, "joint_acc", in.q_ddot.squaredNorm(), s.joint_acc, false);
  add(out, "action_rate", squared_diff(in.action, in.action_prev), s.action_rate, false);
  add(out, "smoothness", second_diff(in.action, in.action_prev, in.action_prev2), s.smoothness,
      false);
  add(out, "joint_pos_limits", limit_violations(in.q, in.q_min, in.q_max), s.joint_pos_limits,
      false);
  add(out, "joint_vel_limits", limit_violations(in.q_dot, in.q_dot_min, in.q_dot_max),
      s.joint_vel_limits, false);
  add(out, "torque_limits", limit_violations(in.tau, in.tau_min, in.tau_max), s.torque_limits,
      false);
  add(out, "orientation", in.gravity_xy.squaredNorm(), s.orientation, false);
  const double dh = in.height - in.height_target;
  add(out, "base_height", dh * dh, s.base_height, false);
  return out;
}

RewardBreakdown standing_reward(const RewardInputs& in, double sigma_track,
                                const StandingScales& s) {
  if (!(sigma_track > 0.0)) throw std::invalid_argument("sigma_track must be > 0");
  validate(in);
  const double r_ori = orientation_reward(in.forward_axis);
  RewardBreakdown out;
  out.terms.reserve(13);
  const double dw = in.omega_z - in.omega_z_cmd;
  add(out, "lin_vel_tracking",
      tracking_kernel((in.v_xy - in.v_cmd_xy).squaredNorm(), sigma_track) * r_ori,
      s.lin_vel_tracking, true);
  add(out, "ang_vel_tracking", tracking_kernel(dw * dw, sigma_track) * r_ori, s.ang_vel_tracking,
      true);
  add(out, "joint_vel", in.q_dot.squaredNorm(), s.joint_vel, false);
  add(out, "joint_acc", in.q_ddot.squaredNorm(), s.joint_acc, false);
  add(out, "action_rate", squared_diff(in.action, in.action_prev), s.action_rate, false);
  add(out, "joint_pos_limits", limit_violations(in.q, in.q_min, in.q_max), s.joint_pos_limits,
      false);
  add(out, "joint_vel_limits", limit_violations(in.q_dot, in.q_dot_min, in.q_dot_max),
      s.joint_vel_limits, false);
  add(out, "torque_limits", limit_violations(in.tau, in.tau_min, in.tau_max), s.torque_limits,
      false);
  add(out, "collision", contact_fraction(in.penalized_contacts), s.collision, false);
  add(out, "extra_collision", contact_fraction(in.extra_penalized_contacts), s.extra_collision,
      false);
  const bool front_airborne = !in.front_left_contact && !in.front_right_contact;
  add(out, "front_feet_contact", front_airborne ? 1.0 : 0.0, s.front_feet_contact, false);
  add(out, "orientation", r_ori, s.orientation, false);
  add(out, "root_height", std::min(std::exp(in.height), 0.55), s.root_height, false);
  return out;
}

double cost(double task_reward, double r_max_task) {
  if (!std::isfinite(task_reward) || !std::isfinite(r_max_task)) {
    throw std::invalid_argument("non-finite reward in cost");
  }
  if (task_reward > r_max_task + 1e-9) {
    throw std::domain_error("task reward exceeds its upper bound; R_max^task is mis-set");
  }
  return std::max(0.0, r_max_task - task_reward);
}

}  // namespace hinf::rewards
