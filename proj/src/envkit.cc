#include "hinf/envkit.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace hinf::env {
namespace {

constexpr double kForceTolerance = 1e-9;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Eigen::Matrix2d rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

void check_action(const Eigen::VectorXd& action, int dim) {
  if (action.size() != dim) {
    throw std::invalid_argument("action has size " + std::to_string(action.size()) +
                                ", expected " + std::to_string(dim));
  }
  if (!action.allFinite()) throw std::invalid_argument("non-finite action");
}

void check_force(const Disturbance& d, int dim, double limit) {
  if (d.force.size() != dim) {
    throw std::invalid_argument("disturbance has size " + std::to_string(d.force.size()) +
                                ", expected " + std::to_string(dim));
  }
  if (!d.force.allFinite()) throw std::invalid_argument("non-finite disturbance");
  if (d.force.norm() > limit + kForceTolerance) {
    throw std::invalid_argument("disturbance norm " + std::to_string(d.force.norm()) +
                                " exceeds limit " + std::to_string(limit));
  }
}

void check_stepable(const EnvState& s) {
  if (s.terminated) throw std::logic_error("step called on a terminated episode");
  if (s.time_index < 0) throw std::invalid_argument("negative time index");
}

bool symmetric(const Eigen::MatrixXd& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <=
                                     1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

// ---------------------------------------------------------------- point mass

EnvState reset_point_mass(const PointMass& pm, std::uint64_t seed, bool randomize) {
  pm.validate();
  const auto& cfg = pm.config();
  CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(Stream::kReset)));
  EnvState s;
  for (int i = 0; i < 3; ++i) s.command[i] = rng.uniform(cfg.command_min[i], cfg.command_max[i]);
  double scale = 1.0;
  if (randomize) {
    s.randomized = true;
    s.draw = sample_randomization(rng);
    scale = s.draw.init_state_scale;
  } else {
    s.draw.friction = cfg.friction;
  }
  s.heading = wrap_angle(scale * cfg.init_heading);
  s.heading_target = s.heading;
  s.velocity = rotation(s.heading) * (scale * cfg.init_velocity);
  s.last_action = Eigen::VectorXd::Zero(3);
  s.prev_action = Eigen::VectorXd::Zero(3);
  s.stream_seed = seed;
  return s;
}

StepResult step_point_mass(const PointMass& pm, const EnvState& s, const Eigen::VectorXd& action,
                           const Disturbance& d) {
  const auto& cfg = pm.config();
  check_stepable(s);
  if (!s.position.allFinite() || !s.velocity.allFinite() || !std::isfinite(s.heading) ||
      !std::isfinite(s.angular_velocity) || !s.command.allFinite()) {
    throw std::invalid_argument("non-finite point-mass state");
  }
  check_action(action, 3);
  check_force(d, 2, cfg.disturbance_limit);

  const double friction = s.randomized ? s.draw.friction : cfg.friction;
  const double kp = s.randomized ? s.draw.kp_scale : 1.0;
  const double kd = s.randomized ? s.draw.kd_scale : 1.0;

  const Eigen::Vector3d a = action.cwiseMax(-1.0).cwiseMin(1.0);
  Eigen::Vector2d f_body;
  for (int i = 0; i < 2; ++i) {
    f_body[i] = std::clamp(kp * cfg.actuator_force_limit * a[i], -cfg.actuator_force_limit,
                           cfg.actuator_force_limit);
  }
  const double torque =
      std::clamp(kp * cfg.yaw_torque_limit * a[2], -cfg.yaw_torque_limit, cfg.yaw_torque_limit);

  StepResult out;
  EnvState& n = out.next_state;
  n = s;
  const Eigen::Vector2d f_net = rotation(s.heading) * f_body + d.force;
  n.velocity = s.velocity + cfg.dt * (f_net / cfg.mass - friction * s.velocity);
  n.position = s.position + cfg.dt * n.velocity;
  n.angular_velocity =
      s.angular_velocity +
      cfg.dt * (torque / cfg.yaw_inertia - kd * cfg.yaw_damping * s.angular_velocity);
  n.heading = wrap_angle(s.heading + cfg.dt * n.angular_velocity);
  n.heading_target = wrap_angle(s.heading_target + cfg.dt * s.command[2]);
  n.prev_action = s.last_action;
  n.last_action = a;
  n.time_index = s.time_index + 1;

  rewards::RewardInputs in;
  in.v_xy = body_velocity(n);
  in.v_cmd_xy = s.command.head<2>();
  in.omega_z = n.angular_velocity;
  in.omega_z_cmd = s.command[2];
  in.action = a;
  in.action_prev = s.last_action;
  in.action_prev2 = s.prev_action;
  const auto r = rewards::locomotion_reward(in, cfg.sigma_track, cfg.scales);
  out.reward = {r.task, r.aux};

  const double speed_err = tracking_error(n);
  const double heading_err = std::abs(wrap_angle(n.heading - n.heading_target));
  n.speed_fault_steps = speed_err > cfg.fall_speed_error ? s.speed_fault_steps + 1 : 0;
  n.heading_fault_steps = heading_err > cfg.fall_heading_error ? s.heading_fault_steps + 1 : 0;
  const int hold = pm.fall_hold_steps();
  out.fall = n.speed_fault_steps >= hold || n.heading_fault_steps >= hold;
  out.truncated = n.time_index >= cfg.episode_steps;
  out.terminated = out.truncated || (out.fall && cfg.terminate_on_fall);
  n.terminated = out.terminated;
  return out;
}

// ---------------------------------------------------------------- LQ

EnvState reset_lq(const LqEnv& env, std::uint64_t seed, bool randomize) {
  env.validate();
  CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(Stream::kReset)));
  EnvState s;
  double scale = 1.0;
  if (randomize) {
    s.randomized = true;
    s.draw = sample_randomization(rng);
    scale = s.draw.init_state_scale;
  }
  s.x = scale * env.config().x_init;
  s.last_action = Eigen::VectorXd::Zero(env.config().model.m());
  s.prev_action = s.last_action;
  s.stream_seed = seed;
  return s;
}

StepResult step_lq(const LqEnv& env, const EnvState& s, const Eigen::VectorXd& action,
                   const Disturbance& d) {
  const auto& cfg = env.config();
  const auto& m = cfg.model;
  check_stepable(s);
  if (s.x.size() != m.n() || !s.x.allFinite()) throw std::invalid_argument("bad LQ state");
  check_action(action, m.m());
  check_force(d, m.l(), cfg.w_limit);
  const Eigen::VectorXd u = action.cwiseMax(-cfg.u_limit).cwiseMin(cfg.u_limit);
  StepResult out;
  EnvState& n = out.next_state;
  n = s;
  n.x = m.A * s.x + m.B * u + m.E * d.force;
  n.prev_action = s.last_action;
  n.last_action = u;
  n.time_index = s.time_index + 1;
  const double stage = s.x.dot(m.Q * s.x) + u.dot(m.R_u * u);
  out.reward.task = cfg.r_max_task * std::exp(-stage);
  out.fall = !n.x.allFinite() || n.x.norm() > cfg.fail_norm;
  out.truncated = n.time_index >= cfg.episode_steps;
  out.terminated = out.truncated || out.fall;
  n.terminated = out.terminated;
  return out;
}

// ---------------------------------------------------------------- tabular

EnvState reset_tabular(const TabularEnv& env, std::uint64_t seed, bool randomize) {
  env.validate();
  EnvState s;
  s.cell = env.config().initial_state;
  if (randomize) {
    CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(Stream::kReset)));
    s.randomized = true;
    s.draw = sample_randomization(rng);
    s.cell = std::min(env.game().n_states() - 1,
                      static_cast<int>(rng.uniform() * env.game().n_states()));
  }
  s.last_action = Eigen::VectorXd::Zero(1);
  s.prev_action = s.last_action;
  s.stream_seed = seed;
  return s;
}

StepResult step_tabular(const TabularEnv& env, const EnvState& s, const Eigen::VectorXd& action,
                        const Disturbance& d) {
  const auto& g = env.game();
  check_stepable(s);
  if (s.cell < 0 || s.cell >= g.n_states()) throw std::invalid_argument("bad tabular state");
  check_action(action, 1);
  check_force(d, 1, 1.0);
  const int a = env.action_index(action[0]);
  const int di = env.disturbance_index(d.force[0]);
  auto rng = CounterRng::for_step(s.stream_seed, 0, static_cast<std::uint64_t>(s.time_index),
                                  Stream::kTransition);
  const double u = rng.uniform();
  int next = g.n_states() - 1;
  double acc = 0.0;
  for (int sp = 0; sp < g.n_states(); ++sp) {
    acc += g.prob(s.cell, a, di, sp);
    if (u < acc) {
      next = sp;
      break;
    }
  }
  StepResult out;
  EnvState& n = out.next_state;
  n = s;
  n.cell = next;
  n.prev_action = s.last_action;
  n.last_action = action.cwiseMax(-1.0).cwiseMin(1.0);
  n.time_index = s.time_index + 1;
  out.reward.task = g.max_cost() - g.cost(s.cell, a, di);
  out.truncated = n.time_index >= env.config().episode_steps;
  out.terminated = out.truncated;
  n.terminated = out.terminated;
  return out;
}

}  // namespace

// ---------------------------------------------------------------- randomization

RandomizationDraw sample_randomization(CounterRng& rng) {
  using R = RandomizationRanges;
  RandomizationDraw d;
  d.friction = rng.uniform(R::kFrictionMin, R::kFrictionMax);
  d.restitution = rng.uniform(R::kRestitutionMin, R::kRestitutionMax);
  d.kp_scale = rng.uniform(R::kKpMin, R::kKpMax);
  d.kd_scale = rng.uniform(R::kKdMin, R::kKdMax);
  d.init_state_scale = rng.uniform(R::kInitMin, R::kInitMax);
  return d;
}

bool in_ranges(const RandomizationDraw& d) {
  using R = RandomizationRanges;
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  return in(d.friction, R::kFrictionMin, R::kFrictionMax) &&
         in(d.restitution, R::kRestitutionMin, R::kRestitutionMax) &&
         in(d.kp_scale, R::kKpMin, R::kKpMax) && in(d.kd_scale, R::kKdMin, R::kKdMax) &&
         in(d.init_state_scale, R::kInitMin, R::kInitMax);
}

// ---------------------------------------------------------------- models

PointMass::PointMass(PointMassConfig cfg) : cfg_(std::move(cfg)) { validate(); }

void PointMass::validate() const {
  const auto& c = cfg_;
  if (!(c.mass > 0.0) || !(c.dt > 0.0) || !(c.actuator_force_limit > 0.0) ||
      !(c.yaw_inertia > 0.0) || !(c.yaw_torque_limit >= 0.0) || !(c.yaw_damping >= 0.0) ||
      !(c.friction >= 0.0) || !(c.disturbance_limit >= 0.0) || !(c.fall_speed_error > 0.0) ||
      !(c.fall_heading_error > 0.0) || !(c.fall_hold_time >= 0.0) || c.episode_steps < 1 ||
      !(c.sigma_track > 0.0)) {
    throw std::invalid_argument("invalid point-mass configuration");
  }
  if (!c.command_min.allFinite() || !c.command_max.allFinite() ||
      (c.command_min.array() > c.command_max.array()).any() || !c.init_velocity.allFinite() ||
      !std::isfinite(c.init_heading)) {
    throw std::invalid_argument("invalid point-mass command range or initial state");
  }
}

int PointMass::fall_hold_steps() const {
  return std::max(1, static_cast<int>(std::lround(cfg_.fall_hold_time / cfg_.dt)));
}

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  using C = std::complex<double>;
  const int n = static_cast<int>(A.rows());
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) return false;
  for (int i = 0; i < n; ++i) {
    const C lambda = es.eigenvalues()[i];
    if (std::abs(lambda) < 1.0 - 1e-12) continue;
    Eigen::MatrixXcd pbh(n, n + B.cols());
    pbh.leftCols(n) = A.cast<C>() - lambda * Eigen::MatrixXcd::Identity(n, n);
    pbh.rightCols(B.cols()) = B.cast<C>();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(pbh);
    lu.setThreshold(1e-10);
    if (lu.rank() < n) return false;
  }
  return true;
}

void LqModel::validate() const {
  const int nn = n();
  if (nn < 1 || A.cols() != nn || B.rows() != nn || E.rows() != nn || Q.rows() != nn ||
      Q.cols() != nn || R_u.rows() != m() || R_u.cols() != m() || m() < 1) {
    throw std::invalid_argument("LQ model shapes do not chain");
  }
  if (!A.allFinite() || !B.allFinite() || !E.allFinite() || !Q.allFinite() || !R_u.allFinite()) {
    throw std::invalid_argument("non-finite LQ model");
  }
  if (!symmetric(Q) || !symmetric(R_u)) throw std::invalid_argument("Q and R_u must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(Q), er(R_u);
  if (eq.eigenvalues().minCoeff() < -1e-12) throw std::invalid_argument("Q must be PSD");
  if (er.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("R_u must be PD");
  if (!is_stabilizable(A, B)) throw std::invalid_argument("(A, B) is not stabilizable");
}

LqEnv::LqEnv(LqEnvConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.x_init.size() == 0) cfg_.x_init = Eigen::VectorXd::Zero(cfg_.model.n());
  validate();
}

void LqEnv::validate() const {
  cfg_.model.validate();
  if (cfg_.x_init.size() != cfg_.model.n() || !cfg_.x_init.allFinite()) {
    throw std::invalid_argument("LQ initial state has wrong size");
  }
  if (!(cfg_.u_limit > 0.0) || !(cfg_.w_limit >= 0.0) || !(cfg_.fail_norm > 0.0) ||
      !(cfg_.r_max_task > 0.0) || cfg_.episode_steps < 1) {
    throw std::invalid_argument("invalid LQ environment limits");
  }
}

TabularGame::TabularGame(int n_states, int n_actions, int n_disturbances)
    : ns_(n_states), na_(n_actions), nd_(n_disturbances) {
  if (ns_ < 1 || na_ < 1 || nd_ < 1) throw std::invalid_argument("empty tabular game");
  p_.assign(static_cast<std::size_t>(ns_) * na_ * nd_ * ns_, 0.0);
  c_.assign(static_cast<std::size_t>(ns_) * na_ * nd_, 0.0);
  norm_.resize(nd_);
  for (int d = 0; d < nd_; ++d) norm_[d] = nd_ > 1 ? static_cast<double>(d) / (nd_ - 1) : 0.0;
}

double TabularGame::max_cost() const { return *std::max_element(c_.begin(), c_.end()); }

void TabularGame::validate() const {
  for (int s = 0; s < ns_; ++s) {
    for (int a = 0; a < na_; ++a) {
      for (int d = 0; d < nd_; ++d) {
        double sum = 0.0;
        for (int sp = 0; sp < ns_; ++sp) {
          const double p = prob(s, a, d, sp);
          if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("invalid probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
          throw std::invalid_argument("transition row does not sum to 1");
        }
        const double c = cost(s, a, d);
        if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument("cost must be finite, >= 0");
      }
    }
  }
  for (double v : norm_) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("invalid disturbance intensity");
  }
}

TabularGame TabularGame::random(int n_states, int n_actions, int n_disturbances,
                                std::uint64_t seed) {
  TabularGame g(n_states, n_actions, n_disturbances);
  CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(Stream::kInit)));
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      for (int d = 0; d < n_disturbances; ++d) {
        double sum = 0.0;
        for (int sp = 0; sp < n_states; ++sp) {
          g.prob(s, a, d, sp) = -std::log(1.0 - rng.uniform());  // Dirichlet(1) row
          sum += g.prob(s, a, d, sp);
        }
        for (int sp = 0; sp < n_states; ++sp) g.prob(s, a, d, sp) /= sum;
        g.cost(s, a, d) = rng.uniform();
      }
    }
  }
  return g;
}

Eigen::VectorXd transition_distribution(const TabularGame& game, int s, int a, int d) {
  if (s < 0 || s >= game.n_states() || a < 0 || a >= game.n_actions() || d < 0 ||
      d >= game.n_disturbances()) {
    throw std::out_of_range("tabular index out of range");
  }
  Eigen::VectorXd row(game.n_states());
  for (int sp = 0; sp < game.n_states(); ++sp) row[sp] = game.prob(s, a, d, sp);
  return row;
}

TabularEnv::TabularEnv(TabularGame game, TabularEnvConfig cfg)
    : game_(std::move(game)), cfg_(cfg) {
  validate();
}

void TabularEnv::validate() const {
  if (game_.n_states() > TabularEnvConfig::kMaxStates ||
      game_.n_actions() > TabularEnvConfig::kMaxActions ||
      game_.n_disturbances() > TabularEnvConfig::kMaxDisturbances) {
    throw std::invalid_argument("tabular environment exceeds 16 states / 4 actions / 4 disturbances");
  }
  game_.validate();
  if (cfg_.initial_state < 0 || cfg_.initial_state >= game_.n_states() || cfg_.episode_steps < 1) {
    throw std::invalid_argument("invalid tabular environment configuration");
  }
}

int TabularEnv::action_index(double a) const {
  const double u = (std::clamp(a, -1.0, 1.0) + 1.0) / 2.0;
  return std::min(game_.n_actions() - 1, static_cast<int>(u * game_.n_actions()));
}

int TabularEnv::disturbance_index(double f) const {
  const double u = (std::clamp(f, -1.0, 1.0) + 1.0) / 2.0;
  return std::min(game_.n_disturbances() - 1, static_cast<int>(u * game_.n_disturbances()));
}

// ---------------------------------------------------------------- dispatch

EnvState reset(const EnvModel& model, std::uint64_t seed, bool randomize) {
  return std::visit(Overloaded{
                        [&](const PointMass& m) { return reset_point_mass(m, seed, randomize); },
                        [&](const LqEnv& m) { return reset_lq(m, seed, randomize); },
                        [&](const TabularEnv& m) { return reset_tabular(m, seed, randomize); },
                    },
                    model);
}

StepResult step(const EnvModel& model, const EnvState& state, const Eigen::VectorXd& action,
                const Disturbance& disturbance) {
  return std::visit(
      Overloaded{
          [&](const PointMass& m) { return step_point_mass(m, state, action, disturbance); },
          [&](const LqEnv& m) { return step_lq(m, state, action, disturbance); },
          [&](const TabularEnv& m) { return step_tabular(m, state, action, disturbance); },
      },
      model);
}

int observation_dim(const EnvModel& model) {
  return std::visit(Overloaded{
                        [](const PointMass&) { return 11; },
                        [](const LqEnv& m) { return m.config().model.n(); },
                        [](const TabularEnv& m) { return m.game().n_states(); },
                    },
                    model);
}

int action_dim(const EnvModel& model) {
  return std::visit(Overloaded{
                        [](const PointMass&) { return 3; },
                        [](const LqEnv& m) { return m.config().model.m(); },
                        [](const TabularEnv&) { return 1; },
                    },
                    model);
}

int disturbance_dim(const EnvModel& model) {
  return std::visit(Overloaded{
                        [](const PointMass&) { return 2; },
                        [](const LqEnv& m) { return m.config().model.l(); },
                        [](const TabularEnv&) { return 1; },
                    },
                    model);
}

double disturbance_limit(const EnvModel& model) {
  return std::visit(Overloaded{
                        [](const PointMass& m) { return m.config().disturbance_limit; },
                        [](const LqEnv& m) { return m.config().w_limit; },
                        [](const TabularEnv&) { return 1.0; },
                    },
                    model);
}

double r_max_task(const EnvModel& model) {
  return std::visit(Overloaded{
                        [](const PointMass& m) { return rewards::max_task_reward(m.config().scales); },
                        [](const LqEnv& m) { return m.config().r_max_task; },
                        [](const TabularEnv& m) { return m.game().max_cost(); },
                    },
                    model);
}

int episode_steps(const EnvModel& model) {
  return std::visit([](const auto& m) { return m.config().episode_steps; }, model);
}

double control_dt(const EnvModel& model) {
  return std::visit(Overloaded{
                        [](const PointMass& m) { return m.config().dt; },
                        [](const auto&) { return 1.0; },
                    },
                    model);
}

void observe(const EnvModel& model, const EnvState& s, Eigen::Ref<Eigen::VectorXd> out) {
  std::visit(Overloaded{
                 [&](const PointMass&) {
                   const Eigen::Vector2d vb = body_velocity(s);
                   const double err = wrap_angle(s.heading - s.heading_target);
                   out << vb[0], vb[1], s.angular_velocity, s.command[0], s.command[1],
                       s.command[2], std::sin(err), std::cos(err), s.last_action[0],
                       s.last_action[1], s.last_action[2];
                 },
                 [&](const LqEnv&) { out = s.x; },
                 [&](const TabularEnv&) {
                   out.setZero();
                   out[s.cell] = 1.0;
                 },
             },
             model);
}

Eigen::VectorXd observe(const EnvModel& model, const EnvState& state) {
  Eigen::VectorXd out(observation_dim(model));
  observe(model, state, out);
  return out;
}

double intensity(const EnvModel& model, const Disturbance& d) {
  return std::visit(Overloaded{
                        [&](const TabularEnv& m) {
                          return m.game().intensity(m.disturbance_index(d.force[0]));
                        },
                        [&](const auto&) { return d.force.norm(); },
                    },
                    model);
}

Eigen::Vector2d body_velocity(const EnvState& s) { return rotation(-s.heading) * s.velocity; }

double tracking_error(const EnvState& s) {
  return (body_velocity(s) - s.command.head<2>()).norm();
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  r -= std::numbers::pi;
  // fmod lands on -pi for odd multiples of pi; the range is (-pi, pi]
  return r <= -std::numbers::pi ? std::numbers::pi : r;
}

Disturbance zero_disturbance(const EnvModel& model) {
  return {Eigen::VectorXd::Zero(disturbance_dim(model))};
}

}  // namespace hinf::env
