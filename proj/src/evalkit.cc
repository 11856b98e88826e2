#include "hinf/evalkit.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "hinf/rewards.h"
#include "hinf/rng.h"

namespace hinf::eval {
namespace {

int to_steps(double seconds, double dt) { return static_cast<int>(std::lround(seconds / dt)); }

Eigen::Vector2d unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }

Eigen::Vector2d pulse_direction(const DisturbanceRegime& r, std::uint64_t seed, int episode,
                                int window) {
  const std::uint64_t slot = r.resample_direction ? static_cast<std::uint64_t>(window) + 1 : 0;
  CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(episode), slot,
                          static_cast<std::uint64_t>(Stream::kRegime)));
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  switch (r.pulse_axis) {
    case PulseAxis::kX:
      return {sign, 0.0};
    case PulseAxis::kY:
      return {0.0, sign};
    case PulseAxis::kRandom:
      break;
  }
  return unit_from_angle(rng.uniform(0.0, 2.0 * std::numbers::pi));
}

const env::PointMass& require_point_mass(const env::EnvModel& model) {
  const auto* pm = std::get_if<env::PointMass>(&model);
  if (!pm) throw std::invalid_argument("evaluation runs on the point-mass environment");
  return *pm;
}

int window_of(const std::vector<PulseWindow>& windows, int step) {
  int w = -1;
  for (std::size_t k = 0; k < windows.size() && windows[k].start <= step; ++k) {
    w = static_cast<int>(k);
  }
  return w;
}

}  // namespace

void DisturbanceRegime::validate() const {
  if (!(max_force >= 0.0) || !(pulse_force >= 0.0) || !std::isfinite(max_force) ||
      !std::isfinite(pulse_force)) {
    throw std::invalid_argument("regime forces must be finite and nonnegative");
  }
  if (kind == RegimeKind::kPulse &&
      !(pulse_duration > 0.0 && pulse_period > 0.0 && pulse_duration < pulse_period)) {
    throw std::invalid_argument("pulse duration must be positive and shorter than the period");
  }
}

std::string DisturbanceRegime::descriptor() const {
  char buf[160];
  switch (kind) {
    case RegimeKind::kNone:
      return "none";
    case RegimeKind::kContinuousUniform:
      std::snprintf(buf, sizeof buf, "continuous_uniform(max=%gN)", max_force);
      return buf;
    case RegimeKind::kPulse: {
      const char* axis = pulse_axis == PulseAxis::kX   ? "x"
                         : pulse_axis == PulseAxis::kY ? "y"
                                                       : "random";
      std::snprintf(buf, sizeof buf, "pulse(%gN,every %gs,for %gs,axis=%s)", pulse_force,
                    pulse_period, pulse_duration, axis);
      return buf;
    }
    case RegimeKind::kTrainedAdversary:
      std::snprintf(buf, sizeof buf, "trained_adversary(clip=%gN)", max_force);
      return buf;
  }
  return "unknown";
}

DisturbanceRegime no_disturbance() { return {}; }

DisturbanceRegime continuous_uniform(double max_force) {
  DisturbanceRegime r;
  r.kind = RegimeKind::kContinuousUniform;
  r.max_force = max_force;
  return r;
}

DisturbanceRegime pulses(double force, double period, double duration, PulseAxis axis) {
  DisturbanceRegime r;
  r.kind = RegimeKind::kPulse;
  r.pulse_force = force;
  r.pulse_period = period;
  r.pulse_duration = duration;
  r.pulse_axis = axis;
  r.validate();
  return r;
}

DisturbanceRegime trained_adversary(double clip) {
  DisturbanceRegime r;
  r.kind = RegimeKind::kTrainedAdversary;
  r.max_force = clip;
  return r;
}

RegimeKind parse_regime_kind(const std::string& name) {
  if (name == "none") return RegimeKind::kNone;
  if (name == "continuous" || name == "continuous_uniform") return RegimeKind::kContinuousUniform;
  if (name == "pulse") return RegimeKind::kPulse;
  if (name == "adversary" || name == "trained_adversary") return RegimeKind::kTrainedAdversary;
  throw std::invalid_argument("unknown regime '" + name + "'");
}

std::string regime_kind_name(RegimeKind k) {
  switch (k) {
    case RegimeKind::kNone:
      return "none";
    case RegimeKind::kContinuousUniform:
      return "continuous_uniform";
    case RegimeKind::kPulse:
      return "pulse";
    case RegimeKind::kTrainedAdversary:
      return "trained_adversary";
  }
  return "unknown";
}

std::vector<PulseWindow> pulse_windows(const DisturbanceRegime& r, int episode_steps, double dt) {
  std::vector<PulseWindow> out;
  if (r.kind != RegimeKind::kPulse) return out;
  r.validate();
  const int period = to_steps(r.pulse_period, dt);
  const int duration = std::max(1, to_steps(r.pulse_duration, dt));
  const int offset = to_steps(r.pulse_offset < 0.0 ? 0.5 * r.pulse_period : r.pulse_offset, dt);
  if (period < 1) throw std::invalid_argument("pulse period shorter than a control step");
  for (int start = offset; start < episode_steps; start += period) {
    out.push_back({start, std::min(start + duration, episode_steps)});
  }
  return out;
}

Eigen::Vector2d scheduled_force(const DisturbanceRegime& r, std::uint64_t seed, int episode,
                                int step, double dt) {
  switch (r.kind) {
    case RegimeKind::kContinuousUniform: {
      CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(episode),
                              static_cast<std::uint64_t>(step),
                              static_cast<std::uint64_t>(Stream::kRegime)));
      const double magnitude = rng.uniform(0.0, r.max_force);
      return magnitude * unit_from_angle(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
    case RegimeKind::kPulse: {
      const auto windows = pulse_windows(r, step + 1, dt);
      const int w = window_of(windows, step);
      if (w < 0 || step >= windows[w].end) return Eigen::Vector2d::Zero();
      return r.pulse_force * pulse_direction(r, seed, episode, w);
    }
    case RegimeKind::kNone:
    case RegimeKind::kTrainedAdversary:
      break;
  }
  return Eigen::Vector2d::Zero();
}

EvalReport evaluate(const env::EnvModel& model, const nn::GaussianPolicy& actor,
                    const nn::GaussianPolicy* adversary, const DisturbanceRegime& regime,
                    int episodes, std::uint64_t seed, const EvalOptions& opts) {
  regime.validate();
  if (episodes < 1) throw std::invalid_argument("need at least one evaluation episode");
  if (opts.episode_steps < 1) throw std::invalid_argument("episode_steps must be positive");
  env::PointMassConfig pc = require_point_mass(model).config();
  pc.episode_steps = opts.episode_steps;
  pc.terminate_on_fall = false;
  // pulses above the training clip are the point of the pulse regime
  pc.disturbance_limit = std::max({pc.disturbance_limit, regime.pulse_force, regime.max_force});
  const env::EnvModel m = env::PointMass(pc);
  const int obs_dim = env::observation_dim(m);
  if (actor.obs_dim() != obs_dim || actor.act_dim() != env::action_dim(m)) {
    throw std::invalid_argument("actor architecture does not match the environment");
  }
  const bool adv = regime.kind == RegimeKind::kTrainedAdversary;
  if (adv && (!adversary || adversary->obs_dim() != obs_dim ||
              adversary->act_dim() != env::disturbance_dim(m))) {
    throw std::invalid_argument("trained-adversary regime needs a matching disturber");
  }
  const double dt = pc.dt;
  const double r_max = env::r_max_task(m);
  const auto windows = pulse_windows(regime, opts.episode_steps, dt);

  std::vector<env::EnvState> states;
  for (int e = 0; e < episodes; ++e) {
    env::EnvState s = env::reset(m, hash_key(seed, static_cast<std::uint64_t>(e)), opts.randomize);
    s.command = opts.command;
    states.push_back(std::move(s));
  }

  EvalReport rep;
  rep.tag = opts.tag;
  rep.regime = regime.descriptor();
  rep.episodes = episodes;
  rep.episode_steps = opts.episode_steps;
  rep.mean_tracking_curve.assign(opts.episode_steps, 0.0);
  rep.episode_falls.assign(episodes, 0);
  rep.pulses = static_cast<int>(windows.size()) * episodes;
  std::vector<std::uint8_t> was_fallen(episodes, 0);
  std::vector<std::vector<std::uint8_t>> window_fell(episodes,
                                                     std::vector<std::uint8_t>(windows.size(), 0));
  double sum_err = 0.0, sum_cost = 0.0, sum_norm = 0.0;
  Eigen::MatrixXd obs(obs_dim, episodes);
  env::Disturbance d{Eigen::VectorXd::Zero(2)};
  for (int t = 0; t < opts.episode_steps; ++t) {
    for (int e = 0; e < episodes; ++e) env::observe(m, states[e], obs.col(e));
    const nn::PolicyOutput act = actor.forward(obs);
    nn::PolicyOutput dist;
    if (adv) dist = adversary->forward(obs);
    for (int e = 0; e < episodes; ++e) {
      if (adv) {
        d.force = nn::radial_clip(dist.mean.col(e), regime.max_force);
      } else {
        d.force = scheduled_force(regime, seed, e, t, dt);
      }
      const double norm = d.force.norm();
      env::StepResult r = env::step(m, states[e], act.mean.col(e), d);
      const double err = env::tracking_error(r.next_state);
      sum_err += err;
      sum_cost += rewards::cost(r.reward.task, r_max);
      sum_norm += norm;
      rep.max_force_norm = std::max(rep.max_force_norm, norm);
      rep.mean_tracking_curve[t] += err / episodes;
      if (r.fall && !was_fallen[e]) {
        if (windows.empty()) {
          ++rep.episode_falls[e];
        } else {
          const int w = window_of(windows, t);
          if (w >= 0) window_fell[e][w] = 1;
        }
      }
      was_fallen[e] = r.fall;
      if (e == 0) {
        const Eigen::Vector2d vb = env::body_velocity(r.next_state);
        rep.curve.push_back({t, (t + 1) * dt, vb[0], opts.command[0], err, d.force[0],
                             d.force[1]});
      }
      r.next_state.terminated = false;
      states[e] = std::move(r.next_state);
    }
  }
  for (int e = 0; e < episodes; ++e) {
    for (std::uint8_t f : window_fell[e]) rep.episode_falls[e] += f;
    rep.falls += rep.episode_falls[e];
  }
  const double n = static_cast<double>(episodes) * opts.episode_steps;
  rep.mean_tracking_error = sum_err / n;
  rep.mean_cost = sum_cost / n;
  rep.mean_force_norm = sum_norm / n;
  rep.hinf_ratio =
      sum_norm > 0.0 ? sum_cost / sum_norm : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

void write_report(const std::vector<EvalReport>& reports, std::ostream& os) {
  os << "tag,regime,episodes,episode_steps,mean_tracking_error,falls,pulses,hinf_ratio,"
        "mean_cost,mean_force_norm,max_force_norm\n";
  char buf[512];
  for (const EvalReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,\"%s\",%d,%d,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                  r.tag.c_str(), r.regime.c_str(), r.episodes, r.episode_steps,
                  r.mean_tracking_error, r.falls, r.pulses, r.hinf_ratio, r.mean_cost,
                  r.mean_force_norm, r.max_force_norm);
    os << buf;
  }
}

void write_curve(const EvalReport& report, std::ostream& os) {
  os << "step,time_s,v_x,v_cmd_x,tracking_error,force_x,force_y\n";
  char buf[256];
  for (const CurveRow& c : report.curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", c.step, c.time_s,
                  c.v_x, c.v_cmd_x, c.tracking_error, c.force_x, c.force_y);
    os << buf;
  }
}

AttackResult train_attack_disturber(const env::EnvModel& model, const rollout::Networks& trained,
                                    double eta, const TrainerConfig& base,
                                    const AttackOptions& opts, std::uint64_t seed) {
  if (opts.epochs < 0) throw std::invalid_argument("attack epochs must be >= 0");
  TrainerConfig cfg = base;
  cfg.use_hinf_loss = false;
  cfg.disturber = DisturberKind::kLearned;
  cfg.update_actor = false;
  cfg.update_disturber = true;
  cfg.update_eta = false;
  cfg.deterministic_actor = true;
  cfg.num_envs = opts.num_envs;
  cfg.horizon = opts.horizon;
  cfg.force_limit = opts.force_limit;
  cfg.disturber_lr = opts.lr;
  cfg.hinf.eta = eta;
  cfg.hinf.lambda = 0.0;
  Trainer tr(model, cfg, seed);
  rollout::Networks& nets = tr.mutable_networks();
  nets.actor = trained.actor;
  nets.critic = trained.critic;
  tr.optimizers().critic = nn::Adam(nets.critic.num_params(), cfg.critic_lr);

  AttackResult out;
  for (int k = 0; k < opts.epochs; ++k) {
    const LossReport rep = tr.train_iteration();
    out.mean_cost.push_back(rep.mean_cost);
    out.mean_force_norm.push_back(rep.mean_force_norm);
    out.max_force_norm.push_back(tr.last_buffer().force_norm.maxCoeff());
  }
  out.disturber = tr.networks().disturber;
  return out;
}

InflictedCost inflicted_cost(const env::EnvModel& model, const nn::GaussianPolicy& actor,
                             const nn::GaussianPolicy* disturber, double force_limit,
                             int episodes, int episode_steps, std::uint64_t seed) {
  if (episodes < 1 || episode_steps < 1) throw std::invalid_argument("empty evaluation");
  env::PointMassConfig pc = require_point_mass(model).config();
  pc.episode_steps = episode_steps;
  pc.terminate_on_fall = false;
  const env::EnvModel m = env::PointMass(pc);
  const int obs_dim = env::observation_dim(m);
  const double r_max = env::r_max_task(m);
  std::vector<env::EnvState> states;
  for (int e = 0; e < episodes; ++e) {
    states.push_back(env::reset(m, hash_key(seed, static_cast<std::uint64_t>(e), 1), true));
  }
  Eigen::MatrixXd obs(obs_dim, episodes);
  env::Disturbance d{Eigen::VectorXd::Zero(2)};
  InflictedCost out;
  double sum_cost = 0.0, sum_norm = 0.0;
  for (int t = 0; t < episode_steps; ++t) {
    for (int e = 0; e < episodes; ++e) env::observe(m, states[e], obs.col(e));
    const nn::PolicyOutput act = actor.forward(obs);
    nn::PolicyOutput dist;
    if (disturber) dist = disturber->forward(obs);
    for (int e = 0; e < episodes; ++e) {
      if (disturber) {
        d.force = nn::radial_clip(dist.mean.col(e), force_limit);
      } else {
        d.force = scheduled_force(continuous_uniform(force_limit), seed, e, t, pc.dt);
      }
      const double norm = d.force.norm();
      env::StepResult r = env::step(m, states[e], act.mean.col(e), d);
      sum_cost += rewards::cost(r.reward.task, r_max);
      sum_norm += norm;
      out.max_force_norm = std::max(out.max_force_norm, norm);
      r.next_state.terminated = false;
      states[e] = std::move(r.next_state);
    }
  }
  const double n = static_cast<double>(episodes) * episode_steps;
  out.mean_cost = sum_cost / n;
  out.mean_force_norm = sum_norm / n;
  return out;
}

std::vector<Variant> ablation_variants() {
  return {{"ours", true, DisturberKind::kLearned},
          {"no_hinf", false, DisturberKind::kLearned},
          {"curriculum", true, DisturberKind::kCurriculum},
          {"baseline", false, DisturberKind::kCurriculum}};
}

Variant find_variant(const std::string& tag) {
  for (const Variant& v : ablation_variants()) {
    if (v.tag == tag) return v;
  }
  throw std::invalid_argument("unknown variant '" + tag + "'");
}

TrainerConfig variant_config(const TrainerConfig& base, const Variant& v, int iterations,
                             double ramp_fraction) {
  TrainerConfig cfg = base;
  cfg.use_hinf_loss = v.use_hinf_loss;
  cfg.disturber = v.disturber;
  if (!v.use_hinf_loss) cfg.hinf.lambda = 0.0;
  cfg.curriculum_ramp_iterations =
      std::max(1, static_cast<int>(std::lround(ramp_fraction * iterations)));
  return cfg;
}

AblationResult ablation_suite(
    const AblationConfig& cfg,
    const std::function<void(const std::string&, std::uint64_t, const Trainer&)>& on_trained) {
  if (cfg.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  AblationResult out;
  for (const std::string& tag : cfg.variants) {
    const Variant v = find_variant(tag);
    for (std::uint64_t seed : cfg.seeds) {
      Trainer tr(cfg.model, variant_config(cfg.base, v, cfg.iterations, cfg.ramp_fraction), seed);
      for (int k = 0; k < cfg.iterations; ++k) tr.train_iteration();
      if (on_trained) on_trained(tag, seed, tr);
      for (const DisturbanceRegime& regime : cfg.regimes) {
        AttackResult attack;
        const nn::GaussianPolicy* adversary = nullptr;
        if (regime.kind == RegimeKind::kTrainedAdversary) {
          AttackOptions ao = cfg.attack;
          ao.force_limit = regime.max_force;
          attack = train_attack_disturber(cfg.model, tr.networks(), tr.state().eta, tr.config(),
                                          ao, hash_key(seed, 0xa7));
          adversary = &attack.disturber;
        }
        EvalOptions eo = cfg.eval;
        eo.tag = tag + "_s" + std::to_string(seed) + "_" + regime_kind_name(regime.kind);
        EvalReport rep = evaluate(cfg.model, tr.networks().actor, adversary, regime,
                                  cfg.eval_episodes, hash_key(seed, 0xe5), eo);
        out.rows.push_back({tag, regime_kind_name(regime.kind), seed, rep.mean_tracking_error,
                            rep.falls, rep.pulses, rep.hinf_ratio, rep.mean_cost,
                            tr.state().eta, tr.state().lambda});
        out.reports.push_back(std::move(rep));
      }
    }
  }
  return out;
}

void write_table(const std::vector<AblationRow>& rows, std::ostream& os) {
  os << "variant,regime,seed,mean_tracking_error,falls,pulses,hinf_ratio,mean_cost,final_eta,"
        "final_lambda\n";
  char buf[512];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                  r.variant.c_str(), r.regime.c_str(), static_cast<unsigned long long>(r.seed),
                  r.mean_tracking_error, r.falls, r.pulses, r.hinf_ratio, r.mean_cost,
                  r.final_eta, r.final_lambda);
    os << buf;
  }
}

}  // namespace hinf::eval
