#include "hinf/rollout.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "hinf/rewards.h"

namespace hinf::rollout {
namespace {

// Uniform intensity in [0, limit], uniform direction.
Eigen::VectorXd uniform_force(int dim, double limit, CounterRng& rng) {
  const double magnitude = rng.uniform(0.0, limit);
  Eigen::VectorXd dir(dim);
  if (dim == 1) {
    dir[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  } else {
    double n = 0.0;
    do {
      for (int k = 0; k < dim; ++k) dir[k] = rng.normal();
      n = dir.norm();
    } while (n == 0.0);
    dir /= n;
  }
  return magnitude * dir;
}

}  // namespace

EnvBatch EnvBatch::create(env::EnvModel model, int num_envs, std::uint64_t seed, bool randomize) {
  if (num_envs < 1) throw std::invalid_argument("need at least one environment");
  EnvBatch b{std::move(model), {}, {}, seed, randomize, 0};
  b.states.reserve(num_envs);
  b.episodes.assign(num_envs, 0);
  for (int i = 0; i < num_envs; ++i) {
    b.states.push_back(env::reset(b.model, hash_key(seed, static_cast<std::uint64_t>(i), 0),
                                  randomize));
  }
  return b;
}

void EnvBatch::reset_env(int i) {
  ++episodes[i];
  states[i] = env::reset(model, hash_key(seed, static_cast<std::uint64_t>(i), episodes[i]),
                         randomize);
}

RolloutBuffer collect(const Networks& nets, EnvBatch& envs, int horizon,
                      const CollectOptions& opts) {
  if (horizon < 1) throw std::invalid_argument("rollout horizon must be >= 1");
  const auto& model = envs.model;
  const int n_env = envs.size();
  const int obs_dim = env::observation_dim(model);
  const int act_dim = env::action_dim(model);
  const int dist_dim = env::disturbance_dim(model);
  const double model_limit = env::disturbance_limit(model);
  const double limit = opts.force_limit < 0.0 ? model_limit : opts.force_limit;
  if (limit > model_limit + 1e-12) {
    throw std::invalid_argument("force limit exceeds the environment's disturbance limit");
  }
  if (nets.actor.obs_dim() != obs_dim || nets.actor.act_dim() != act_dim ||
      nets.critic.net().input_dim() != obs_dim) {
    throw std::invalid_argument("network shapes do not match the environment");
  }
  const bool learned = opts.disturber == DisturberMode::kLearned;
  if (learned && (nets.disturber.obs_dim() != obs_dim || nets.disturber.act_dim() != dist_dim)) {
    throw std::invalid_argument("disturber shape does not match the environment");
  }

  RolloutBuffer buf;
  buf.num_envs = n_env;
  buf.horizon = horizon;
  buf.r_max_task = env::r_max_task(model);
  buf.disturber = opts.disturber;
  const int nt = n_env * horizon;
  buf.obs.resize(obs_dim, nt);
  buf.action.resize(act_dim, nt);
  buf.action_logp.resize(nt);
  buf.disturbance_raw = Eigen::MatrixXd::Zero(dist_dim, nt);
  buf.force = Eigen::MatrixXd::Zero(dist_dim, nt);
  buf.disturbance_logp = Eigen::VectorXd::Zero(nt);
  buf.force_norm.resize(nt);
  buf.reward.resize(nt);
  buf.task_reward.resize(nt);
  buf.cost.resize(nt);
  buf.value.resize(nt);
  buf.value_cost.resize(nt);
  buf.next_value = Eigen::VectorXd::Zero(nt);
  buf.next_value_cost = Eigen::VectorXd::Zero(nt);
  buf.done.assign(nt, 0);
  buf.terminal.assign(nt, 0);
  buf.fall.assign(nt, 0);

  Eigen::MatrixXd obs_now(obs_dim, n_env);
  std::vector<int> pending;  // transitions truncated by the time limit this step
  Eigen::MatrixXd pending_obs(obs_dim, n_env);
  env::Disturbance dist{Eigen::VectorXd::Zero(dist_dim)};

  for (int t = 0; t < horizon; ++t) {
    for (int i = 0; i < n_env; ++i) env::observe(model, envs.states[i], obs_now.col(i));
    const nn::PolicyOutput act_out = nets.actor.forward(obs_now);
    nn::PolicyOutput dist_out;
    if (learned) dist_out = nets.disturber.forward(obs_now);
    const nn::CriticOutput crit = nets.critic.forward(obs_now);
    pending.clear();

    for (int i = 0; i < n_env; ++i) {
      const int j = buf.index(i, t);
      const auto step_key = static_cast<std::uint64_t>(envs.steps);
      buf.obs.col(j) = obs_now.col(i);
      buf.value[j] = crit.v[i];
      buf.value_cost[j] = crit.v_cost[i];
      if (t > 0 && !buf.done[j - 1]) {
        buf.next_value[j - 1] = crit.v[i];
        buf.next_value_cost[j - 1] = crit.v_cost[i];
      }

      auto actor_rng = CounterRng::for_step(envs.seed, i, step_key, Stream::kActor);
      nn::Sample a;
      if (opts.deterministic_actor) {
        a.raw = act_out.mean.col(i);
        a.action = a.raw;
        a.logp = nn::gaussian_logprob(a.raw, act_out.log_std, a.raw);
      } else {
        a = nn::sample_and_logprob(act_out.mean.col(i), act_out.log_std, actor_rng);
      }
      buf.action.col(j) = a.raw;
      buf.action_logp[j] = a.logp;

      auto dist_rng = CounterRng::for_step(envs.seed, i, step_key, Stream::kDisturber);
      if (learned) {
        const nn::Sample d =
            nn::sample_disturbance(dist_out.mean.col(i), dist_out.log_std, 1.0, dist_rng);
        buf.disturbance_raw.col(j) = d.raw;
        buf.disturbance_logp[j] = d.logp;
        dist.force = limit * d.action;
      } else if (opts.disturber == DisturberMode::kUniform) {
        dist.force = uniform_force(dist_dim, limit, dist_rng);
        if (limit > 0.0) buf.disturbance_raw.col(j) = dist.force / limit;
      } else {
        dist.force.setZero();
      }
      buf.force.col(j) = dist.force;
      buf.force_norm[j] = env::intensity(model, dist);

      env::StepResult r = env::step(model, envs.states[i], a.action, dist);
      buf.task_reward[j] = r.reward.task;
      buf.reward[j] = r.reward.task + r.reward.aux;
      buf.cost[j] = rewards::cost(r.reward.task, buf.r_max_task);
      buf.fall[j] = r.fall;
      if (r.terminated) {
        buf.done[j] = 1;
        buf.terminal[j] = !r.truncated;
        if (r.truncated) {
          env::observe(model, r.next_state, pending_obs.col(static_cast<Eigen::Index>(pending.size())));
          pending.push_back(j);
        }
        envs.reset_env(i);
      } else {
        envs.states[i] = std::move(r.next_state);
      }
    }

    if (!pending.empty()) {
      const auto np = static_cast<Eigen::Index>(pending.size());
      const nn::CriticOutput boot = nets.critic.forward(pending_obs.leftCols(np));
      for (Eigen::Index k = 0; k < np; ++k) {
        buf.next_value[pending[k]] = boot.v[k];
        buf.next_value_cost[pending[k]] = boot.v_cost[k];
      }
    }
    ++envs.steps;
  }

  for (int i = 0; i < n_env; ++i) env::observe(model, envs.states[i], obs_now.col(i));
  const nn::CriticOutput last = nets.critic.forward(obs_now);
  for (int i = 0; i < n_env; ++i) {
    const int j = buf.index(i, horizon - 1);
    if (!buf.done[j]) {
      buf.next_value[j] = last.v[i];
      buf.next_value_cost[j] = last.v_cost[i];
    }
  }
  return buf;
}

AdvantageSet compute_advantages(const RolloutBuffer& buf, double gamma, double gamma2, double eta,
                                const AdvantageOptions& opts) {
  if (!(gamma >= 0.0 && gamma < 1.0) || !(gamma2 >= 0.0 && gamma2 < 1.0)) {
    throw std::invalid_argument("discounts must lie in [0, 1)");
  }
  const int nt = buf.size();
  AdvantageSet out;
  out.actor_raw.resize(nt);
  out.returns.resize(nt);
  out.cost_returns.resize(nt);
  out.disturber.resize(nt);
  for (int e = 0; e < buf.num_envs; ++e) {
    double ret = 0.0, cost_ret = 0.0;
    for (int t = buf.horizon - 1; t >= 0; --t) {
      const int j = buf.index(e, t);
      const bool cut = buf.done[j] || t == buf.horizon - 1;
      const double carry = cut ? buf.next_value[j] : ret;
      const double cost_carry = cut ? buf.next_value_cost[j] : cost_ret;
      ret = buf.reward[j] + gamma * carry;
      cost_ret = buf.cost[j] + gamma2 * cost_carry;
      out.returns[j] = ret;
      out.actor_raw[j] = ret - buf.value[j];
      out.cost_returns[j] = cost_ret;
      double d = buf.cost[j] - eta * buf.force_norm[j];
      if (opts.disturber_baseline == BaselineMode::kOneStep) {
        d += gamma2 * buf.next_value_cost[j] - buf.value_cost[j];
      }
      out.disturber[j] = d;
    }
  }
  out.actor = out.actor_raw;
  if (opts.normalize_actor && nt > 1) {
    const double mean = out.actor_raw.mean();
    const double var = (out.actor_raw.array() - mean).square().mean();
    out.actor = ((out.actor_raw.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
  }
  return out;
}

void write_csv(const RolloutBuffer& buf, std::ostream& os) {
  os << "env,t,done,terminal,reward,task_reward,cost,value,value_cost,next_value,"
        "next_value_cost,action_logp,disturbance_logp,force_norm";
  for (Eigen::Index k = 0; k < buf.obs.rows(); ++k) os << ",obs_" << k;
  for (Eigen::Index k = 0; k < buf.action.rows(); ++k) os << ",action_" << k;
  for (Eigen::Index k = 0; k < buf.force.rows(); ++k) os << ",force_" << k;
  os << '\n';
  char num[32];
  auto put = [&](double v) {
    std::snprintf(num, sizeof(num), ",%.17g", v);
    os << num;
  };
  for (int e = 0; e < buf.num_envs; ++e) {
    for (int t = 0; t < buf.horizon; ++t) {
      const int j = buf.index(e, t);
      os << e << ',' << t << ',' << int(buf.done[j]) << ',' << int(buf.terminal[j]);
      for (double v : {buf.reward[j], buf.task_reward[j], buf.cost[j], buf.value[j],
                       buf.value_cost[j], buf.next_value[j], buf.next_value_cost[j],
                       buf.action_logp[j], buf.disturbance_logp[j], buf.force_norm[j]}) {
        put(v);
      }
      for (Eigen::Index k = 0; k < buf.obs.rows(); ++k) put(buf.obs(k, j));
      for (Eigen::Index k = 0; k < buf.action.rows(); ++k) put(buf.action(k, j));
      for (Eigen::Index k = 0; k < buf.force.rows(); ++k) put(buf.force(k, j));
      os << '\n';
    }
  }
}

}  // namespace hinf::rollout
