#include "hinf/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hinf/rng.h"

namespace hinf {
namespace {

constexpr double kMaxLogRatio = 20.0;

struct Gathered {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd sample;
  Eigen::VectorXd old_logp;
};

Gathered gather(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& sample,
                const Eigen::VectorXd& logp, std::span<const int> idx) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  Gathered g{Eigen::MatrixXd(obs.rows(), b), Eigen::MatrixXd(sample.rows(), b),
             Eigen::VectorXd(b)};
  for (Eigen::Index k = 0; k < b; ++k) {
    g.obs.col(k) = obs.col(idx[k]);
    g.sample.col(k) = sample.col(idx[k]);
    g.old_logp[k] = logp[idx[k]];
  }
  return g;
}

// Shared clipped-surrogate pass. extra(j, q) returns the additional
// d loss / d logp for the sample (already divided by the batch size).
template <typename Extra>
void clipped_surrogate(const nn::PolicyOutput& po, const Gathered& g,
                       const Eigen::VectorXd& advantage, double clip_eps, Extra&& extra,
                       double& clip_sum, Eigen::MatrixXd& d_mean, Eigen::VectorXd& d_log_std) {
  const Eigen::Index b = g.obs.cols();
  const Eigen::Index m = po.mean.rows();
  const Eigen::VectorXd inv_std = (-po.log_std.array()).exp();
  const double inv_b = 1.0 / static_cast<double>(b);
  d_mean.resize(m, b);
  d_log_std = Eigen::VectorXd::Zero(m);
  clip_sum = 0.0;
  Eigen::VectorXd z(m);
  for (Eigen::Index j = 0; j < b; ++j) {
    z = (g.sample.col(j) - po.mean.col(j)).cwiseProduct(inv_std);
    const double logp = nn::gaussian_logprob(po.mean.col(j), po.log_std, g.sample.col(j));
    const double log_ratio = logp - g.old_logp[j];
    if (!(std::abs(log_ratio) <= kMaxLogRatio)) {
      throw std::runtime_error("policy ratio overflow: |log ratio| = " +
                               std::to_string(std::abs(log_ratio)) + ", training diverged");
    }
    const double q = std::exp(log_ratio);
    const double a = advantage[j];
    const double unclipped = q * a;
    const double clipped = std::clamp(q, 1.0 - clip_eps, 1.0 + clip_eps) * a;
    double g_logp = 0.0;
    if (unclipped <= clipped) {
      clip_sum += unclipped;
      g_logp -= a * q * inv_b;
    } else {
      clip_sum += clipped;
    }
    g_logp += extra(j, q);
    d_mean.col(j) = g_logp * z.cwiseProduct(inv_std);
    d_log_std.array() += g_logp * (z.array().square() - 1.0);
  }
}

}  // namespace

void HinfState::validate() const {
  if (!(eta >= 0.0) || !(lambda >= 0.0) || !(alpha > 0.0) || !(lambda_max >= 0.0) ||
      !(clip_eps > 0.0 && clip_eps < 1.0) || !(gamma >= 0.0 && gamma < 1.0) ||
      !(gamma2 >= 0.0 && gamma2 < 1.0) || !(entropy_coef >= 0.0) || !(value_coef >= 0.0) ||
      !(disturber_entropy_coef >= 0.0) || !std::isfinite(r_max_task)) {
    throw std::invalid_argument("invalid H-infinity state");
  }
}

LossValue actor_loss(const rollout::RolloutBuffer& buf, const rollout::AdvantageSet& adv,
                     const nn::GaussianPolicy& actor, const nn::DoubleHeadCritic& critic,
                     std::span<const int> idx, const HinfState& h) {
  if (idx.empty()) throw std::invalid_argument("empty minibatch");
  const Gathered g = gather(buf.obs, buf.action, buf.action_logp, idx);
  const auto b = static_cast<Eigen::Index>(idx.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::VectorXd a(b), ret(b), cret(b), cost(b), hinf_const(b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const int j = idx[k];
    a[k] = adv.actor[j];
    ret[k] = adv.returns[j];
    cret[k] = adv.cost_returns[j];
    cost[k] = buf.cost[j];
    hinf_const[k] = h.eta * buf.force_norm[j] + buf.value_cost[j] - buf.next_value_cost[j];
  }

  LossValue out;
  nn::Mlp::Tape tape;
  const nn::PolicyOutput po = actor.forward(g.obs, &tape);
  double l_hinf_sum = 0.0;
  const bool constrained = h.lambda != 0.0;
  auto extra = [&](Eigen::Index j, double q) {
    l_hinf_sum += hinf_const[j] - q * cost[j];
    return constrained ? h.lambda * cost[j] * q * inv_b : 0.0;
  };
  double clip_sum = 0.0;
  Eigen::MatrixXd d_mean;
  Eigen::VectorXd d_log_std;
  clipped_surrogate(po, g, a, h.clip_eps, extra, clip_sum, d_mean, d_log_std);
  out.clip_objective = clip_sum * inv_b;
  out.l_hinf = l_hinf_sum * inv_b;
  out.entropy = nn::gaussian_entropy(po.log_std);
  d_log_std.array() -= h.entropy_coef;
  out.policy_grad = Eigen::VectorXd::Zero(actor.num_params());
  actor.backward(tape, d_mean, d_log_std, out.policy_grad);

  nn::Mlp::Tape ctape;
  const nn::CriticOutput co = critic.forward(g.obs, &ctape);
  const Eigen::RowVectorXd ev = co.v - ret.transpose();
  const Eigen::RowVectorXd ec = co.v_cost - cret.transpose();
  out.value_loss = ev.squaredNorm() * inv_b;
  out.cost_value_loss = ec.squaredNorm() * inv_b;
  out.critic_grad = Eigen::VectorXd::Zero(critic.num_params());
  critic.backward(ctape, co, (2.0 * h.value_coef * inv_b) * ev,
                  (2.0 * h.value_coef * inv_b) * ec, out.critic_grad);

  out.loss = -(out.clip_objective + h.entropy_coef * out.entropy -
               h.value_coef * (out.value_loss + out.cost_value_loss) +
               (constrained ? h.lambda * out.l_hinf : 0.0));
  return out;
}

LossValue disturber_loss(const rollout::RolloutBuffer& buf, const rollout::AdvantageSet& adv,
                         const nn::GaussianPolicy& disturber, std::span<const int> idx,
                         const HinfState& h) {
  if (buf.disturber != rollout::DisturberMode::kLearned) {
    throw std::logic_error("disturber loss needs a buffer collected with the learned disturber");
  }
  if (idx.empty()) throw std::invalid_argument("empty minibatch");
  const Gathered g = gather(buf.obs, buf.disturbance_raw, buf.disturbance_logp, idx);
  const auto b = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd a(b);
  for (Eigen::Index k = 0; k < b; ++k) a[k] = adv.disturber[idx[k]];

  LossValue out;
  nn::Mlp::Tape tape;
  const nn::PolicyOutput po = disturber.forward(g.obs, &tape);
  double clip_sum = 0.0;
  Eigen::MatrixXd d_mean;
  Eigen::VectorXd d_log_std;
  clipped_surrogate(
      po, g, a, h.clip_eps, [](Eigen::Index, double) { return 0.0; }, clip_sum, d_mean,
      d_log_std);
  out.clip_objective = clip_sum / static_cast<double>(b);
  out.entropy = nn::gaussian_entropy(po.log_std);
  d_log_std.array() -= h.disturber_entropy_coef;
  out.policy_grad = Eigen::VectorXd::Zero(disturber.num_params());
  disturber.backward(tape, d_mean, d_log_std, out.policy_grad);
  out.loss = -(out.clip_objective + h.disturber_entropy_coef * out.entropy);
  return out;
}

Eigen::VectorXd hinf_terms(const rollout::RolloutBuffer& buf, double eta) {
  return (eta * buf.force_norm - buf.cost + buf.value_cost - buf.next_value_cost).eval();
}

HinfState dual_update(const HinfState& h, double l_hinf_mean) {
  HinfState out = h;
  out.lambda = std::clamp(h.lambda - h.alpha * l_hinf_mean, 0.0, h.lambda_max);
  return out;
}

EtaUpdate eta_update(const HinfState& h, double sum_cost, double sum_force_norm, double guard) {
  EtaUpdate out{h, false};
  if (!(sum_force_norm >= guard)) {
    out.skipped = true;
    return out;
  }
  out.state.eta = 0.9 * h.eta + 0.1 * (sum_cost / sum_force_norm);
  return out;
}

void TrainerConfig::validate() const {
  hinf.validate();
  if (epochs < 1 || minibatches < 1 || num_envs < 1 || horizon < 1 ||
      minibatches > num_envs * horizon) {
    throw std::invalid_argument("invalid batch layout");
  }
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0) || !(disturber_lr >= 0.0) ||
      !(max_grad_norm >= 0.0) || !(curriculum_max_force >= 0.0) ||
      curriculum_ramp_iterations < 0 || !(eta_guard > 0.0)) {
    throw std::invalid_argument("invalid trainer hyperparameters");
  }
  if (actor_hidden.empty() || critic_hidden.empty()) {
    throw std::invalid_argument("networks need at least one hidden layer");
  }
}

double curriculum_force(std::int64_t iteration, double max_force, int ramp_iterations) {
  if (ramp_iterations <= 0) return max_force;
  const double frac = std::min(1.0, static_cast<double>(iteration) / ramp_iterations);
  return max_force * frac;
}

Eigen::VectorXd clip_grad(const Eigen::VectorXd& g, double max_norm) {
  if (max_norm <= 0.0) return g;
  const double n = g.norm();
  return n > max_norm ? Eigen::VectorXd(g * (max_norm / n)) : g;
}

rollout::Networks make_networks(const env::EnvModel& model, const TrainerConfig& cfg,
                                std::uint64_t seed) {
  const int obs = env::observation_dim(model);
  rollout::Networks n{
      nn::GaussianPolicy(obs, env::action_dim(model), cfg.actor_hidden, cfg.activation,
                         cfg.actor_init_log_std),
      nn::GaussianPolicy(obs, env::disturbance_dim(model), cfg.actor_hidden, cfg.activation,
                         cfg.disturber_init_log_std),
      nn::DoubleHeadCritic(obs, cfg.critic_hidden, cfg.activation)};
  n.actor.init(hash_key(seed, 1), 0.01);
  n.disturber.init(hash_key(seed, 2), 0.01);
  n.critic.init(hash_key(seed, 3));
  return n;
}

Trainer::Trainer(env::EnvModel model, TrainerConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed), state_(cfg_.hinf) {
  cfg_.validate();
  state_.r_max_task = env::r_max_task(model);
  if (!cfg_.use_hinf_loss) state_.lambda = 0.0;
  nets_ = make_networks(model, cfg_, seed);
  opt_.actor = nn::Adam(nets_.actor.num_params(), cfg_.actor_lr);
  opt_.critic = nn::Adam(nets_.critic.num_params(), cfg_.critic_lr);
  opt_.disturber = nn::Adam(nets_.disturber.num_params(), cfg_.disturber_lr);
  envs_ = rollout::EnvBatch::create(std::move(model), cfg_.num_envs, hash_key(seed, 4),
                                    cfg_.randomize);
}

std::vector<std::vector<int>> Trainer::minibatches(int n, int epoch, std::uint64_t salt) const {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(hash_key(seed_, static_cast<std::uint64_t>(iteration_),
                               static_cast<std::uint64_t>(epoch), salt,
                               static_cast<std::uint64_t>(Stream::kShuffle)));
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::vector<int>> out(cfg_.minibatches);
  for (int k = 0; k < cfg_.minibatches; ++k) {
    const int lo = static_cast<int>(static_cast<long>(n) * k / cfg_.minibatches);
    const int hi = static_cast<int>(static_cast<long>(n) * (k + 1) / cfg_.minibatches);
    out[k].assign(order.begin() + lo, order.begin() + hi);
  }
  return out;
}

double Trainer::update_actor_critic(const rollout::RolloutBuffer& buf,
                                    const rollout::AdvantageSet& adv, LossReport& rep) {
  double loss_sum = 0.0;
  int count = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (const auto& mb : minibatches(buf.size(), epoch, 1)) {
      const LossValue lv = actor_loss(buf, adv, nets_.actor, nets_.critic, mb, state_);
      if (!std::isfinite(lv.loss)) throw std::runtime_error("non-finite actor loss");
      if (cfg_.update_actor) {
        nets_.actor.add_to_params(opt_.actor.step(clip_grad(lv.policy_grad, cfg_.max_grad_norm)));
      }
      nets_.critic.net().params() += opt_.critic.step(clip_grad(lv.critic_grad, cfg_.max_grad_norm));
      loss_sum += lv.loss;
      ++count;
      rep.actor_clip = lv.clip_objective;
      rep.entropy = lv.entropy;
      rep.value_loss = lv.value_loss;
      rep.cost_value_loss = lv.cost_value_loss;
    }
  }
  return loss_sum / count;
}

double Trainer::update_disturber(const rollout::RolloutBuffer& buf,
                                 const rollout::AdvantageSet& adv) {
  double loss_sum = 0.0;
  int count = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (const auto& mb : minibatches(buf.size(), epoch, 2)) {
      const LossValue lv = disturber_loss(buf, adv, nets_.disturber, mb, state_);
      if (!std::isfinite(lv.loss)) throw std::runtime_error("non-finite disturber loss");
      nets_.disturber.add_to_params(
          opt_.disturber.step(clip_grad(lv.policy_grad, cfg_.max_grad_norm)));
      loss_sum += lv.loss;
      ++count;
    }
  }
  return loss_sum / count;
}

LossReport Trainer::train_iteration() {
  LossReport rep;
  rep.iteration = iteration_ + 1;

  // collect with the current (old) policies
  rollout::CollectOptions co;
  co.deterministic_actor = cfg_.deterministic_actor;
  switch (cfg_.disturber) {
    case DisturberKind::kLearned:
      co.disturber = rollout::DisturberMode::kLearned;
      co.force_limit = cfg_.force_limit;
      break;
    case DisturberKind::kCurriculum:
      co.disturber = rollout::DisturberMode::kUniform;
      co.force_limit = curriculum_force(iteration_, cfg_.curriculum_max_force,
                                        cfg_.curriculum_ramp_iterations);
      break;
    case DisturberKind::kNone:
      co.disturber = rollout::DisturberMode::kZero;
      break;
  }
  rollout::RolloutBuffer buf = rollout::collect(nets_, envs_, cfg_.horizon, co);

  rollout::AdvantageSet adv = rollout::compute_advantages(
      buf, state_.gamma, state_.gamma2, state_.eta,
      {cfg_.normalize_advantages, cfg_.disturber_baseline});

  const Eigen::VectorXd terms = hinf_terms(buf, state_.eta);
  double l_sum = 0.0, sum_cost = 0.0, sum_force = 0.0, sum_task = 0.0;
  int satisfied = 0;
  for (int j = 0; j < buf.size(); ++j) {
    l_sum += terms[j];
    satisfied += terms[j] > 0.0;
    sum_cost += buf.cost[j];
    sum_force += buf.force_norm[j];
    sum_task += buf.task_reward[j];
    rep.falls += buf.fall[j] && buf.terminal[j];
  }
  const double n = static_cast<double>(buf.size());
  rep.samples = buf.size();
  rep.l_hinf_mean = l_sum / n;
  rep.sat_frac = satisfied / n;
  rep.sum_cost = sum_cost;
  rep.sum_force_norm = sum_force;
  rep.mean_cost = sum_cost / n;
  rep.mean_force_norm = sum_force / n;
  rep.mean_task_reward = sum_task / n;

  rep.actor_loss = update_actor_critic(buf, adv, rep);
  if (cfg_.update_disturber && buf.disturber == rollout::DisturberMode::kLearned) {
    rep.disturber_loss = update_disturber(buf, adv);
  }
  rep.lambda_before = state_.lambda;
  if (cfg_.use_hinf_loss) {
    state_ = dual_update(state_, rep.l_hinf_mean);
  } else {
    state_.lambda = 0.0;
  }
  rep.lambda_after = state_.lambda;
  rep.eta_before = state_.eta;
  if (cfg_.update_eta) {
    const EtaUpdate eu = eta_update(state_, sum_cost, sum_force, cfg_.eta_guard);
    state_ = eu.state;
    rep.eta_skipped = eu.skipped;
  } else {
    rep.eta_skipped = true;
  }
  rep.eta_after = state_.eta;

  ++iteration_;
  last_buf_ = std::move(buf);
  last_adv_ = std::move(adv);
  return rep;
}

}  // namespace hinf
