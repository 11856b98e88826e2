#include "hinf/approx.h"

#include <algorithm>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hinf::nn {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 log(2 pi)

// tanh through exp so that Eigen vectorizes it
void apply_activation(Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::kTanh) {
    z.array() = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
  } else {
    z.array() = (z.array() > 0.0).select(z.array(), z.array().exp() - 1.0);
  }
}

// derivative from the activation output y
void scale_by_derivative(Eigen::MatrixXd& d, const Eigen::MatrixXd& y, Activation act) {
  if (act == Activation::kTanh) {
    d.array() *= 1.0 - y.array().square();
  } else {
    d.array() *= (y.array() > 0.0).select(Eigen::ArrayXXd::Ones(y.rows(), y.cols()),
                                          y.array() + 1.0);
  }
}

}  // namespace

Mlp::Mlp(std::vector<int> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw std::invalid_argument("an MLP needs at least two widths");
  for (int w : widths_) {
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  }
  Eigen::Index total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int layer) const {
  return {params_.data() + offsets_[layer], widths_[layer + 1], widths_[layer]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  const Eigen::Index rows = widths_[layer + 1];
  return {params_.data() + offsets_[layer] + rows * widths_[layer], rows};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  if (widths_.empty()) throw std::logic_error("forward on an unconfigured MLP");
  if (x.rows() != input_dim()) {
    throw std::invalid_argument("MLP input has " + std::to_string(x.rows()) +
                                " features, expected " + std::to_string(input_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->inputs.reserve(num_layers());
    tape->recorded = true;
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) apply_activation(z, activation_);
    if (tape) {
      tape->inputs.push_back(std::move(h));
    }
    h = std::move(z);
  }
  return h;
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& d_out,
                   Eigen::Ref<Eigen::VectorXd> grad, Eigen::MatrixXd* d_in) const {
  if (!tape.recorded || static_cast<int>(tape.inputs.size()) != num_layers()) {
    throw std::logic_error("backward called without a recorded forward pass");
  }
  if (grad.size() != num_params()) throw std::invalid_argument("gradient size mismatch");
  const Eigen::Index batch = tape.inputs.front().cols();
  if (d_out.rows() != output_dim() || d_out.cols() != batch) {
    throw std::invalid_argument("output gradient shape mismatch");
  }
  Eigen::MatrixXd delta = d_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& in = tape.inputs[l];
    const Eigen::Index rows = widths_[l + 1], cols = widths_[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + rows * cols, rows);
    gw.noalias() += delta * in.transpose();
    gb += delta.rowwise().sum();
    if (l > 0 || d_in) {
      Eigen::MatrixXd prev = weight(l).transpose() * delta;
      if (l > 0) {
        scale_by_derivative(prev, in, activation_);
        delta = std::move(prev);
      } else {
        *d_in = std::move(prev);
      }
    }
  }
}

void Mlp::init_orthogonal(std::uint64_t seed, double hidden_gain, double output_gain) {
  CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(Stream::kInit)));
  params_.setZero();
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = widths_[l + 1], cols = widths_[l];
    const int big = std::max(rows, cols);
    Eigen::MatrixXd g(big, big);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    // sign fix so the draw is uniform over the orthogonal group
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < big; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    const double gain = (l + 1 == num_layers()) ? output_gain : hidden_gain;
    Eigen::Map<Eigen::MatrixXd> w(params_.data() + offsets_[l], rows, cols);
    w = gain * q.topLeftCorner(rows, cols);
  }
}

double Mlp::lipschitz_bound() const {
  double bound = 1.0;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(weight(l));
    bound *= svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  }
  return bound;
}

// ---------------------------------------------------------------- gaussian

double gaussian_logprob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                        const Eigen::Ref<const Eigen::VectorXd>& log_std,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::ArrayXd z = (x - mean).array() * (-log_std.array()).exp();
  return (-0.5 * z.square() - log_std.array() - kHalfLog2Pi).sum();
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() + static_cast<double>(log_std.size()) * (0.5 + kHalfLog2Pi);
}

Eigen::VectorXd radial_clip(const Eigen::VectorXd& u, double limit) {
  const double n = u.norm();
  return limit * (n > 1.0 ? Eigen::VectorXd(u / n) : u);
}

GaussianPolicy::GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden,
                               Activation activation, double init_log_std) {
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(act_dim);
  net_ = Mlp(widths, activation);
  log_std_ = Eigen::VectorXd::Constant(act_dim, std::clamp(init_log_std, kLogStdMin, kLogStdMax));
}

Eigen::VectorXd GaussianPolicy::flat_params() const {
  Eigen::VectorXd flat(num_params());
  flat << net_.params(), log_std_;
  return flat;
}

void GaussianPolicy::set_flat_params(const Eigen::VectorXd& flat) {
  if (flat.size() != num_params()) throw std::invalid_argument("policy parameter size mismatch");
  net_.params() = flat.head(net_.num_params());
  log_std_ = flat.tail(log_std_.size());
}

void GaussianPolicy::add_to_params(const Eigen::VectorXd& delta) {
  if (delta.size() != num_params()) throw std::invalid_argument("policy parameter size mismatch");
  net_.params() += delta.head(net_.num_params());
  log_std_ += delta.tail(log_std_.size());
  clamp_log_std();
}

void GaussianPolicy::clamp_log_std() { log_std_ = clamped_log_std(); }

Eigen::VectorXd GaussianPolicy::clamped_log_std() const {
  return log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

PolicyOutput GaussianPolicy::forward(const Eigen::MatrixXd& obs, Mlp::Tape* tape) const {
  return {net_.forward(obs, tape), clamped_log_std()};
}

void GaussianPolicy::backward(const Mlp::Tape& tape, const Eigen::MatrixXd& d_mean,
                              const Eigen::VectorXd& d_log_std,
                              Eigen::Ref<Eigen::VectorXd> grad) const {
  if (grad.size() != num_params()) throw std::invalid_argument("gradient size mismatch");
  net_.backward(tape, d_mean, grad.head(net_.num_params()));
  for (Eigen::Index i = 0; i < log_std_.size(); ++i) {
    if (log_std_[i] > kLogStdMin && log_std_[i] < kLogStdMax) {
      grad[net_.num_params() + i] += d_log_std[i];
    }
  }
}

void GaussianPolicy::init(std::uint64_t seed, double output_gain) {
  net_.init_orthogonal(seed, std::numbers::sqrt2, output_gain);
}

Sample sample_and_logprob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                          const Eigen::VectorXd& log_std, CounterRng& rng) {
  if (!mean.allFinite() || !log_std.allFinite()) {
    throw std::invalid_argument("non-finite policy output");
  }
  Sample s;
  s.raw.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    s.raw[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  }
  s.action = s.raw;
  s.logp = gaussian_logprob(mean, log_std, s.raw);
  return s;
}

Sample sample_disturbance(const Eigen::Ref<const Eigen::VectorXd>& mean,
                          const Eigen::VectorXd& log_std, double force_limit, CounterRng& rng) {
  Sample s = sample_and_logprob(mean, log_std, rng);
  s.action = radial_clip(s.raw, force_limit);
  return s;
}

// ---------------------------------------------------------------- critic

DoubleHeadCritic::DoubleHeadCritic(int obs_dim, const std::vector<int>& hidden,
                                   Activation activation) {
  std::vector<int> widths{obs_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2);
  net_ = Mlp(widths, activation);
}

CriticOutput DoubleHeadCritic::forward(const Eigen::MatrixXd& obs, Mlp::Tape* tape) const {
  const Eigen::MatrixXd y = net_.forward(obs, tape);
  CriticOutput out;
  out.v = y.row(0);
  out.raw_cost = y.row(1);
  out.v_cost = out.raw_cost.unaryExpr([](double x) { return softplus(x); });
  return out;
}

void DoubleHeadCritic::backward(const Mlp::Tape& tape, const CriticOutput& out,
                                const Eigen::RowVectorXd& d_v, const Eigen::RowVectorXd& d_v_cost,
                                Eigen::Ref<Eigen::VectorXd> grad) const {
  Eigen::MatrixXd d_out(2, d_v.size());
  d_out.row(0) = d_v;
  d_out.row(1) =
      d_v_cost.cwiseProduct(out.raw_cost.unaryExpr([](double x) { return sigmoid(x); }));
  net_.backward(tape, d_out, grad);
}

void DoubleHeadCritic::init(std::uint64_t seed) {
  net_.init_orthogonal(seed, std::numbers::sqrt2, 1.0);
}

// ---------------------------------------------------------------- adam

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(n)),
      v_(Eigen::VectorXd::Zero(n)) {}

Eigen::VectorXd Adam::step(const Eigen::VectorXd& g) {
  if (g.size() != m_.size()) throw std::invalid_argument("Adam gradient size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * g;
  v_ = beta2_ * v_ + (1.0 - beta2_) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  return (-lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_)).matrix();
}

void Adam::restore(Eigen::VectorXd m, Eigen::VectorXd v, std::int64_t t) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw std::invalid_argument("Adam state size mismatch");
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace hinf::nn
