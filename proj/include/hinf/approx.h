#ifndef HINF_APPROX_H_
#define HINF_APPROX_H_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hinf/rng.h"

namespace hinf::nn {

enum class Activation { kTanh, kElu };

// Fully connected network on column batches (features x batch). Parameters
// live in one flat vector: for every layer, W (out x in, column-major) then b.
class Mlp {
 public:
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of every layer
    bool recorded = false;
  };

  Mlp() = default;
  Mlp(std::vector<int> widths, Activation activation);

  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  Eigen::Index num_params() const { return params_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  // Output of the last (linear) layer. Throws std::invalid_argument when the
  // input height differs from input_dim().
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;

  // Accumulates dL/dparams into grad given dL/doutput. Throws std::logic_error
  // if the tape holds no recorded forward pass.
  void backward(const Tape& tape, const Eigen::MatrixXd& d_out, Eigen::Ref<Eigen::VectorXd> grad,
                Eigen::MatrixXd* d_in = nullptr) const;

  void init_orthogonal(std::uint64_t seed, double hidden_gain, double output_gain);

  // Product of layer spectral norms; activations are 1-Lipschitz.
  double lipschitz_bound() const;

 private:
  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;
  Activation activation_ = Activation::kTanh;
  Eigen::VectorXd params_;
};

inline constexpr double kLogStdMin = -6.907755278982137;  // log(1e-3)
inline constexpr double kLogStdMax = 0.6931471805599453;  // log(2)

double gaussian_logprob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                        const Eigen::Ref<const Eigen::VectorXd>& log_std,
                        const Eigen::Ref<const Eigen::VectorXd>& x);
double gaussian_entropy(const Eigen::VectorXd& log_std);

// Rescales u so that ||limit * u||_2 <= limit, preserving direction.
Eigen::VectorXd radial_clip(const Eigen::VectorXd& u, double limit);

struct PolicyOutput {
  Eigen::MatrixXd mean;     // act_dim x batch
  Eigen::VectorXd log_std;  // act_dim, clamped
};

struct Sample {
  Eigen::VectorXd raw;     // mean + std * eps
  Eigen::VectorXd action;  // raw for the actor, the clipped force for the disturber
  double logp = 0.0;       // log-density of raw
};

// Diagonal Gaussian head with a state-independent log standard deviation.
// Flat parameter order: network parameters, then log_std.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden, Activation activation,
                 double init_log_std);

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  Eigen::VectorXd& log_std() { return log_std_; }
  const Eigen::VectorXd& log_std() const { return log_std_; }
  int obs_dim() const { return net_.input_dim(); }
  int act_dim() const { return net_.output_dim(); }
  Eigen::Index num_params() const { return net_.num_params() + log_std_.size(); }

  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& flat);
  void add_to_params(const Eigen::VectorXd& delta);
  void clamp_log_std();
  Eigen::VectorXd clamped_log_std() const;

  PolicyOutput forward(const Eigen::MatrixXd& obs, Mlp::Tape* tape = nullptr) const;

  // d_mean: act_dim x batch; d_log_std: gradient w.r.t. the clamped log_std.
  void backward(const Mlp::Tape& tape, const Eigen::MatrixXd& d_mean,
                const Eigen::VectorXd& d_log_std, Eigen::Ref<Eigen::VectorXd> grad) const;

  void init(std::uint64_t seed, double output_gain);

 private:
  Mlp net_;
  Eigen::VectorXd log_std_;
};

// Actor sample: raw Gaussian draw, action == raw.
Sample sample_and_logprob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                          const Eigen::VectorXd& log_std, CounterRng& rng);
// Disturber sample: force = radial_clip(raw, force_limit), logp of raw.
Sample sample_disturbance(const Eigen::Ref<const Eigen::VectorXd>& mean,
                          const Eigen::VectorXd& log_std, double force_limit, CounterRng& rng);

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct CriticOutput {
  Eigen::RowVectorXd v;         // overall value
  Eigen::RowVectorXd v_cost;    // softplus(raw_cost) >= 0
  Eigen::RowVectorXd raw_cost;
};

// Double-head critic: one trunk, outputs V and V^cost.
class DoubleHeadCritic {
 public:
  DoubleHeadCritic() = default;
  DoubleHeadCritic(int obs_dim, const std::vector<int>& hidden, Activation activation);

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  Eigen::Index num_params() const { return net_.num_params(); }

  CriticOutput forward(const Eigen::MatrixXd& obs, Mlp::Tape* tape = nullptr) const;
  void backward(const Mlp::Tape& tape, const CriticOutput& out, const Eigen::RowVectorXd& d_v,
                const Eigen::RowVectorXd& d_v_cost, Eigen::Ref<Eigen::VectorXd> grad) const;

  void init(std::uint64_t seed);

 private:
  Mlp net_;
};

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // returns the parameter increment for gradient g (descent direction)
  Eigen::VectorXd step(const Eigen::VectorXd& g);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  const Eigen::VectorXd& m() const { return m_; }
  const Eigen::VectorXd& v() const { return v_; }
  std::int64_t t() const { return t_; }
  void restore(Eigen::VectorXd m, Eigen::VectorXd v, std::int64_t t);

 private:
  double lr_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Eigen::VectorXd m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace hinf::nn

#endif  // HINF_APPROX_H_
