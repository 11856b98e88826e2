#include "hinf/oracle.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "hinf/rng.h"

namespace hinf::oracle {

RiccatiSolution solve_lq_hinf(const env::LqModel& model, double gamma_att,
                              const RiccatiOptions& opts) {
  model.validate();
  if (!(gamma_att > 0.0) || !std::isfinite(gamma_att)) {
    throw std::invalid_argument("gamma_att must be positive and finite");
  }
  if (!(opts.discount > 0.0 && opts.discount <= 1.0)) {
    throw std::invalid_argument("discount must be in (0, 1]");
  }
  const int n = model.n(), m = model.m(), l = model.l();
  const double sb = std::sqrt(opts.discount);
  const Eigen::MatrixXd A = sb * model.A;
  Eigen::MatrixXd G(n, m + l);
  G << sb * model.B, sb * model.E;
  Eigen::MatrixXd Rt = Eigen::MatrixXd::Zero(m + l, m + l);
  Rt.topLeftCorner(m, m) = model.R_u;
  Rt.bottomRightCorner(l, l) = -gamma_att * gamma_att * Eigen::MatrixXd::Identity(l, l);
  const Eigen::MatrixXd Eb = G.rightCols(l);
  const Eigen::MatrixXd g2I = gamma_att * gamma_att * Eigen::MatrixXd::Identity(l, l);

  RiccatiSolution sol;
  sol.gamma_att = gamma_att;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  auto inner_ok = [&](const Eigen::MatrixXd& p) {
    const Eigen::MatrixXd inner = g2I - Eb.transpose() * p * Eb;
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (inner + inner.transpose()));
    return llt.info() == Eigen::Success;
  };
  Eigen::MatrixXd M, K;
  for (int k = 0; k < opts.max_iterations; ++k) {
    sol.iterations = k + 1;
    if (!inner_ok(P)) {
      sol.status = "indefinite";
      sol.P = P;
      return sol;
    }
    M = Rt + G.transpose() * P * G;
    const Eigen::MatrixXd GPA = G.transpose() * P * A;
    K = -M.partialPivLu().solve(GPA);
    Eigen::MatrixXd next = model.Q + A.transpose() * P * A + GPA.transpose() * K;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > opts.divergence) {
      sol.status = "diverged";
      sol.P = next;
      return sol;
    }
    const double diff = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (diff < opts.tol) {
      if (!inner_ok(P)) {
        sol.status = "indefinite";
        sol.P = P;
        return sol;
      }
      M = Rt + G.transpose() * P * G;
      K = -M.partialPivLu().solve(G.transpose() * P * A);
      sol.P = P;
      sol.feasible = true;
      sol.status = "converged";
      // A and G carry the same sqrt(beta) factor, so K is already unscaled.
      sol.K_u = K.topRows(m);
      sol.K_w = K.bottomRows(l);
      return sol;
    }
  }
  sol.status = "no convergence";
  sol.P = P;
  return sol;
}

double feasibility_threshold(const env::LqModel& model, double lo, double hi, double tol,
                             const RiccatiOptions& opts) {
  if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("need 0 < lo < hi");
  if (!solve_lq_hinf(model, hi, opts).feasible) {
    throw std::domain_error("infeasible at the upper end of the bracket");
  }
  if (solve_lq_hinf(model, lo, opts).feasible) return lo;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (solve_lq_hinf(model, mid, opts).feasible ? hi : lo) = mid;
  }
  return hi;
}

GameValue bellman_minmax(const env::TabularGame& game, double eta, double gamma2,
                         const Eigen::VectorXd& v) {
  const int ns = game.n_states(), na = game.n_actions(), nd = game.n_disturbances();
  GameValue out;
  out.value.resize(ns);
  out.policy.assign(ns, 0);
  out.disturbance.assign(ns, 0);
  for (int s = 0; s < ns; ++s) {
    double best = 0.0;
    for (int a = 0; a < na; ++a) {
      double worst = 0.0;
      int worst_d = 0;
      for (int d = 0; d < nd; ++d) {
        double next = 0.0;
        for (int sp = 0; sp < ns; ++sp) {
          const double p = game.prob(s, a, d, sp);
          if (p != 0.0) next += p * v[sp];
        }
        const double q = game.cost(s, a, d) - eta * game.intensity(d) + gamma2 * next;
        if (d == 0 || q > worst) {
          worst = q;
          worst_d = d;
        }
      }
      if (a == 0 || worst < best) {
        best = worst;
        out.policy[s] = a;
        out.disturbance[s] = worst_d;
      }
    }
    out.value[s] = best;
  }
  return out;
}

GameValue minmax_value_iteration(const env::TabularGame& game, double eta, double gamma2,
                                 double tol, int max_sweeps) {
  game.validate();
  if (!(gamma2 >= 0.0 && gamma2 < 1.0)) throw std::invalid_argument("gamma2 must be in [0, 1)");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(game.n_states());
  int sweeps = 0;
  for (; sweeps < max_sweeps; ++sweeps) {
    GameValue next = bellman_minmax(game, eta, gamma2, v);
    const double diff = (next.value - v).cwiseAbs().maxCoeff();
    v = std::move(next.value);
    if (diff < tol) break;
  }
  GameValue out = bellman_minmax(game, eta, gamma2, v);
  out.residual = (out.value - v).cwiseAbs().maxCoeff();
  out.value = std::move(v);
  out.sweeps = sweeps + 1;
  return out;
}

double empirical_hinf_ratio(std::span<const Trajectory> trajectories) {
  double sum_cost = 0.0, sum_norm = 0.0;
  for (const Trajectory& t : trajectories) {
    if (t.cost.size() != t.force_norm.size()) {
      throw std::invalid_argument("trajectory cost and force length differ");
    }
    for (std::size_t i = 0; i < t.cost.size(); ++i) {
      sum_cost += t.cost[i];
      sum_norm += t.force_norm[i];
    }
  }
  if (!(sum_norm > 0.0)) throw std::domain_error("H-infinity ratio undefined: no disturbance");
  return sum_cost / sum_norm;
}

std::vector<double> grid_points(double lo, double hi, int n) {
  if (n < 2) throw std::invalid_argument("grid needs at least two points");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  if (n % 2 == 1 && lo == -hi) g[n / 2] = 0.0;
  return g;
}

env::TabularGame discretize_scalar_lq(const ScalarLqGrid& g) {
  const std::vector<double> xs = grid_points(-g.x_max, g.x_max, g.n_states);
  const std::vector<double> us = grid_points(-g.u_max, g.u_max, g.n_actions);
  const std::vector<double> ws = grid_points(-g.w_max, g.w_max, g.n_disturbances);
  const double h = xs[1] - xs[0];
  env::TabularGame game(g.n_states, g.n_actions, g.n_disturbances);
  for (int d = 0; d < g.n_disturbances; ++d) game.intensity(d) = ws[d] * ws[d];
  for (int s = 0; s < g.n_states; ++s) {
    for (int a = 0; a < g.n_actions; ++a) {
      for (int d = 0; d < g.n_disturbances; ++d) {
        game.cost(s, a, d) = g.q * xs[s] * xs[s] + g.r * us[a] * us[a];
        const double xn = std::clamp(g.a * xs[s] + g.b * us[a] + g.e * ws[d], -g.x_max, g.x_max);
        const double pos = (xn + g.x_max) / h;
        const int i = std::clamp(static_cast<int>(std::floor(pos)), 0, g.n_states - 2);
        const double frac = std::clamp(pos - i, 0.0, 1.0);
        for (int sp = 0; sp < g.n_states; ++sp) game.prob(s, a, d, sp) = 0.0;
        game.prob(s, a, d, i) = 1.0 - frac;
        game.prob(s, a, d, i + 1) += frac;
      }
    }
  }
  return game;
}

namespace {

int draw(const Eigen::Ref<const Eigen::RowVectorXd>& probs, double u) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = probs.size() - 1; i > 0; --i) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

MarkovChainResult simulate_average_payoff(const env::TabularGame& game,
                                          const Eigen::MatrixXd& policy,
                                          const Eigen::MatrixXd& disturber, double eta,
                                          int start_state, std::int64_t steps,
                                          std::uint64_t seed) {
  game.validate();
  if (policy.rows() != game.n_states() || policy.cols() != game.n_actions() ||
      disturber.rows() != game.n_states() || disturber.cols() != game.n_disturbances()) {
    throw std::invalid_argument("strategy table shape mismatch");
  }
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  CounterRng rng(hash_key(seed, static_cast<std::uint64_t>(Stream::kTransition)));
  Eigen::RowVectorXd row(game.n_states());
  double cost = 0.0, norm = 0.0;
  int s = start_state;
  for (std::int64_t t = 0; t < steps; ++t) {
    const int a = draw(policy.row(s), rng.uniform());
    const int d = draw(disturber.row(s), rng.uniform());
    cost += game.cost(s, a, d);
    norm += game.intensity(d);
    for (int sp = 0; sp < game.n_states(); ++sp) row[sp] = game.prob(s, a, d, sp);
    s = draw(row, rng.uniform());
  }
  const double T = static_cast<double>(steps);
  return {(cost - eta * norm) / T, cost / T, norm / T};
}

void write_csv(const RiccatiSolution& sol, std::ostream& os) {
  char buf[64];
  os << "field,row,col,value\n";
  os << "feasible,0,0," << (sol.feasible ? 1 : 0) << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", sol.gamma_att);
  os << "gamma_att,0,0," << buf << "\n";
  os << "iterations,0,0," << sol.iterations << "\n";
  auto dump = [&](const char* name, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
        os << name << "," << i << "," << j << "," << buf << "\n";
      }
    }
  };
  dump("P", sol.P);
  dump("K_u", sol.K_u);
  dump("K_w", sol.K_w);
}

void write_csv(const GameValue& gv, std::ostream& os) {
  char buf[64];
  os << "state,value,action,disturbance\n";
  for (Eigen::Index s = 0; s < gv.value.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", gv.value[s]);
    os << s << "," << buf << "," << gv.policy[s] << "," << gv.disturbance[s] << "\n";
  }
}

}  // namespace hinf::oracle
