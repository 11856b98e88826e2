#ifndef HINF_ORACLE_H_
#define HINF_ORACLE_H_

#include <Eigen/Dense>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hinf/envkit.h"

namespace hinf::oracle {

struct RiccatiOptions {
  double discount = 1.0;  // beta in sum beta^t (x'Qx + u'Ru - g^2 w'w)
  int max_iterations = 200000;
  double tol = 1e-10;
  double divergence = 1e12;
};

struct RiccatiSolution {
  Eigen::MatrixXd P;
  bool feasible = false;
  Eigen::MatrixXd K_u;  // u = K_u x
  Eigen::MatrixXd K_w;  // worst-case w = K_w x
  double gamma_att = 0.0;
  int iterations = 0;
  std::string status;  // "converged", "indefinite", "diverged", "no convergence"
};

// Discrete-time game Riccati recursion from P = 0. Infeasibility is reported
// in the result; only a malformed model or gamma_att <= 0 throws.
RiccatiSolution solve_lq_hinf(const env::LqModel& model, double gamma_att,
                              const RiccatiOptions& opts = {});

// Smallest feasible attenuation on [lo, hi] to within tol.
double feasibility_threshold(const env::LqModel& model, double lo, double hi, double tol = 1e-6,
                             const RiccatiOptions& opts = {});

struct GameValue {
  Eigen::VectorXd value;
  std::vector<int> policy;       // minimizing action per state
  std::vector<int> disturbance;  // maximizing disturbance against policy
  double residual = 0.0;
  int sweeps = 0;
};

// V(s) = min_a max_d [C(s,a,d) - eta ||d|| + gamma2 sum_s' P V(s')], pure
// strategies, lowest index on ties. Iterates until the Bellman residual is
// below tol.
GameValue minmax_value_iteration(const env::TabularGame& game, double eta, double gamma2,
                                 double tol = 1e-11, int max_sweeps = 10000000);

// One Bellman min-max sweep; returns the new values and the argmin/argmax.
GameValue bellman_minmax(const env::TabularGame& game, double eta, double gamma2,
                         const Eigen::VectorXd& v);

struct Trajectory {
  std::vector<double> cost;
  std::vector<double> force_norm;
};

// (sum C) / (sum ||d||) over every step; std::domain_error when no step
// carries a disturbance.
double empirical_hinf_ratio(std::span<const Trajectory> trajectories);

// Scalar LQ game on a uniform grid over [-x_max, x_max]. Actions and
// disturbances are fine uniform grids; successors are split between the two
// neighbouring grid points (clamped at the ends). Cost q x^2 + r u^2,
// intensity w^2, so that eta = gamma_att^2 reproduces the quadratic game.
struct ScalarLqGrid {
  double a = 0.8, b = 1.0, e = 0.5, q = 1.0, r = 1.0;
  double x_max = 2.0;
  int n_states = 33;
  double u_max = 2.0;
  int n_actions = 161;
  double w_max = 1.0;
  int n_disturbances = 81;
};
env::TabularGame discretize_scalar_lq(const ScalarLqGrid& grid);
std::vector<double> grid_points(double lo, double hi, int n);

// Row-stochastic strategy tables (n_states x choices).
struct MarkovChainResult {
  double mean_payoff = 0.0;  // (1/T) sum (C - eta ||d||)
  double mean_cost = 0.0;
  double mean_intensity = 0.0;
};
MarkovChainResult simulate_average_payoff(const env::TabularGame& game,
                                          const Eigen::MatrixXd& policy,
                                          const Eigen::MatrixXd& disturber, double eta,
                                          int start_state, std::int64_t steps,
                                          std::uint64_t seed);

void write_csv(const RiccatiSolution& sol, std::ostream& os);
void write_csv(const GameValue& gv, std::ostream& os);

}  // namespace hinf::oracle

#endif  // HINF_ORACLE_H_
