#ifndef HINF_EVALKIT_H_
#define HINF_EVALKIT_H_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "hinf/approx.h"
#include "hinf/envkit.h"
#include "hinf/trainer.h"

namespace hinf::eval {

enum class RegimeKind { kNone, kContinuousUniform, kPulse, kTrainedAdversary };
enum class PulseAxis { kRandom, kX, kY };

struct DisturbanceRegime {
  RegimeKind kind = RegimeKind::kNone;
  double max_force = 100.0;    // continuous intensity range and adversary clip
  double pulse_force = 150.0;
  double pulse_period = 4.0;   // s
  double pulse_duration = 0.5; // s
  double pulse_offset = -1.0;  // s; negative means half a period
  PulseAxis pulse_axis = PulseAxis::kRandom;
  bool resample_direction = true;  // per pulse; false keeps one direction per episode

  void validate() const;
  std::string descriptor() const;
};

DisturbanceRegime no_disturbance();
DisturbanceRegime continuous_uniform(double max_force = 100.0);
DisturbanceRegime pulses(double force = 150.0, double period = 4.0, double duration = 0.5,
                         PulseAxis axis = PulseAxis::kRandom);
DisturbanceRegime trained_adversary(double clip = 100.0);

RegimeKind parse_regime_kind(const std::string& name);
std::string regime_kind_name(RegimeKind k);

// Pulse windows [start, end) in control steps within one episode.
struct PulseWindow {
  int start = 0;
  int end = 0;
};
std::vector<PulseWindow> pulse_windows(const DisturbanceRegime& r, int episode_steps, double dt);

// Force of a scheduled (non-adversary) regime at a step; a pure function of
// (regime, seed, episode, step).
Eigen::Vector2d scheduled_force(const DisturbanceRegime& r, std::uint64_t seed, int episode,
                                int step, double dt);

struct EvalOptions {
  int episode_steps = 1000;  // 20 s at the default control period
  Eigen::Vector3d command{1.0, 0.0, 0.0};
  bool randomize = false;
  std::string tag = "policy";
};

struct CurveRow {
  int step = 0;
  double time_s = 0.0;
  double v_x = 0.0;
  double v_cmd_x = 0.0;
  double tracking_error = 0.0;
  double force_x = 0.0;
  double force_y = 0.0;
};

struct EvalReport {
  std::string tag;
  std::string regime;
  int episodes = 0;
  int episode_steps = 0;
  std::vector<CurveRow> curve;              // episode 0
  std::vector<double> mean_tracking_curve;  // per step, averaged over episodes
  double mean_tracking_error = 0.0;
  int falls = 0;
  int pulses = 0;
  std::vector<int> episode_falls;
  double hinf_ratio = 0.0;  // NaN when no force was applied
  double mean_cost = 0.0;
  double mean_force_norm = 0.0;
  double max_force_norm = 0.0;
};

// Rolls out the actor mean on the point mass under the regime. The adversary
// is required for kTrainedAdversary and acts with its mean, clipped to
// regime.max_force. Deterministic given seed.
EvalReport evaluate(const env::EnvModel& model, const nn::GaussianPolicy& actor,
                    const nn::GaussianPolicy* adversary, const DisturbanceRegime& regime,
                    int episodes, std::uint64_t seed, const EvalOptions& opts = {});

void write_report(const std::vector<EvalReport>& reports, std::ostream& os);
void write_curve(const EvalReport& report, std::ostream& os);

struct AttackOptions {
  int epochs = 500;
  int num_envs = 64;
  int horizon = 100;
  double force_limit = 100.0;
  double lr = 3e-4;
};

struct AttackResult {
  nn::GaussianPolicy disturber;
  std::vector<double> mean_cost;  // per epoch, at collection
  std::vector<double> mean_force_norm;
  std::vector<double> max_force_norm;
};

// Trains a fresh disturber against the frozen actor mean; eta is held at the
// given value and the critic starts from the trained one.
AttackResult train_attack_disturber(const env::EnvModel& model, const rollout::Networks& trained,
                                    double eta, const TrainerConfig& base,
                                    const AttackOptions& opts, std::uint64_t seed);

// Mean cost per step inflicted on the actor mean by a disturber (or, when
// disturber is null, by uniform-random forces in [0, force_limit]) over
// training-distribution episodes.
struct InflictedCost {
  double mean_cost = 0.0;
  double mean_force_norm = 0.0;
  double max_force_norm = 0.0;
};
InflictedCost inflicted_cost(const env::EnvModel& model, const nn::GaussianPolicy& actor,
                             const nn::GaussianPolicy* disturber, double force_limit,
                             int episodes, int episode_steps, std::uint64_t seed);

struct Variant {
  std::string tag;
  bool use_hinf_loss = true;
  DisturberKind disturber = DisturberKind::kLearned;
};
// ours, no_hinf, curriculum, baseline
std::vector<Variant> ablation_variants();
Variant find_variant(const std::string& tag);

// Applies a variant to a base config; the curriculum reaches its maximum at
// ramp_fraction of the iteration budget.
TrainerConfig variant_config(const TrainerConfig& base, const Variant& v, int iterations,
                             double ramp_fraction);

struct AblationConfig {
  TrainerConfig base;
  env::EnvModel model = env::PointMass{};
  int iterations = 1000;
  double ramp_fraction = 1.0;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> variants{"ours", "no_hinf", "curriculum", "baseline"};
  std::vector<DisturbanceRegime> regimes{continuous_uniform(), pulses(), trained_adversary()};
  int eval_episodes = 32;
  EvalOptions eval;
  AttackOptions attack;
};

struct AblationRow {
  std::string variant;
  std::string regime;
  std::uint64_t seed = 0;
  double mean_tracking_error = 0.0;
  int falls = 0;
  int pulses = 0;
  double hinf_ratio = 0.0;
  double mean_cost = 0.0;
  double final_eta = 0.0;
  double final_lambda = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<EvalReport> reports;  // parallel to rows
};

// Trains every (variant, seed) pair and evaluates it under every regime.
// on_trained, when set, is called after each training run.
AblationResult ablation_suite(
    const AblationConfig& cfg,
    const std::function<void(const std::string&, std::uint64_t, const Trainer&)>& on_trained = {});

void write_table(const std::vector<AblationRow>& rows, std::ostream& os);

}  // namespace hinf::eval

#endif  // HINF_EVALKIT_H_
