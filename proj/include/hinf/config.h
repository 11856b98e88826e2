#ifndef HINF_CONFIG_H_
#define HINF_CONFIG_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hinf/envkit.h"
#include "hinf/evalkit.h"
#include "hinf/trainer.h"

namespace hinf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { kPointMass, kLq, kTabular };

// Scalar x' = a x + b u + e w with cost q x^2 + r u^2.
struct ScalarLqSpec {
  double a = 0.9, b = 1.0, e = 1.0, q = 1.0, r = 1.0;
  double x_init = 1.0;
  double w_limit = 1.0;
  int episode_steps = 200;
};

struct TabularSpec {
  int states = 8, actions = 3, disturbances = 3;
  std::uint64_t game_seed = 1;
  int episode_steps = 100;
};

struct RunConfig {
  EnvKind env = EnvKind::kPointMass;
  env::PointMassConfig point_mass;
  ScalarLqSpec lq;
  TabularSpec tabular;

  TrainerConfig trainer;
  int iterations = 100;
  int checkpoint_every = 50;  // 0 writes only the final checkpoint

  int eval_episodes = 32;
  eval::EvalOptions eval;
  eval::DisturbanceRegime continuous = eval::continuous_uniform();
  eval::DisturbanceRegime pulse = eval::pulses();
  eval::DisturbanceRegime fall = eval::pulses(100.0, 5.0, 0.2, eval::PulseAxis::kX);
  eval::DisturbanceRegime adversary = eval::trained_adversary();
  eval::AttackOptions attack;

  std::vector<std::uint64_t> ablate_seeds{1, 2, 3};
  std::vector<std::string> ablate_variants{"ours", "no_hinf", "curriculum", "baseline"};
  double ablate_ramp_fraction = 1.0;
  int ablate_iterations = 1000;

  std::uint64_t seed = 1;
  std::string out_dir = "runs";

  // throws ConfigError
  void validate() const;
};

// "key = value" lines, '#' comments. Unknown or repeated keys and malformed
// values throw ConfigError naming the source and line. The result is
// validated.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

// "key=value"; same checks as a config line.
void apply_override(RunConfig& cfg, std::string_view assignment);

// Every key with its resolved value; parses back to an identical config.
std::string write_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

env::EnvModel make_model(const RunConfig& cfg);

}  // namespace hinf

#endif  // HINF_CONFIG_H_
