#ifndef HINF_CHECKPOINT_H_
#define HINF_CHECKPOINT_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hinf/approx.h"
#include "hinf/envkit.h"
#include "hinf/rollout.h"
#include "hinf/trainer.h"

namespace hinf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointIoError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct AdamState {
  double lr = 0.0;
  Eigen::VectorXd m, v;
  std::int64_t t = 0;
};

struct CheckpointBundle {
  std::string config_text;  // resolved run config
  rollout::Networks nets;
  HinfState state;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;

  // environment batch, so a resumed run continues the same episodes
  std::vector<env::EnvState> env_states;
  std::vector<std::uint64_t> env_episodes;
  std::uint64_t env_seed = 0;
  bool env_randomize = false;
  std::int64_t env_steps = 0;

  AdamState actor_opt, critic_opt, disturber_opt;
};

// Layout: "HINFCKPT", u32 version, u64 payload length, payload, u32 CRC-32
// of everything before it. Numbers are little-endian; reals are IEEE-754
// binary64.
std::vector<std::uint8_t> serialize(const CheckpointBundle& b);
CheckpointBundle deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const CheckpointBundle& b, const std::string& path);
CheckpointBundle load_checkpoint(const std::string& path);

CheckpointBundle capture(const Trainer& tr, const std::string& config_text);
// Overwrites networks, state, optimizers, iteration and environments.
// Throws CheckpointError when the architectures differ.
void restore(Trainer& tr, const CheckpointBundle& b);

}  // namespace hinf

#endif  // HINF_CHECKPOINT_H_
