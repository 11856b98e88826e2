#include "hinf/checkpoint.h"

#include <gtest/gtest.h>

#include <filesystem>

#include "hinf/config.h"

namespace hinf {
namespace {

TrainerConfig tiny() {
  TrainerConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.num_envs = 2;
  c.horizon = 12;
  c.epochs = 2;
  c.minibatches = 2;
  return c;
}

std::vector<std::uint8_t> trained_bytes() {
  Trainer t(env::PointMass{}, tiny(), 5);
  t.train_iteration();
  return serialize(capture(t, "seed = 5\n"));
}

TEST(Checkpoint, RoundTripIsByteExact) {
  const std::vector<std::uint8_t> bytes = trained_bytes();
  const CheckpointBundle b = deserialize(bytes);
  EXPECT_EQ(serialize(b), bytes);
  EXPECT_EQ(b.config_text, "seed = 5\n");
  EXPECT_EQ(b.iteration, 1);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "HINFCKPT");
}

TEST(Checkpoint, TruncationAndCorruptionDetected) {
  const std::vector<std::uint8_t> bytes = trained_bytes();
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize({bytes.begin(), bytes.begin() + cut}), CheckpointCorruptError) << cut;
  }
  std::vector<std::uint8_t> flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize(flipped), CheckpointCorruptError);
  std::vector<std::uint8_t> magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize(magic), CheckpointCorruptError);
}

TEST(Checkpoint, VersionMismatch) {
  std::vector<std::uint8_t> bytes = trained_bytes();
  bytes[8] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize(bytes), CheckpointVersionError);
}

TEST(Checkpoint, FileErrors) {
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), CheckpointIoError);
  EXPECT_THROW(save_checkpoint(deserialize(trained_bytes()), "/nonexistent/dir/x.ckpt"),
               CheckpointIoError);
}

TEST(Checkpoint, ResumeMatchesUninterrupted) {
  Trainer straight(env::PointMass{}, tiny(), 8);
  Trainer first(env::PointMass{}, tiny(), 8);
  for (int k = 0; k < 2; ++k) {
    straight.train_iteration();
    first.train_iteration();
  }
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "hinf_checkpoint_test.ckpt";
  save_checkpoint(capture(first, ""), path.string());
  Trainer resumed(env::PointMass{}, tiny(), 8);
  restore(resumed, load_checkpoint(path.string()));
  std::filesystem::remove(path);
  for (int k = 0; k < 2; ++k) {
    const LossReport a = straight.train_iteration();
    const LossReport b = resumed.train_iteration();
    EXPECT_EQ(a.actor_loss, b.actor_loss);
    EXPECT_EQ(a.eta_after, b.eta_after);
  }
  EXPECT_EQ(straight.networks().actor.flat_params(), resumed.networks().actor.flat_params());
  EXPECT_EQ(straight.networks().critic.net().params(), resumed.networks().critic.net().params());
  EXPECT_EQ(straight.envs().steps, resumed.envs().steps);
}

TEST(Checkpoint, ArchitectureMismatchRejected) {
  const CheckpointBundle b = deserialize(trained_bytes());
  TrainerConfig wide = tiny();
  wide.actor_hidden = {16};
  Trainer t(env::PointMass{}, wide, 5);
  EXPECT_THROW(restore(t, b), CheckpointError);
}

}  // namespace
}  // namespace hinf
