#include "hinf/config.h"

#include <gtest/gtest.h>

#include <string>

namespace hinf {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsParse) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.env, EnvKind::kPointMass);
  EXPECT_EQ(c.trainer.hinf.eta, 1.0);
  EXPECT_EQ(c.trainer.hinf.gamma2, 0.8);
}

TEST(Config, ValuesAndComments) {
  const RunConfig c = parse_config(
      "# header\n"
      "seed = 42\n"
      "train.num_envs = 8   # trailing\n"
      "hinf.gamma2 = 0.5\n"
      "train.disturber = curriculum\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.trainer.num_envs, 8);
  EXPECT_EQ(c.trainer.hinf.gamma2, 0.5);
  EXPECT_EQ(c.trainer.disturber, DisturberKind::kCurriculum);
}

TEST(Config, UnknownKeyNamesSourceAndLine) {
  const std::string e = error_of("seed = 1\n\ntrain.wobble = 3\n");
  EXPECT_NE(e.find("run.cfg:3"), std::string::npos) << e;
  EXPECT_NE(e.find("train.wobble"), std::string::npos) << e;
}

TEST(Config, DuplicateKeyRejected) {
  const std::string e = error_of("seed = 1\nseed = 2\n");
  EXPECT_NE(e.find("run.cfg:2"), std::string::npos) << e;
  EXPECT_NE(e.find("duplicate"), std::string::npos) << e;
}

TEST(Config, MalformedValuesRejected) {
  EXPECT_NE(error_of("seed = many\n").find("run.cfg:1"), std::string::npos);
  EXPECT_FALSE(error_of("train.randomize = perhaps\n").empty());
  EXPECT_FALSE(error_of("just words\n").empty());
  EXPECT_FALSE(error_of("hinf.gamma2 = 1.0\n").empty());
  EXPECT_FALSE(error_of("train.epochs = 0\n").empty());
}

TEST(Config, EchoRoundTrips) {
  RunConfig c = parse_config("seed = 7\nhinf.eta0 = 0.3\ntrain.horizon = 17\n");
  apply_override(c, "train.actor_lr=0.001");
  const std::string text = write_config(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(write_config(back), text);
  EXPECT_EQ(back.trainer.actor_lr, 0.001);
  EXPECT_EQ(back.trainer.horizon, 17);
  for (const std::string& k : config_keys()) {
    EXPECT_NE(text.find(k + " ="), std::string::npos) << k;
  }
}

TEST(Config, OverrideChecksKeys) {
  RunConfig c;
  EXPECT_THROW(apply_override(c, "nope=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "seed"), ConfigError);
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

}  // namespace
}  // namespace hinf
