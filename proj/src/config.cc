#include "hinf/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace hinf {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError("not a number: '" + s + "'");
  return v;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename E>
E parse_enum(const std::string& s, const std::map<std::string, E>& names) {
  const auto it = names.find(s);
  if (it == names.end()) {
    std::string allowed;
    for (const auto& [k, _] : names) allowed += (allowed.empty() ? "" : "|") + k;
    throw ConfigError("'" + s + "' is not one of " + allowed);
  }
  return it->second;
}

template <typename E>
std::string enum_name(E v, const std::map<std::string, E>& names) {
  for (const auto& [k, e] : names) {
    if (e == v) return k;
  }
  return "?";
}

const std::map<std::string, EnvKind> kEnvNames{
    {"point_mass", EnvKind::kPointMass}, {"lq", EnvKind::kLq}, {"tabular", EnvKind::kTabular}};
const std::map<std::string, DisturberKind> kDisturberNames{{"learned", DisturberKind::kLearned},
                                                           {"curriculum", DisturberKind::kCurriculum},
                                                           {"none", DisturberKind::kNone}};
const std::map<std::string, rollout::BaselineMode> kBaselineNames{
    {"raw", rollout::BaselineMode::kRaw}, {"onestep", rollout::BaselineMode::kOneStep}};
const std::map<std::string, nn::Activation> kActivationNames{{"tanh", nn::Activation::kTanh},
                                                             {"elu", nn::Activation::kElu}};
const std::map<std::string, eval::PulseAxis> kAxisNames{
    {"random", eval::PulseAxis::kRandom}, {"x", eval::PulseAxis::kX}, {"y", eval::PulseAxis::kY}};

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Entry real(std::string key, Access acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& v) {
            const double x = parse_number<double>(v);
            if (!std::isfinite(x)) throw ConfigError("value must be finite");
            acc(c) = x;
          },
          [acc](const RunConfig& c) { return fmt(acc(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Entry integer(std::string key, Access acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& v) {
            acc(c) = parse_number<std::remove_reference_t<decltype(acc(c))>>(v);
          },
          [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Entry boolean(std::string key, Access acc) {
  return {std::move(key), [acc](RunConfig& c, const std::string& v) { acc(c) = parse_bool(v); },
          [acc](const RunConfig& c) { return fmt(static_cast<bool>(acc(const_cast<RunConfig&>(c)))); }};
}

template <typename E, typename Access>
Entry enumeration(std::string key, const std::map<std::string, E>& names, Access acc) {
  return {std::move(key),
          [acc, &names](RunConfig& c, const std::string& v) { acc(c) = parse_enum(v, names); },
          [acc, &names](const RunConfig& c) {
            return enum_name(acc(const_cast<RunConfig&>(c)), names);
          }};
}

template <typename Access>
Entry vec3(std::string key, Access acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& v) {
            const auto parts = split(v, ',');
            if (parts.size() != 3) throw ConfigError("expected three comma-separated numbers");
            for (int i = 0; i < 3; ++i) acc(c)[i] = parse_number<double>(parts[i]);
          },
          [acc](const RunConfig& c) {
            const auto& x = acc(const_cast<RunConfig&>(c));
            return fmt(x[0]) + "," + fmt(x[1]) + "," + fmt(x[2]);
          }};
}

template <typename T, typename Access>
Entry int_list(std::string key, Access acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& v) {
            std::vector<T> out;
            for (const auto& p : split(v, ',')) out.push_back(parse_number<T>(p));
            if (out.empty()) throw ConfigError("empty list");
            acc(c) = std::move(out);
          },
          [acc](const RunConfig& c) {
            std::string s;
            for (T x : acc(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + std::to_string(x);
            return s;
          }};
}

template <typename Access>
Entry string_list(std::string key, Access acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& v) {
            auto parts = split(v, ',');
            if (parts.empty()) throw ConfigError("empty list");
            acc(c) = std::move(parts);
          },
          [acc](const RunConfig& c) {
            std::string s;
            for (const auto& x : acc(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + x;
            return s;
          }};
}

template <typename Access>
Entry text(std::string key, Access acc) {
  return {std::move(key), [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
          [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); }};
}

#define F(expr) [](RunConfig& c) -> auto& { return expr; }

void add_regime(std::vector<Entry>& e, const std::string& prefix,
                eval::DisturbanceRegime& (*acc)(RunConfig&)) {
  e.push_back(real(prefix + ".force", [acc](RunConfig& c) -> auto& { return acc(c).pulse_force; }));
  e.push_back(real(prefix + ".period", [acc](RunConfig& c) -> auto& { return acc(c).pulse_period; }));
  e.push_back(
      real(prefix + ".duration", [acc](RunConfig& c) -> auto& { return acc(c).pulse_duration; }));
  e.push_back(real(prefix + ".offset", [acc](RunConfig& c) -> auto& { return acc(c).pulse_offset; }));
  e.push_back(enumeration(prefix + ".axis", kAxisNames,
                          [acc](RunConfig& c) -> auto& { return acc(c).pulse_axis; }));
  e.push_back(boolean(prefix + ".resample_direction",
                      [acc](RunConfig& c) -> auto& { return acc(c).resample_direction; }));
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(enumeration("env.kind", kEnvNames, F(c.env)));
    e.push_back(real("pm.mass", F(c.point_mass.mass)));
    e.push_back(real("pm.dt", F(c.point_mass.dt)));
    e.push_back(real("pm.actuator_force_limit", F(c.point_mass.actuator_force_limit)));
    e.push_back(real("pm.yaw_inertia", F(c.point_mass.yaw_inertia)));
    e.push_back(real("pm.yaw_torque_limit", F(c.point_mass.yaw_torque_limit)));
    e.push_back(real("pm.yaw_damping", F(c.point_mass.yaw_damping)));
    e.push_back(real("pm.friction", F(c.point_mass.friction)));
    e.push_back(real("pm.disturbance_limit", F(c.point_mass.disturbance_limit)));
    e.push_back(real("pm.fall_speed_error", F(c.point_mass.fall_speed_error)));
    e.push_back(real("pm.fall_heading_error", F(c.point_mass.fall_heading_error)));
    e.push_back(real("pm.fall_hold_time", F(c.point_mass.fall_hold_time)));
    e.push_back(integer("pm.episode_steps", F(c.point_mass.episode_steps)));
    e.push_back(boolean("pm.terminate_on_fall", F(c.point_mass.terminate_on_fall)));
    e.push_back(vec3("pm.command_min", F(c.point_mass.command_min)));
    e.push_back(vec3("pm.command_max", F(c.point_mass.command_max)));
    e.push_back(real("pm.sigma_track", F(c.point_mass.sigma_track)));

    e.push_back(real("lq.a", F(c.lq.a)));
    e.push_back(real("lq.b", F(c.lq.b)));
    e.push_back(real("lq.e", F(c.lq.e)));
    e.push_back(real("lq.q", F(c.lq.q)));
    e.push_back(real("lq.r", F(c.lq.r)));
    e.push_back(real("lq.x_init", F(c.lq.x_init)));
    e.push_back(real("lq.w_limit", F(c.lq.w_limit)));
    e.push_back(integer("lq.episode_steps", F(c.lq.episode_steps)));

    e.push_back(integer("tabular.states", F(c.tabular.states)));
    e.push_back(integer("tabular.actions", F(c.tabular.actions)));
    e.push_back(integer("tabular.disturbances", F(c.tabular.disturbances)));
    e.push_back(integer("tabular.game_seed", F(c.tabular.game_seed)));
    e.push_back(integer("tabular.episode_steps", F(c.tabular.episode_steps)));

    e.push_back(real("hinf.eta0", F(c.trainer.hinf.eta)));
    e.push_back(real("hinf.lambda0", F(c.trainer.hinf.lambda)));
    e.push_back(real("hinf.alpha", F(c.trainer.hinf.alpha)));
    e.push_back(real("hinf.lambda_max", F(c.trainer.hinf.lambda_max)));
    e.push_back(real("hinf.gamma", F(c.trainer.hinf.gamma)));
    e.push_back(real("hinf.gamma2", F(c.trainer.hinf.gamma2)));
    e.push_back(real("hinf.clip_eps", F(c.trainer.hinf.clip_eps)));
    e.push_back(real("hinf.entropy_coef", F(c.trainer.hinf.entropy_coef)));
    e.push_back(real("hinf.value_coef", F(c.trainer.hinf.value_coef)));
    e.push_back(real("hinf.disturber_entropy_coef", F(c.trainer.hinf.disturber_entropy_coef)));
    e.push_back(real("hinf.eta_guard", F(c.trainer.eta_guard)));
    e.push_back(boolean("hinf.use_hinf_loss", F(c.trainer.use_hinf_loss)));
    e.push_back(enumeration("hinf.disturber_baseline", kBaselineNames,
                            F(c.trainer.disturber_baseline)));

    e.push_back(int_list<int>("net.actor_hidden", F(c.trainer.actor_hidden)));
    e.push_back(int_list<int>("net.critic_hidden", F(c.trainer.critic_hidden)));
    e.push_back(enumeration("net.activation", kActivationNames, F(c.trainer.activation)));
    e.push_back(real("net.actor_init_log_std", F(c.trainer.actor_init_log_std)));
    e.push_back(real("net.disturber_init_log_std", F(c.trainer.disturber_init_log_std)));

    e.push_back(enumeration("train.disturber", kDisturberNames, F(c.trainer.disturber)));
    e.push_back(real("train.actor_lr", F(c.trainer.actor_lr)));
    e.push_back(real("train.critic_lr", F(c.trainer.critic_lr)));
    e.push_back(real("train.disturber_lr", F(c.trainer.disturber_lr)));
    e.push_back(integer("train.epochs", F(c.trainer.epochs)));
    e.push_back(integer("train.minibatches", F(c.trainer.minibatches)));
    e.push_back(real("train.max_grad_norm", F(c.trainer.max_grad_norm)));
    e.push_back(integer("train.num_envs", F(c.trainer.num_envs)));
    e.push_back(integer("train.horizon", F(c.trainer.horizon)));
    e.push_back(boolean("train.randomize", F(c.trainer.randomize)));
    e.push_back(boolean("train.normalize_advantages", F(c.trainer.normalize_advantages)));
    e.push_back(real("train.force_limit", F(c.trainer.force_limit)));
    e.push_back(real("train.curriculum_max_force", F(c.trainer.curriculum_max_force)));
    e.push_back(
        integer("train.curriculum_ramp_iterations", F(c.trainer.curriculum_ramp_iterations)));
    e.push_back(integer("train.iterations", F(c.iterations)));
    e.push_back(integer("train.checkpoint_every", F(c.checkpoint_every)));

    e.push_back(integer("eval.episodes", F(c.eval_episodes)));
    e.push_back(integer("eval.episode_steps", F(c.eval.episode_steps)));
    e.push_back(vec3("eval.command", F(c.eval.command)));
    e.push_back(boolean("eval.randomize", F(c.eval.randomize)));

    e.push_back(real("regime.continuous.max_force", F(c.continuous.max_force)));
    add_regime(e, "regime.pulse", [](RunConfig& c) -> auto& { return c.pulse; });
    add_regime(e, "regime.fall", [](RunConfig& c) -> auto& { return c.fall; });
    e.push_back(real("regime.adversary.clip", F(c.adversary.max_force)));

    e.push_back(integer("attack.epochs", F(c.attack.epochs)));
    e.push_back(integer("attack.num_envs", F(c.attack.num_envs)));
    e.push_back(integer("attack.horizon", F(c.attack.horizon)));
    e.push_back(real("attack.lr", F(c.attack.lr)));

    e.push_back(int_list<std::uint64_t>("ablate.seeds", F(c.ablate_seeds)));
    e.push_back(string_list("ablate.variants", F(c.ablate_variants)));
    e.push_back(real("ablate.ramp_fraction", F(c.ablate_ramp_fraction)));
    e.push_back(integer("ablate.iterations", F(c.ablate_iterations)));

    e.push_back(integer("seed", F(c.seed)));
    e.push_back(text("out_dir", F(c.out_dir)));
    return e;
  }();
  return entries;
}

#undef F

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : registry()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

void assign(RunConfig& cfg, const std::string& key, const std::string& value,
            const std::string& where) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError(where + ": unknown key '" + key + "'");
  try {
    e->set(cfg, value);
  } catch (const ConfigError& err) {
    throw ConfigError(where + ": " + key + ": " + err.what());
  }
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

void RunConfig::validate() const {
  try {
    trainer.validate();
    if (env == EnvKind::kPointMass) env::PointMass(point_mass).validate();
    make_model(*this);
    continuous.validate();
    pulse.validate();
    fall.validate();
    adversary.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  check(iterations >= 0, "train.iterations must be >= 0");
  check(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  check(eval_episodes >= 1, "eval.episodes must be >= 1");
  check(eval.episode_steps >= 1, "eval.episode_steps must be >= 1");
  check(eval.command.allFinite(), "eval.command must be finite");
  check(attack.epochs >= 0 && attack.num_envs >= 1 && attack.horizon >= 1 && attack.lr >= 0.0,
        "attack settings out of range");
  check(fall.pulse_axis != eval::PulseAxis::kRandom, "regime.fall.axis must be x or y");
  check(!ablate_seeds.empty() && !ablate_variants.empty(), "ablation lists must be non-empty");
  for (const auto& v : ablate_variants) {
    try {
      eval::find_variant(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid config: ") + e.what());
    }
  }
  check(ablate_ramp_fraction > 0.0 && ablate_ramp_fraction <= 1.0,
        "ablate.ramp_fraction must be in (0, 1]");
  check(ablate_iterations >= 0, "ablate.iterations must be >= 0");
  check(!out_dir.empty(), "out_dir must be non-empty");
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    assign(cfg, key, value, where);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  assign(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "override");
  cfg.validate();
}

std::string write_config(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : registry()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : registry()) keys.push_back(e.key);
  return keys;
}

env::EnvModel make_model(const RunConfig& cfg) {
  switch (cfg.env) {
    case EnvKind::kPointMass:
      return env::PointMass(cfg.point_mass);
    case EnvKind::kLq: {
      env::LqEnvConfig lc;
      const auto s = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
      lc.model = {s(cfg.lq.a), s(cfg.lq.b), s(cfg.lq.e), s(cfg.lq.q), s(cfg.lq.r)};
      lc.x_init = Eigen::VectorXd::Constant(1, cfg.lq.x_init);
      lc.w_limit = cfg.lq.w_limit;
      lc.episode_steps = cfg.lq.episode_steps;
      return env::LqEnv(lc);
    }
    case EnvKind::kTabular: {
      env::TabularEnvConfig tc;
      tc.episode_steps = cfg.tabular.episode_steps;
      return env::TabularEnv(env::TabularGame::random(cfg.tabular.states, cfg.tabular.actions,
                                                      cfg.tabular.disturbances,
                                                      cfg.tabular.game_seed),
                             tc);
    }
  }
  throw ConfigError("unknown environment kind");
}

}  // namespace hinf
