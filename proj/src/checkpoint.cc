#include "hinf/checkpoint.h"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hinf {
namespace {

constexpr char kMagic[8] = {'H', 'I', 'N', 'F', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t n) : p_(data), end_(data + n) {}
  std::uint8_t u8() {
    need(1);
    return *p_++;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(*p_++) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(*p_++) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  Eigen::VectorXd vec() {
    const std::uint64_t n = u64();
    need(n * 8);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = f64();
    return v;
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::uint64_t n) const {
    if (n > static_cast<std::uint64_t>(end_ - p_)) {
      throw CheckpointCorruptError("checkpoint payload truncated");
    }
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

void put_mlp(Writer& w, const nn::Mlp& m) {
  w.u32(static_cast<std::uint32_t>(m.widths().size()));
  for (int x : m.widths()) w.u32(static_cast<std::uint32_t>(x));
  w.u8(static_cast<std::uint8_t>(m.activation()));
  w.vec(m.params());
}

nn::Mlp get_mlp(Reader& r) {
  const std::uint32_t n = r.u32();
  if (n < 2 || n > 64) throw CheckpointCorruptError("bad layer count in checkpoint");
  std::vector<int> widths(n);
  for (auto& x : widths) {
    x = static_cast<int>(r.u32());
    if (x < 1 || x > (1 << 20)) throw CheckpointCorruptError("bad layer width in checkpoint");
  }
  const std::uint8_t act = r.u8();
  if (act > 1) throw CheckpointCorruptError("bad activation tag in checkpoint");
  nn::Mlp m(widths, static_cast<nn::Activation>(act));
  Eigen::VectorXd p = r.vec();
  if (p.size() != m.num_params()) throw CheckpointCorruptError("parameter count mismatch");
  m.params() = std::move(p);
  return m;
}

void put_policy(Writer& w, const nn::GaussianPolicy& p) {
  put_mlp(w, p.net());
  w.vec(p.log_std());
}

nn::GaussianPolicy get_policy(Reader& r) {
  nn::Mlp m = get_mlp(r);
  Eigen::VectorXd ls = r.vec();
  if (ls.size() != m.output_dim()) throw CheckpointCorruptError("log_std size mismatch");
  nn::GaussianPolicy p;
  p.net() = std::move(m);
  p.log_std() = std::move(ls);
  return p;
}

void put_state(Writer& w, const env::EnvState& s) {
  for (int i = 0; i < 2; ++i) w.f64(s.position[i]);
  for (int i = 0; i < 2; ++i) w.f64(s.velocity[i]);
  w.f64(s.heading);
  w.f64(s.angular_velocity);
  for (int i = 0; i < 3; ++i) w.f64(s.command[i]);
  w.f64(s.heading_target);
  w.i64(s.speed_fault_steps);
  w.i64(s.heading_fault_steps);
  w.vec(s.x);
  w.i64(s.cell);
  w.vec(s.last_action);
  w.vec(s.prev_action);
  w.i64(s.time_index);
  w.u8(s.terminated);
  w.u8(s.randomized);
  w.f64(s.draw.friction);
  w.f64(s.draw.restitution);
  w.f64(s.draw.kp_scale);
  w.f64(s.draw.kd_scale);
  w.f64(s.draw.init_state_scale);
  w.u64(s.stream_seed);
}

env::EnvState get_state(Reader& r) {
  env::EnvState s;
  for (int i = 0; i < 2; ++i) s.position[i] = r.f64();
  for (int i = 0; i < 2; ++i) s.velocity[i] = r.f64();
  s.heading = r.f64();
  s.angular_velocity = r.f64();
  for (int i = 0; i < 3; ++i) s.command[i] = r.f64();
  s.heading_target = r.f64();
  s.speed_fault_steps = static_cast<int>(r.i64());
  s.heading_fault_steps = static_cast<int>(r.i64());
  s.x = r.vec();
  s.cell = static_cast<int>(r.i64());
  s.last_action = r.vec();
  s.prev_action = r.vec();
  s.time_index = r.i64();
  s.terminated = r.u8() != 0;
  s.randomized = r.u8() != 0;
  s.draw.friction = r.f64();
  s.draw.restitution = r.f64();
  s.draw.kp_scale = r.f64();
  s.draw.kd_scale = r.f64();
  s.draw.init_state_scale = r.f64();
  s.stream_seed = r.u64();
  return s;
}

void put_hinf(Writer& w, const HinfState& h) {
  for (double v : {h.eta, h.lambda, h.alpha, h.lambda_max, h.r_max_task, h.gamma, h.gamma2,
                   h.clip_eps, h.entropy_coef, h.value_coef, h.disturber_entropy_coef}) {
    w.f64(v);
  }
}

HinfState get_hinf(Reader& r) {
  HinfState h;
  for (double* v : {&h.eta, &h.lambda, &h.alpha, &h.lambda_max, &h.r_max_task, &h.gamma, &h.gamma2,
                    &h.clip_eps, &h.entropy_coef, &h.value_coef, &h.disturber_entropy_coef}) {
    *v = r.f64();
  }
  return h;
}

void put_adam(Writer& w, const AdamState& a) {
  w.f64(a.lr);
  w.vec(a.m);
  w.vec(a.v);
  w.i64(a.t);
}

AdamState get_adam(Reader& r) {
  AdamState a;
  a.lr = r.f64();
  a.m = r.vec();
  a.v = r.vec();
  a.t = r.i64();
  if (a.m.size() != a.v.size()) throw CheckpointCorruptError("optimizer moment size mismatch");
  return a;
}

AdamState adam_state(const nn::Adam& a) { return {a.lr(), a.m(), a.v(), a.t()}; }

nn::Adam make_adam(const AdamState& s) {
  nn::Adam a(s.m.size(), s.lr);
  a.restore(s.m, s.v, s.t);
  return a;
}

bool same_arch(const nn::Mlp& a, const nn::Mlp& b) {
  return a.widths() == b.widths() && a.activation() == b.activation();
}

}  // namespace

std::vector<std::uint8_t> serialize(const CheckpointBundle& b) {
  Writer p;
  p.str(b.config_text);
  put_policy(p, b.nets.actor);
  put_policy(p, b.nets.disturber);
  put_mlp(p, b.nets.critic.net());
  put_hinf(p, b.state);
  p.i64(b.iteration);
  p.u64(b.seed);
  p.u64(b.env_states.size());
  for (const auto& s : b.env_states) put_state(p, s);
  p.u64(b.env_episodes.size());
  for (std::uint64_t e : b.env_episodes) p.u64(e);
  p.u64(b.env_seed);
  p.u8(b.env_randomize);
  p.i64(b.env_steps);
  put_adam(p, b.actor_opt);
  put_adam(p, b.critic_opt);
  put_adam(p, b.disturber_opt);

  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u64(p.bytes().size());
  auto& out = w.bytes();
  out.insert(out.end(), p.bytes().begin(), p.bytes().end());
  w.u32(crc32_of(out.data(), out.size()));
  return std::move(out);
}

CheckpointBundle deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize + 4) throw CheckpointCorruptError("checkpoint file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointCorruptError("not a checkpoint file (bad magic)");
  }
  Reader head(bytes.data() + 8, kHeaderSize - 8);
  const std::uint32_t version = head.u32();
  const std::uint64_t length = head.u64();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 ", this build reads version " +
                                 std::to_string(kCheckpointVersion));
  }
  if (length != bytes.size() - kHeaderSize - 4) {
    throw CheckpointCorruptError("checkpoint length mismatch (truncated or padded file)");
  }
  Reader tail(bytes.data() + bytes.size() - 4, 4);
  if (tail.u32() != crc32_of(bytes.data(), bytes.size() - 4)) {
    throw CheckpointCorruptError("checkpoint checksum mismatch");
  }

  Reader r(bytes.data() + kHeaderSize, length);
  CheckpointBundle b;
  b.config_text = r.str();
  b.nets.actor = get_policy(r);
  b.nets.disturber = get_policy(r);
  nn::Mlp critic = get_mlp(r);
  if (critic.output_dim() != 2) throw CheckpointCorruptError("critic must have two outputs");
  b.nets.critic = nn::DoubleHeadCritic(critic.input_dim(),
                                       std::vector<int>(critic.widths().begin() + 1,
                                                        critic.widths().end() - 1),
                                       critic.activation());
  b.nets.critic.net() = std::move(critic);
  b.state = get_hinf(r);
  b.iteration = r.i64();
  b.seed = r.u64();
  const std::uint64_t n_states = r.u64();
  if (n_states > length) throw CheckpointCorruptError("bad environment count");
  for (std::uint64_t i = 0; i < n_states; ++i) b.env_states.push_back(get_state(r));
  const std::uint64_t n_eps = r.u64();
  if (n_eps > length) throw CheckpointCorruptError("bad episode count");
  for (std::uint64_t i = 0; i < n_eps; ++i) b.env_episodes.push_back(r.u64());
  b.env_seed = r.u64();
  b.env_randomize = r.u8() != 0;
  b.env_steps = r.i64();
  b.actor_opt = get_adam(r);
  b.critic_opt = get_adam(r);
  b.disturber_opt = get_adam(r);
  if (!r.done()) throw CheckpointCorruptError("trailing bytes in checkpoint payload");
  return b;
}

void save_checkpoint(const CheckpointBundle& b, const std::string& path) {
  const auto bytes = serialize(b);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointIoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointIoError("failed writing checkpoint '" + path + "'");
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointIoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw CheckpointIoError("failed reading checkpoint '" + path + "'");
  return deserialize(bytes);
}

CheckpointBundle capture(const Trainer& tr, const std::string& config_text) {
  CheckpointBundle b;
  b.config_text = config_text;
  b.nets = tr.networks();
  b.state = tr.state();
  b.iteration = tr.iteration();
  b.seed = tr.seed();
  const auto& envs = tr.envs();
  b.env_states = envs.states;
  b.env_episodes = envs.episodes;
  b.env_seed = envs.seed;
  b.env_randomize = envs.randomize;
  b.env_steps = envs.steps;
  b.actor_opt = adam_state(tr.optimizers().actor);
  b.critic_opt = adam_state(tr.optimizers().critic);
  b.disturber_opt = adam_state(tr.optimizers().disturber);
  return b;
}

void restore(Trainer& tr, const CheckpointBundle& b) {
  const auto& nets = tr.networks();
  if (!same_arch(nets.actor.net(), b.nets.actor.net()) ||
      !same_arch(nets.disturber.net(), b.nets.disturber.net()) ||
      !same_arch(nets.critic.net(), b.nets.critic.net())) {
    throw CheckpointError("checkpoint architecture does not match the configured networks");
  }
  if (b.env_states.size() != tr.envs().states.size() ||
      b.env_episodes.size() != b.env_states.size()) {
    throw CheckpointError("checkpoint environment count does not match the configuration");
  }
  if (b.actor_opt.m.size() != nets.actor.num_params() ||
      b.critic_opt.m.size() != nets.critic.num_params() ||
      b.disturber_opt.m.size() != nets.disturber.num_params()) {
    throw CheckpointError("checkpoint optimizer state does not match the networks");
  }
  tr.mutable_networks() = b.nets;
  tr.mutable_state() = b.state;
  tr.set_iteration(b.iteration);
  auto& envs = tr.envs();
  envs.states = b.env_states;
  envs.episodes = b.env_episodes;
  envs.seed = b.env_seed;
  envs.randomize = b.env_randomize;
  envs.steps = b.env_steps;
  tr.optimizers().actor = make_adam(b.actor_opt);
  tr.optimizers().critic = make_adam(b.critic_opt);
  tr.optimizers().disturber = make_adam(b.disturber_opt);
}

}  // namespace hinf
