#ifndef HINF_RNG_H_
#define HINF_RNG_H_

#include <cstdint>

namespace hinf {

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fold any number of words into one key.
constexpr std::uint64_t hash_key(std::uint64_t a) { return mix64(a); }
template <typename... Rest>
constexpr std::uint64_t hash_key(std::uint64_t a, Rest... rest) {
  return mix64(a ^ (hash_key(static_cast<std::uint64_t>(rest)...) +
                    0x632be59bd9b4e019ULL));
}

// Stream purposes, so actor noise and disturber noise at the same
// (seed, env, t) never share bits.
enum class Stream : std::uint64_t {
  kReset = 1,
  kActor = 2,
  kDisturber = 3,
  kRegime = 4,
  kTransition = 5,
  kShuffle = 6,
  kInit = 7,
};

// Counter-based generator: output i of a stream is mix64(key + i), so any
// value can be reproduced from (key, i) without replaying the stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static CounterRng for_step(std::uint64_t seed, std::uint64_t env,
                             std::uint64_t time_index, Stream purpose) {
    return CounterRng(hash_key(seed, env, time_index,
                               static_cast<std::uint64_t>(purpose)));
  }

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // uniform in [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller without caching
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hinf

#endif  // HINF_RNG_H_
