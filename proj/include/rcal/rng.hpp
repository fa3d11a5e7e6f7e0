#pragma once

#include <cstdint>
#include <span>

// Deterministic counter-based random number generation.
//
// Every randomized routine in this library derives an independent stream from
// (seed, stream label, index) instead of sharing one sequential generator.
// That keeps parallel loops reproducible: episode i draws from its own stream
// no matter which thread runs it, and the same (seed, index) always yields the
// same bytes on any platform (pure 64-bit integer arithmetic, no dependence on
// standard-library distribution internals).

namespace rcal {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Collapse an arbitrary list of 64-bit words into one well-mixed word.
inline std::uint64_t mix_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x51a2c1e1c3a958bdULL;
  for (std::uint64_t w : words) {
    h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    std::uint64_t s = h;
    h = splitmix64(s);
  }
  return h;
}

// Small self-contained generator seeded from a mixed key.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : state_(mix_key({seed, stream})) {}
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
      : state_(mix_key({seed, stream, index})) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], both ends inclusive.  Uses rejection sampling
  // so every value is exactly equally likely.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = ~0ULL - (~0ULL % span);
    std::uint64_t draw = next_u64();
    while (draw >= limit) draw = next_u64();
    return lo + static_cast<std::int64_t>(draw % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Index sampled proportionally to the given non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double cut = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (cut < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  std::uint64_t state_;
};

}  // namespace rcal
