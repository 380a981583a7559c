#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace evi {

// Deterministic random stream. All distribution transforms are implemented
// here (not via std:: distributions) so that identical seeds produce
// identical draws across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on [0, 1]; never returns exactly 0 (safe under log()).
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. One draw consumes two words.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [lo, hi], inclusive. Modulo bias is irrelevant at
  // the range sizes used here.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive well-separated child seeds.
constexpr std::uint64_t mix_u64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a root seed and a path of stream labels.
// The same (root, path) always yields the same child; distinct paths yield
// statistically independent streams. Used to give every (agent, iteration)
// pair its own stream so evaluation order and threading cannot change runs.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_u64(root ^ 0x6C62272E07BB0142ULL);
  for (std::uint64_t part : path) {
    s = mix_u64(s ^ mix_u64(part));
  }
  return s;
}

// Stream labels for derive_seed paths.
namespace stream {
inline constexpr std::uint64_t kData = 0x01;     // tuple sampling
inline constexpr std::uint64_t kGate = 0x02;     // randomized trigger decisions
inline constexpr std::uint64_t kInit = 0x03;     // initial value function
inline constexpr std::uint64_t kTrial = 0x04;    // per-trial roots
inline constexpr std::uint64_t kRound = 0x05;    // outer-loop rounds
inline constexpr std::uint64_t kProbe = 0x06;    // analysis probes
}  // namespace stream

}  // namespace evi
