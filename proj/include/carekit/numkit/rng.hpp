#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace carekit {

/// Serializable position of a CounterRng.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

/// Counter-based 64-bit generator: draw i is a pure function of (seed, i).
///
/// Every stochastic operation in the library (initialization, dropout masks,
/// batch selection, sampling) draws from one of these, so a run is replayed
/// exactly by restoring its RngState.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0)
      : state_{seed, counter}, key_(mix(seed ^ 0x6A09E667F3BCC909ULL)) {}
  explicit CounterRng(RngState state) : CounterRng(state.seed, state.counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next_u64(); }

  result_type next_u64() {
    const std::uint64_t x = key_ + (state_.counter + 1) * 0x9E3779B97F4A7C15ULL;
    ++state_.counter;
    return mix(x);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (two draws per sample, no cached spare).
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  RngState state() const { return state_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  RngState state_{};
  std::uint64_t key_ = mix(0x6A09E667F3BCC909ULL);
};

}  // namespace carekit
