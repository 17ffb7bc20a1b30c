#pragma once

#include <cstdint>

namespace disbayes {

/// Tag distinguishing independent random streams that share (seed, replication, agent, step).
enum class Purpose : std::uint64_t {
  Observation = 1,
  Covariate = 2,
  Schedule = 3,
  MonteCarlo = 4,
  Clt = 5,
  Topology = 6,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replication, std::uint64_t agent,
                         std::uint64_t step, Purpose purpose) noexcept;

/// Counter-based generator: the n-th output is a pure function of (key, n), so a stream can be
/// re-created anywhere from its key without sharing state between threads.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  CounterRng(std::uint64_t seed, std::uint64_t replication, std::uint64_t agent,
             std::uint64_t step, Purpose purpose) noexcept
      : key_(stream_key(seed, replication, agent, step, purpose)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return splitmix64(key_ + 0x632BE59BD9B4E019ULL * ++counter_); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Standard normal via Box-Muller (cosine branch only, two uniforms per draw).
  double normal() noexcept;

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace disbayes
