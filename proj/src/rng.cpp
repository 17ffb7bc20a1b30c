#include "disbayes/rng.hpp"

#include <cmath>
#include <numbers>

namespace disbayes {

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replication, std::uint64_t agent,
                         std::uint64_t step, Purpose purpose) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ replication);
  h = splitmix64(h ^ (agent + 0x100000001B3ULL));
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  return h;
}

double CounterRng::uniform() noexcept {
  // 53 random mantissa bits, shifted by half an ulp so 0 is never produced.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace disbayes
