#include "cotflow/rng.hpp"

#include <cmath>

namespace cotflow {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
}

std::uint64_t CounterRng::mix(std::uint64_t z) {
  // splitmix64 finalizer
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t slice,
                       std::uint64_t particle) {
  std::uint64_t k = mix(seed);
  k = mix(k ^ (slice + 0x517cc1b727220a95ull));
  k = mix(k ^ (particle + 0x2545f4914f6cdd1dull));
  key_ = k;
}

std::uint64_t CounterRng::next_u64() { return mix(key_ + counter_++ * kGolden); }

double CounterRng::uniform01() {
  const std::uint64_t bits = next_u64() >> 11;  // top 53 bits
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double CounterRng::normal() {
  const double u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace cotflow
