#pragma once

#include <cstdint>

namespace cotflow {

// Counter-based generator: each (seed, slice, particle) triple owns an
// independent stream and every draw is a pure function of (key, counter),
// so initialization is reproducible regardless of sampling order or
// thread partition.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t slice, std::uint64_t particle);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1); never returns an endpoint, so it
  // feeds log() and Box-Muller safely.
  double uniform01();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal();

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cotflow
