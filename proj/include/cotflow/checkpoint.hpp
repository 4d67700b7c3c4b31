#pragma once

#include <cstdint>
#include <string>

#include "cotflow/activation.hpp"
#include "cotflow/measure.hpp"

namespace cotflow {

// Checkpoint container: one line of JSON
// {"version","S","m","d","activation","seed"} terminated by '\n', followed
// by the raw little-endian float64 particle payload (slice-major,
// particle-minor, field order u, w, b). Round-trips bit-exactly.
struct Checkpoint {
  ParameterMeasure mu;
  Activation activation = Activation::Tanh;
};

void write_checkpoint(const std::string& path, const ParameterMeasure& mu,
                      Activation act);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace cotflow
