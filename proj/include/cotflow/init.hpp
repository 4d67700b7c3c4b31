#pragma once

#include <cstdint>
#include <string>

#include "cotflow/activation.hpp"
#include "cotflow/measure.hpp"

namespace cotflow {

// Law of the inner weights w at initialization. The bias follows the
// activation: uniform on [0, pi] for Cos, standard normal otherwise.
struct FeatureDist {
  enum class Kind { Gaussian, Matern, SphereUniform, Grid };
  Kind kind = Kind::Gaussian;
  double rho = 1.0;  // Gaussian scale: w ~ N(0, rho^2 I)
  double nu = 0.0;   // Matern exponent: density prop to (1+||w||^2)^(-nu)
  bool tied_slices = false;  // one slice draw replicated across s

  static FeatureDist gaussian(double rho) { return {Kind::Gaussian, rho, 0.0, false}; }
  static FeatureDist matern(double nu) { return {Kind::Matern, 1.0, nu, false}; }
  static FeatureDist sphere_uniform() { return {Kind::SphereUniform, 1.0, 0.0, false}; }
  static FeatureDist grid() { return {Kind::Grid, 1.0, 0.0, false}; }
};

FeatureDist::Kind feature_kind_from_string(const std::string& name);
std::string to_string(FeatureDist::Kind kind);

// Identity-flow initialization: u = 0 for every particle, (w, b) drawn
// i.i.d. from the feature law, slices independent unless tied. Draw j of
// slice k reads the stream keyed (seed, k, j), so the cloud is independent
// of evaluation order.
ParameterMeasure init_fixup(int S, int m, int d, Activation act,
                            const FeatureDist& dist, std::uint64_t seed);

}  // namespace cotflow
