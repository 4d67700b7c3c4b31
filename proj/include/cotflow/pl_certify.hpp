#pragma once

#include <cstdint>
#include <string>

#include "cotflow/dataset.hpp"
#include "cotflow/measure.hpp"
#include "cotflow/node_flow.hpp"
#include "cotflow/version.hpp"

namespace cotflow {

// Probing plan for the certified radius: `directions` random unit-speed
// fields, each pushed to `radii` distances on the geometric grid
// [r_min, r_max]. The reported radius is the largest grid value whose
// prefix of probes all keep the kernel floor above half its base value.
struct RadiusStrategy {
  int directions = 32;
  int radii = 6;
  double r_min = 1e-3;
  double r_max = 1.0;
  std::uint64_t seed = 1;
};

// Empirical local convergence certificate. The gradient-dominance constant
// pl_constant = 2 alpha^2 exp(-surrogate_c) lambda0 / N uses the measured
// adjoint amplification surrogate_c: the smallest C with
// ||p(s)||^2 >= exp(-C) ||p(1)||^2 over the base point and every accepted
// probe. passed <=> initial_risk < pl_constant * radius^2 / 4 (strict).
// cubic_scaling = (lambda0 / N)^3 is a conservative reference rate, reported
// for comparison only; no decision reads it.
struct Certificate {
  double lambda0 = 0.0;
  double pl_constant = 0.0;
  double radius = 0.0;
  double initial_risk = 0.0;
  double condition_lhs = 0.0;
  double condition_rhs = 0.0;
  double surrogate_c = 0.0;
  double cubic_scaling = 0.0;
  double alpha = 1.0;
  bool passed = false;
  std::string reason;           // empty when passed
  std::string provenance_json;  // inputs, shapes, seeds, strategy
};

std::string to_json(const Certificate& cert);

// Evaluates the certificate at mu0 for the given data and loss convention.
// A kernel floor at or below numerical noise short-circuits to a failed
// certificate with reason "lambda0 = 0"; probing is skipped.
Certificate certify(const ParameterMeasure& mu0, Activation act,
                    const Dataset& data, const Loss& loss = {},
                    const RadiusStrategy& strategy = {});

// Reference scalings of the kernel floor in the data separation delta,
// with every unknown constant set to 1: sobolev(nu) -> delta^(2 nu - d),
// gaussian -> delta^-d exp(-delta^-2). Reporting aid only; certificates
// never read these.
struct BoundFamily {
  enum class Kind { Sobolev, Gaussian };
  Kind kind = Kind::Sobolev;
  double nu = 0.0;

  static BoundFamily sobolev(double nu) { return {Kind::Sobolev, nu}; }
  static BoundFamily gaussian() { return {Kind::Gaussian, 0.0}; }
};

double kernel_lower_bound(const Dataset& data, const BoundFamily& family);

// Doubles the readout scale from 1 until the lifted instance certifies,
// embedding `base` with that scale each round. mu0 lives in the lifted
// dimension base.d + base.d_out. Throws NumericalError when the kernel
// floor is degenerate or the doubling budget runs out.
struct AlphaSelection {
  double alpha = 1.0;
  Certificate certificate;
};

AlphaSelection select_alpha(const Dataset& base, const ParameterMeasure& mu0,
                            Activation act, int budget = 20,
                            const RadiusStrategy& strategy = {});

}  // namespace cotflow
