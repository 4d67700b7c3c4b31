#pragma once

#include <cstdint>
#include <vector>

namespace cotflow {

// Equal-weight particle cloud over S uniform depth slices. Particle j of
// slice k is the flat (2d+1)-vector (u[0..d), w[0..d), b) at
// theta[(k*m + j) * (2d+1)]; every atom carries weight 1/(S*m).
struct ParameterMeasure {
  int S = 0;  // depth slices
  int m = 0;  // particles per slice
  int d = 0;  // state dimension (u, w in R^d)
  std::uint64_t seed = 0;
  std::vector<double> theta;  // S*m*(2d+1), slice-major, particle-minor

  int pdim() const { return 2 * d + 1; }
  std::size_t size() const {
    return static_cast<std::size_t>(S) * m * pdim();
  }

  double* particle(int k, int j) {
    return theta.data() + (static_cast<std::size_t>(k) * m + j) * pdim();
  }
  const double* particle(int k, int j) const {
    return theta.data() + (static_cast<std::size_t>(k) * m + j) * pdim();
  }

  static ParameterMeasure zeros(int S, int m, int d, std::uint64_t seed = 0);
};

// Mean squared particle norm (the energy of the measure).
double energy(const ParameterMeasure& mu);

// Largest particle norm (support radius of the discrete measure).
double max_particle_norm(const ParameterMeasure& mu);

// Throws ConfigError unless both clouds share (S, m, d).
void require_same_shape(const ParameterMeasure& a, const ParameterMeasure& b);

}  // namespace cotflow
