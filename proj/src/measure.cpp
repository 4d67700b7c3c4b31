#include "cotflow/measure.hpp"

#include <cmath>

#include "cotflow/errors.hpp"

namespace cotflow {

ParameterMeasure ParameterMeasure::zeros(int S, int m, int d,
                                         std::uint64_t seed) {
  if (S < 1 || m < 1 || d < 1)
    throw ConfigError("ParameterMeasure requires S, m, d >= 1");
  ParameterMeasure mu;
  mu.S = S;
  mu.m = m;
  mu.d = d;
  mu.seed = seed;
  mu.theta.assign(mu.size(), 0.0);
  return mu;
}

double energy(const ParameterMeasure& mu) {
  double sum = 0.0;
  for (const double v : mu.theta) sum += v * v;
  return sum / (static_cast<double>(mu.S) * mu.m);
}

double max_particle_norm(const ParameterMeasure& mu) {
  const int p = mu.pdim();
  double best = 0.0;
  for (int k = 0; k < mu.S; ++k) {
    for (int j = 0; j < mu.m; ++j) {
      const double* th = mu.particle(k, j);
      double sq = 0.0;
      for (int c = 0; c < p; ++c) sq += th[c] * th[c];
      best = std::max(best, sq);
    }
  }
  return std::sqrt(best);
}

void require_same_shape(const ParameterMeasure& a, const ParameterMeasure& b) {
  if (a.S != b.S) throw ConfigError("slice count mismatch between measures");
  if (a.m != b.m || a.d != b.d)
    throw ConfigError("particle shape mismatch between measures");
}

}  // namespace cotflow
