#include "cotflow/init.hpp"

#include <cmath>
#include <vector>

#include "cotflow/errors.hpp"
#include "cotflow/rng.hpp"

namespace cotflow {

namespace {

void draw_gaussian(CounterRng& rng, double rho, double* w, int d) {
  for (int c = 0; c < d; ++c) w[c] = rho * rng.normal();
}

void draw_sphere(CounterRng& rng, double* w, int d) {
  double sq = 0.0;
  do {
    sq = 0.0;
    for (int c = 0; c < d; ++c) {
      w[c] = rng.normal();
      sq += w[c] * w[c];
    }
  } while (sq == 0.0);
  const double inv = 1.0 / std::sqrt(sq);
  for (int c = 0; c < d; ++c) w[c] *= inv;
}

// Metropolis chain targeting density prop to (1+||w||^2)^(-nu), started at
// the origin, isotropic normal proposals of scale 1, 100-step burn-in.
void draw_matern(CounterRng& rng, double nu, double* w, int d) {
  std::vector<double> cur(d, 0.0), prop(d);
  double cur_sq = 0.0;
  for (int step = 0; step < 100; ++step) {
    double prop_sq = 0.0;
    for (int c = 0; c < d; ++c) {
      prop[c] = cur[c] + rng.normal();
      prop_sq += prop[c] * prop[c];
    }
    const double log_accept = -nu * (std::log1p(prop_sq) - std::log1p(cur_sq));
    if (std::log(rng.uniform01()) < log_accept) {
      cur = prop;
      cur_sq = prop_sq;
    }
  }
  for (int c = 0; c < d; ++c) w[c] = cur[c];
}

// Deterministic lattice: per-axis cell centers over [-3, 3], enumerated
// lexicographically; particle j of any slice gets lattice point j.
void grid_point(int j, int m, double* w, int d) {
  int cells = 1;
  while (std::pow(static_cast<double>(cells), d) < m) ++cells;
  int rest = j;
  for (int c = d - 1; c >= 0; --c) {
    const int idx = rest % cells;
    rest /= cells;
    w[c] = -3.0 + 6.0 * (idx + 0.5) / cells;
  }
}

}  // namespace

FeatureDist::Kind feature_kind_from_string(const std::string& name) {
  if (name == "gaussian") return FeatureDist::Kind::Gaussian;
  if (name == "matern") return FeatureDist::Kind::Matern;
  if (name == "sphere_uniform") return FeatureDist::Kind::SphereUniform;
  if (name == "grid") return FeatureDist::Kind::Grid;
  throw ConfigError("unknown feature distribution: " + name);
}

std::string to_string(FeatureDist::Kind kind) {
  switch (kind) {
    case FeatureDist::Kind::Gaussian: return "gaussian";
    case FeatureDist::Kind::Matern: return "matern";
    case FeatureDist::Kind::SphereUniform: return "sphere_uniform";
    case FeatureDist::Kind::Grid: return "grid";
  }
  return "unknown";
}

ParameterMeasure init_fixup(int S, int m, int d, Activation act,
                            const FeatureDist& dist, std::uint64_t seed) {
  if (dist.kind == FeatureDist::Kind::Gaussian && dist.rho <= 0.0)
    throw ConfigError("gaussian feature distribution requires rho > 0");
  if (dist.kind == FeatureDist::Kind::Matern && dist.nu <= d / 2.0 + 1.0)
    throw ConfigError("matern feature distribution requires nu > d/2 + 1");

  ParameterMeasure mu = ParameterMeasure::zeros(S, m, d, seed);
  const int slices_to_draw = dist.tied_slices ? 1 : S;
  for (int k = 0; k < slices_to_draw; ++k) {
    for (int j = 0; j < m; ++j) {
      CounterRng rng(seed, static_cast<std::uint64_t>(k),
                     static_cast<std::uint64_t>(j));
      double* th = mu.particle(k, j);
      double* w = th + d;  // u stays 0
      switch (dist.kind) {
        case FeatureDist::Kind::Gaussian: draw_gaussian(rng, dist.rho, w, d); break;
        case FeatureDist::Kind::Matern: draw_matern(rng, dist.nu, w, d); break;
        case FeatureDist::Kind::SphereUniform: draw_sphere(rng, w, d); break;
        case FeatureDist::Kind::Grid: grid_point(j, m, w, d); break;
      }
      th[2 * d] = (act == Activation::Cos) ? rng.uniform(0.0, M_PI) : rng.normal();
    }
  }
  if (dist.tied_slices) {
    const int p = mu.pdim();
    for (int k = 1; k < S; ++k)
      for (int j = 0; j < m; ++j)
        for (int c = 0; c < p; ++c) mu.particle(k, j)[c] = mu.particle(0, j)[c];
  }
  return mu;
}

}  // namespace cotflow
