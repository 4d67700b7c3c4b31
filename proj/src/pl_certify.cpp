#include "cotflow/pl_certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "cotflow/cond_ot.hpp"
#include "cotflow/errors.hpp"
#include "cotflow/kernels.hpp"
#include "cotflow/parallel.hpp"
#include "cotflow/rng.hpp"

namespace cotflow {

namespace {

struct SliceSpectra {
  double lambda0 = 0.0;
  double mean_lambda_max = 0.0;
};

SliceSpectra slice_spectra(const ParameterMeasure& mu, Activation act,
                           const FlowState& flow) {
  std::vector<double> mins(mu.S), maxs(mu.S);
  parallel_for(mu.S, [&](int k) {
    std::vector<double> pts(static_cast<std::size_t>(flow.N) * flow.d);
    for (int i = 0; i < flow.N; ++i)
      std::copy(flow.at(i, k), flow.at(i, k) + flow.d, &pts[i * flow.d]);
    const auto km = k1_matrix(mu, k, act, pts.data(), flow.N);
    mins[k] = km.lambda_min;
    maxs[k] = km.lambda_max;
  });
  SliceSpectra out;
  for (int k = 0; k < mu.S; ++k) {
    out.lambda0 += mins[k];
    out.mean_lambda_max += maxs[k];
  }
  out.lambda0 /= mu.S;
  out.mean_lambda_max /= mu.S;
  return out;
}

// Smallest C with ||p(s)||^2 >= exp(-C) ||p(1)||^2 across samples and
// nodes; samples with vanishing terminal adjoint carry no constraint.
double adjoint_amplification(const ParameterMeasure& mu, Activation act,
                             const FlowState& flow, const Dataset& data,
                             const Loss& loss) {
  const auto adj = adjoint(mu, act, flow, data, loss);
  double c = 0.0;
  for (int i = 0; i < flow.N; ++i) {
    double p1 = 0.0;
    for (int q = 0; q < flow.d; ++q) {
      const double v = adj.at(i, flow.S)[q];
      p1 += v * v;
    }
    if (p1 <= 1e-300) continue;
    for (int k = 0; k <= flow.S; ++k) {
      double ps = 0.0;
      for (int q = 0; q < flow.d; ++q) {
        const double v = adj.at(i, k)[q];
        ps += v * v;
      }
      c = std::max(c, std::log(p1 / std::max(ps, 1e-300)));
    }
  }
  return c;
}

GradientField unit_direction(int S, int m, int d, std::uint64_t seed,
                             std::uint64_t index) {
  GradientField v;
  v.S = S;
  v.m = m;
  v.d = d;
  v.g.resize(static_cast<std::size_t>(S) * m * (2 * d + 1));
  CounterRng r(seed, index, 0);
  double nsq = 0.0;
  for (auto& x : v.g) {
    x = r.normal();
    nsq += x * x;
  }
  const double scale = std::sqrt(static_cast<double>(S) * m / nsq);
  for (auto& x : v.g) x *= scale;
  return v;
}

void validate(const RadiusStrategy& strategy) {
  if (strategy.directions < 1)
    throw ConfigError("radius strategy needs at least one direction");
  if (strategy.radii < 2)
    throw ConfigError("radius strategy needs at least two radii");
  if (!(strategy.r_min > 0.0) || !(strategy.r_max > strategy.r_min))
    throw ConfigError("radius strategy needs 0 < r_min < r_max");
}

std::string provenance(const ParameterMeasure& mu0, Activation act,
                       const Dataset& data, const Loss& loss, double alpha,
                       const RadiusStrategy& strategy) {
  nlohmann::json j;
  j["seed"] = mu0.seed;
  j["S"] = mu0.S;
  j["m"] = mu0.m;
  j["d"] = mu0.d;
  j["N"] = data.N;
  j["d_out"] = data.d_out;
  j["activation"] = std::string(to_string(act));
  j["lifted"] = loss.lifted;
  j["alpha"] = alpha;
  j["strategy"] = {{"directions", strategy.directions},
                   {"radii", strategy.radii},
                   {"r_min", strategy.r_min},
                   {"r_max", strategy.r_max},
                   {"seed", strategy.seed}};
  return j.dump();
}

}  // namespace

std::string to_json(const Certificate& cert) {
  nlohmann::json j;
  j["schema_version"] = kCertificateSchemaVersion;
  j["lambda0"] = cert.lambda0;
  j["pl_constant"] = cert.pl_constant;
  j["radius"] = cert.radius;
  j["initial_risk"] = cert.initial_risk;
  j["condition_lhs"] = cert.condition_lhs;
  j["condition_rhs"] = cert.condition_rhs;
  j["surrogate_c"] = cert.surrogate_c;
  j["cubic_scaling"] = cert.cubic_scaling;
  j["alpha"] = cert.alpha;
  j["passed"] = cert.passed;
  j["reason"] = cert.reason;
  j["provenance"] = cert.provenance_json.empty()
                        ? nlohmann::json::object()
                        : nlohmann::json::parse(cert.provenance_json);
  return j.dump();
}

Certificate certify(const ParameterMeasure& mu0, Activation act,
                    const Dataset& data, const Loss& loss,
                    const RadiusStrategy& strategy) {
  validate(strategy);

  const auto flow0 = forward(mu0, act, data);
  const auto spectra = slice_spectra(mu0, act, flow0);

  Certificate cert;
  cert.alpha = loss.lifted ? loss.alpha : 1.0;
  cert.lambda0 = spectra.lambda0;
  cert.initial_risk = risk(flow0, data, loss);
  cert.condition_lhs = cert.initial_risk;
  cert.cubic_scaling =
      std::pow(cert.lambda0, 3) / std::pow(static_cast<double>(data.N), 3);
  cert.provenance_json = provenance(mu0, act, data, loss, cert.alpha, strategy);

  if (cert.lambda0 <= 1e-12 * std::max(1.0, spectra.mean_lambda_max)) {
    cert.reason = "lambda0 = 0";
    return cert;
  }

  // probe grid: lam[dir * radii + k] is the kernel floor of the probe
  // pushed distance r_k along unit direction dir
  const int D = strategy.directions, R = strategy.radii;
  std::vector<double> grid(R);
  for (int k = 0; k < R; ++k)
    grid[k] = strategy.r_min *
              std::pow(strategy.r_max / strategy.r_min, k / (R - 1.0));
  std::vector<double> lam(static_cast<std::size_t>(D) * R);
  parallel_for(D * R, [&](int idx) {
    const int dir = idx / R, k = idx % R;
    const auto v = unit_direction(mu0.S, mu0.m, mu0.d, strategy.seed, dir);
    const auto probe = push(mu0, v, grid[k]);
    try {
      lam[idx] = lambda0(probe, act, forward(probe, act, data));
    } catch (const NumericalError&) {
      // a probe that breaks the flow certainly breaks the kernel floor
      lam[idx] = -std::numeric_limits<double>::infinity();
    }
  });

  const double floor = cert.lambda0 / 2.0;
  int accepted_radii = 0;
  for (int k = 0; k < R; ++k) {
    bool ok = true;
    for (int dir = 0; dir < D; ++dir)
      if (!(lam[static_cast<std::size_t>(dir) * R + k] >= floor)) ok = false;
    if (!ok) break;
    accepted_radii = k + 1;
    cert.radius = grid[k];
  }

  // measured amplification over the base point and every accepted probe
  std::vector<double> amp(static_cast<std::size_t>(D) * accepted_radii);
  parallel_for(D * accepted_radii, [&](int idx) {
    const int dir = idx / accepted_radii, k = idx % accepted_radii;
    const auto v = unit_direction(mu0.S, mu0.m, mu0.d, strategy.seed, dir);
    const auto probe = push(mu0, v, grid[k]);
    amp[idx] =
        adjoint_amplification(probe, act, forward(probe, act, data), data, loss);
  });
  cert.surrogate_c = adjoint_amplification(mu0, act, flow0, data, loss);
  for (double a : amp) cert.surrogate_c = std::max(cert.surrogate_c, a);

  cert.pl_constant = 2.0 * cert.alpha * cert.alpha *
                     std::exp(-cert.surrogate_c) * cert.lambda0 / data.N;
  cert.condition_rhs = cert.pl_constant * cert.radius * cert.radius / 4.0;
  cert.passed = cert.condition_lhs < cert.condition_rhs;
  if (!cert.passed)
    cert.reason = "initial risk not below pl_constant * radius^2 / 4";
  return cert;
}

double kernel_lower_bound(const Dataset& data, const BoundFamily& family) {
  const double delta = separation(data);
  if (delta == 0.0)
    throw ConfigError("kernel lower bound needs strictly separated inputs");
  if (family.kind == BoundFamily::Kind::Sobolev) {
    if (!(family.nu > 0.5 * data.d))
      throw ConfigError("sobolev bound needs nu > d/2");
    return std::pow(delta, 2.0 * family.nu - data.d);
  }
  return std::pow(delta, -data.d) * std::exp(-1.0 / (delta * delta));
}

AlphaSelection select_alpha(const Dataset& base, const ParameterMeasure& mu0,
                            Activation act, int budget,
                            const RadiusStrategy& strategy) {
  if (budget < 1) throw ConfigError("select_alpha needs a positive budget");
  if (mu0.d != base.d + base.d_out)
    throw ConfigError("select_alpha: measure must live in the lifted dimension");

  const auto lifted = lift(base, 1.0);
  double alpha = 1.0;
  for (int round = 0; round < budget; ++round, alpha *= 2.0) {
    const auto cert =
        certify(mu0, act, lifted.data, Loss{true, alpha}, strategy);
    if (cert.reason == "lambda0 = 0")
      throw NumericalError(
          "select_alpha: kernel floor is degenerate, no scale helps",
          "{\"error\":\"degenerate_kernel_floor\"}");
    if (cert.passed) return {alpha, cert};
  }
  throw NumericalError("select_alpha: doubling budget exhausted",
                       "{\"error\":\"alpha_budget_exhausted\",\"budget\":" +
                           std::to_string(budget) + "}");
}

}  // namespace cotflow
