#include "cotflow/cond_ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cotflow/assignment.hpp"
#include "cotflow/errors.hpp"
#include "cotflow/parallel.hpp"
#include "cotflow/sinkhorn.hpp"

namespace cotflow {
namespace {

// negative: a precedes b in the canonical order; 0 only for identical clouds
int theta_order(const ParameterMeasure& a, const ParameterMeasure& b) {
  for (std::size_t t = 0; t < a.theta.size(); ++t) {
    if (a.theta[t] < b.theta[t]) return -1;
    if (a.theta[t] > b.theta[t]) return 1;
  }
  return 0;
}

double sq_dist(const double* x, const double* y, int n) {
  double sq = 0.0;
  for (int c = 0; c < n; ++c) {
    const double diff = x[c] - y[c];
    sq += diff * diff;
  }
  return sq;
}

std::vector<double> slice_cost_matrix(const ParameterMeasure& a,
                                      const ParameterMeasure& b, int k) {
  const int p = a.pdim();
  std::vector<double> cost(static_cast<std::size_t>(a.m) * b.m);
  for (int i = 0; i < a.m; ++i)
    for (int j = 0; j < b.m; ++j)
      cost[static_cast<std::size_t>(i) * b.m + j] =
          sq_dist(a.particle(k, i), b.particle(k, j), p);
  return cost;
}

// matched costs summed small-to-large: one canonical rounding per multiset
double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum;
}

CotResult exact_distance(const ParameterMeasure& a, const ParameterMeasure& b) {
  const bool swapped = theta_order(a, b) > 0;
  const ParameterMeasure& lo = swapped ? b : a;
  const ParameterMeasure& hi = swapped ? a : b;

  CouplingPlan plan;
  plan.S = a.S;
  plan.m_a = a.m;
  plan.m_b = b.m;
  plan.exact = true;
  plan.perms.resize(a.S);
  plan.slice_costs.resize(a.S);

  parallel_for(a.S, [&](int k) {
    const auto cost = slice_cost_matrix(lo, hi, k);
    const auto perm = solve_assignment(lo.m, cost);
    std::vector<double> matched(lo.m);
    for (int i = 0; i < lo.m; ++i)
      matched[i] = cost[static_cast<std::size_t>(i) * hi.m + perm[i]];
    plan.slice_costs[k] = sorted_sum(std::move(matched)) / lo.m;
    if (swapped) {
      std::vector<int> inv(lo.m);
      for (int i = 0; i < lo.m; ++i) inv[perm[i]] = i;
      plan.perms[k] = std::move(inv);
    } else {
      plan.perms[k] = std::move(perm);
    }
  });

  double total = 0.0;
  for (const double c : plan.slice_costs) total += c;
  plan.total_cost = total / a.S;
  return {std::sqrt(plan.total_cost), std::move(plan)};
}

CotResult sinkhorn_distance(const ParameterMeasure& a, const ParameterMeasure& b,
                            double eps) {
  if (eps <= 0.0) throw ConfigError("sinkhorn eps must be positive");
  CouplingPlan plan;
  plan.S = a.S;
  plan.m_a = a.m;
  plan.m_b = b.m;
  plan.exact = false;
  plan.eps = eps;
  plan.plans.resize(a.S);
  plan.slice_costs.resize(a.S);

  parallel_for(a.S, [&](int k) {
    const auto cost = slice_cost_matrix(a, b, k);
    auto res = sinkhorn_plan(a.m, b.m, cost, eps);
    plan.slice_costs[k] = res.cost;
    plan.plans[k] = std::move(res.plan);
  });

  double total = 0.0;
  for (const double c : plan.slice_costs) total += c;
  plan.total_cost = total / a.S;
  return {std::sqrt(plan.total_cost), std::move(plan)};
}

}  // namespace

CotResult cot_distance(const ParameterMeasure& a, const ParameterMeasure& b,
                       const OtSolver& solver) {
  if (a.S != b.S) throw ConfigError("cot_distance: slice count mismatch");
  if (a.d != b.d) throw ConfigError("cot_distance: particle dimension mismatch");
  if (solver.kind == OtSolver::Kind::Exact) {
    if (a.m != b.m)
      throw ConfigError(
          "cot_distance: the exact solver needs equal particle counts; use "
          "the sinkhorn solver for unequal m");
    return exact_distance(a, b);
  }
  return sinkhorn_distance(a, b, solver.eps);
}

double wasserstein_lower_bound(const ParameterMeasure& a,
                               const ParameterMeasure& b) {
  require_same_shape(a, b);
  const int n = a.S * a.m;
  if (n > 512)
    throw ConfigError(
        "wasserstein_lower_bound: joint cloud exceeds the 512-atom cap");

  const bool swapped = theta_order(a, b) > 0;
  const ParameterMeasure& lo = swapped ? b : a;
  const ParameterMeasure& hi = swapped ? a : b;

  const int p = a.pdim();
  // joint atoms (s_mid, theta); the s coordinate pays for cross-slice moves
  auto atom = [&](const ParameterMeasure& mu, int t, std::vector<double>& out) {
    const int k = t / mu.m;
    const int j = t % mu.m;
    out[0] = (k + 0.5) / mu.S;
    std::memcpy(out.data() + 1, mu.particle(k, j), sizeof(double) * p);
  };
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  std::vector<double> xi(p + 1), xj(p + 1);
  for (int i = 0; i < n; ++i) {
    atom(lo, i, xi);
    for (int j = 0; j < n; ++j) {
      atom(hi, j, xj);
      cost[static_cast<std::size_t>(i) * n + j] = sq_dist(xi.data(), xj.data(), p + 1);
    }
  }
  const auto perm = solve_assignment(n, cost);
  std::vector<double> matched(n);
  for (int i = 0; i < n; ++i)
    matched[i] = cost[static_cast<std::size_t>(i) * n + perm[i]];
  return std::sqrt(sorted_sum(std::move(matched)) / n);
}

bool slicewise_atoms_equal(const ParameterMeasure& a, const ParameterMeasure& b,
                           double tol) {
  if (a.S != b.S || a.m != b.m || a.d != b.d) return false;
  const int p = a.pdim();
  std::vector<const double*> atoms_a(a.m), atoms_b(b.m);
  auto lex_less = [p](const double* x, const double* y) {
    for (int c = 0; c < p; ++c) {
      if (x[c] < y[c]) return true;
      if (x[c] > y[c]) return false;
    }
    return false;
  };
  for (int k = 0; k < a.S; ++k) {
    for (int j = 0; j < a.m; ++j) {
      atoms_a[j] = a.particle(k, j);
      atoms_b[j] = b.particle(k, j);
    }
    std::sort(atoms_a.begin(), atoms_a.end(), lex_less);
    std::sort(atoms_b.begin(), atoms_b.end(), lex_less);
    for (int j = 0; j < a.m; ++j)
      for (int c = 0; c < p; ++c)
        if (std::abs(atoms_a[j][c] - atoms_b[j][c]) > tol) return false;
  }
  return true;
}

ParameterMeasure displacement(const ParameterMeasure& a,
                              const ParameterMeasure& b, double t) {
  require_same_shape(a, b);
  if (t < 0.0 || t > 1.0)
    throw ConfigError("displacement parameter must lie in [0, 1]");
  const auto result = cot_distance(a, b);
  ParameterMeasure out = a;
  const int p = a.pdim();
  for (int k = 0; k < a.S; ++k) {
    const auto& perm = result.plan.perms[k];
    for (int j = 0; j < a.m; ++j) {
      const double* pa = a.particle(k, j);
      const double* pb = b.particle(k, perm[j]);
      double* po = out.particle(k, j);
      for (int c = 0; c < p; ++c) po[c] = (1.0 - t) * pa[c] + t * pb[c];
    }
  }
  return out;
}

ParameterMeasure push(const ParameterMeasure& mu, const GradientField& v,
                      double scale) {
  if (v.S != mu.S || v.m != mu.m || v.d != mu.d)
    throw ConfigError("push: field shape does not match the measure");
  ParameterMeasure out = mu;
  for (std::size_t t = 0; t < out.theta.size(); ++t)
    out.theta[t] += scale * v.g[t];
  return out;
}

double tangent_approximation_residual(const ParameterMeasure& mu, Activation act,
                                      const Dataset& data, const Loss& loss,
                                      const GradientField& v, double h) {
  if (h == 0.0) throw ConfigError("tangent residual needs h != 0");
  const ParameterMeasure straight = push(mu, v, h);

  // gradient-flow curve at time h, resolved by descent micro-steps
  const int micro = 32;
  const double eta = h / micro;
  ParameterMeasure curved = mu;
  for (int step = 0; step < micro; ++step) {
    const auto field = gradient(curved, act, data, loss);
    for (std::size_t t = 0; t < curved.theta.size(); ++t)
      curved.theta[t] -= eta * field.g[t];
  }
  return cot_distance(straight, curved).distance / std::abs(h);
}

DerivativeCheckReport distance_derivative_check(
    const std::vector<ParameterMeasure>& curve,
    const std::vector<GradientField>& velocities, double dt,
    const ParameterMeasure& reference) {
  if (curve.size() < 3)
    throw ConfigError("derivative check needs at least 3 curve points");
  if (velocities.size() != curve.size())
    throw ConfigError("derivative check needs one velocity per curve point");
  if (dt <= 0.0) throw ConfigError("derivative check needs dt > 0");

  std::vector<double> d2(curve.size());
  for (std::size_t t = 0; t < curve.size(); ++t)
    d2[t] = cot_distance(curve[t], reference).plan.total_cost;

  DerivativeCheckReport report;
  const int p = reference.pdim();
  for (std::size_t t = 1; t + 1 < curve.size(); ++t) {
    const double fd = (d2[t + 1] - d2[t - 1]) / (2.0 * dt);

    const auto result = cot_distance(curve[t], reference);
    double pairing = 0.0;
    for (int k = 0; k < curve[t].S; ++k) {
      const auto& perm = result.plan.perms[k];
      for (int j = 0; j < curve[t].m; ++j) {
        const double* th = curve[t].particle(k, j);
        const double* ref = reference.particle(k, perm[j]);
        const double* vel = velocities[t].at(k, j);
        for (int c = 0; c < p; ++c) pairing += (th[c] - ref[c]) * vel[c];
      }
    }
    pairing *= 2.0 / (static_cast<double>(curve[t].S) * curve[t].m);

    report.fd_derivative.push_back(fd);
    report.pairing_derivative.push_back(pairing);
    const double scale = std::max(std::abs(fd), std::abs(pairing));
    if (scale > 1e-15)
      report.max_rel_discrepancy =
          std::max(report.max_rel_discrepancy, std::abs(fd - pairing) / scale);
  }
  return report;
}

}  // namespace cotflow
