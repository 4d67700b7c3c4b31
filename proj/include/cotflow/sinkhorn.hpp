#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace cotflow {

struct SinkhornResult {
  std::vector<double> plan;   // m_a x m_b, row-major; marginals 1/m_a, 1/m_b
  double cost = 0.0;          // <P, C>, an upper bound on the exact OT cost
  int iterations = 0;
  double marginal_violation = 0.0;
  bool converged = false;
};

// Log-domain Sinkhorn between uniform discrete measures with eps-scaling:
// the regularization starts at 1.0 and halves down to the target, then
// iterates at the target until the worst marginal violation drops below
// tol. Debiasing is off, so the returned cost keeps the entropic upward
// bias of the eps-plan.
inline SinkhornResult sinkhorn_plan(int ma, int mb,
                                    const std::vector<double>& cost,
                                    double eps, int max_iter = 10000,
                                    double tol = 1e-9) {
  SinkhornResult out;
  std::vector<double> f(ma, 0.0), g(mb, 0.0);
  const double log_a = -std::log(static_cast<double>(ma));
  const double log_b = -std::log(static_cast<double>(mb));

  auto lse_rows = [&](double level) {
    // f_i = level*log a_i - level * LSE_j((g_j - C_ij)/level)
    for (int i = 0; i < ma; ++i) {
      const double* ci = cost.data() + static_cast<std::size_t>(i) * mb;
      double peak = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < mb; ++j)
        peak = std::max(peak, (g[j] - ci[j]) / level);
      double sum = 0.0;
      for (int j = 0; j < mb; ++j)
        sum += std::exp((g[j] - ci[j]) / level - peak);
      f[i] = level * (log_a - peak - std::log(sum));
    }
  };
  auto lse_cols = [&](double level) {
    for (int j = 0; j < mb; ++j) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < ma; ++i)
        peak = std::max(peak,
                        (f[i] - cost[static_cast<std::size_t>(i) * mb + j]) / level);
      double sum = 0.0;
      for (int i = 0; i < ma; ++i)
        sum += std::exp(
            (f[i] - cost[static_cast<std::size_t>(i) * mb + j]) / level - peak);
      g[j] = level * (log_b - peak - std::log(sum));
    }
  };
  auto violation = [&](double level) {
    // P_ij = exp((f_i + g_j - C_ij)/level), already carrying the weights
    double worst = 0.0;
    for (int i = 0; i < ma; ++i) {
      double sum = 0.0;
      for (int j = 0; j < mb; ++j)
        sum += std::exp((f[i] + g[j] - cost[static_cast<std::size_t>(i) * mb + j]) /
                        level);
      worst = std::max(worst, std::abs(sum - 1.0 / ma));
    }
    for (int j = 0; j < mb; ++j) {
      double sum = 0.0;
      for (int i = 0; i < ma; ++i)
        sum += std::exp((f[i] + g[j] - cost[static_cast<std::size_t>(i) * mb + j]) /
                        level);
      worst = std::max(worst, std::abs(sum - 1.0 / mb));
    }
    return worst;
  };

  double level = 1.0;
  while (level > eps && out.iterations < max_iter) {
    for (int it = 0; it < 20 && out.iterations < max_iter; ++it) {
      lse_rows(level);
      lse_cols(level);
      ++out.iterations;
    }
    level = std::max(eps, level * 0.5);
  }
  while (out.iterations < max_iter) {
    lse_rows(eps);
    lse_cols(eps);
    ++out.iterations;
    if (out.iterations % 5 == 0 && violation(eps) < tol) break;
  }
  out.marginal_violation = violation(eps);
  out.converged = out.marginal_violation < tol;

  out.plan.resize(static_cast<std::size_t>(ma) * mb);
  for (int i = 0; i < ma; ++i)
    for (int j = 0; j < mb; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * mb + j;
      out.plan[idx] = std::exp((f[i] + g[j] - cost[idx]) / eps);
      out.cost += out.plan[idx] * cost[idx];
    }
  return out;
}

}  // namespace cotflow
