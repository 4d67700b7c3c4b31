#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cotflow/errors.hpp"

namespace cotflow {

// 15-point Kronrod rule with the embedded 7-point Gauss rule; the
// difference of the two estimates serves as the local error.
struct Gk15Result {
  double value = 0.0;
  double error = 0.0;
};

inline Gk15Result gk15(const std::function<double(double)>& f, double a,
                       double b) {
  static constexpr double xgk[8] = {
      0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
      0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
      0.2077849550078985, 0.0};
  static constexpr double wgk[8] = {
      0.0229353220105292, 0.0630920926299786, 0.1047900103222502,
      0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
      0.2044329400752989, 0.2094821410847278};
  static constexpr double wg[4] = {0.1294849661688697, 0.2797053914892767,
                                   0.3818300505051189, 0.4179591836734694};

  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(mid);
  double kronrod = wgk[7] * fc;
  double gauss = wg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double lo = f(mid - half * xgk[i]);
    const double hi = f(mid + half * xgk[i]);
    kronrod += wgk[i] * (lo + hi);
    if (i % 2 == 1) gauss += wg[i / 2] * (lo + hi);
  }
  return {kronrod * half, std::abs(kronrod - gauss) * std::abs(half)};
}

// Bisects the interval with the largest local error until the summed error
// meets the relative tolerance. Throws NumericalError when the interval
// budget runs out before convergence.
inline double adaptive_gk15(const std::function<double(double)>& f, double a,
                            double b, double rel_tol,
                            int max_intervals = 4000) {
  struct Piece {
    double a, b, value, error;
  };
  std::vector<Piece> pieces;
  const auto first = gk15(f, a, b);
  pieces.push_back({a, b, first.value, first.error});

  for (;;) {
    double total = 0.0, err = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      total += pieces[i].value;
      err += pieces[i].error;
      if (pieces[i].error > pieces[worst].error) worst = i;
    }
    if (err <= rel_tol * std::max(std::abs(total), 1e-300)) return total;
    if (static_cast<int>(pieces.size()) >= max_intervals)
      throw NumericalError(
          "adaptive quadrature did not converge",
          "{\"error\":\"quadrature_nonconvergence\",\"intervals\":" +
              std::to_string(pieces.size()) + "}");
    const Piece p = pieces[worst];
    const double mid = 0.5 * (p.a + p.b);
    const auto left = gk15(f, p.a, mid);
    const auto right = gk15(f, mid, p.b);
    pieces[worst] = {p.a, mid, left.value, left.error};
    pieces.push_back({mid, p.b, right.value, right.error});
  }
}

}  // namespace cotflow
