#pragma once

#include <vector>

#include "cotflow/dataset.hpp"
#include "cotflow/measure.hpp"
#include "cotflow/node_flow.hpp"

namespace cotflow {

struct OtSolver {
  enum class Kind { Exact, Sinkhorn };
  Kind kind = Kind::Exact;
  double eps = 1e-3;

  static OtSolver exact() { return {Kind::Exact, 0.0}; }
  static OtSolver sinkhorn(double eps) { return {Kind::Sinkhorn, eps}; }
};

// Slice-wise transport plan between two particle clouds. Exact plans are
// permutations (mass 1/m per match); Sinkhorn plans are dense m_a x m_b
// matrices with uniform marginals up to the solver tolerance. total_cost
// is the mean of the per-slice squared-W2 costs, i.e. the squared distance.
struct CouplingPlan {
  int S = 0;
  int m_a = 0, m_b = 0;
  bool exact = true;
  double eps = 0.0;
  std::vector<std::vector<int>> perms;       // exact: per slice, row -> column
  std::vector<std::vector<double>> plans;    // sinkhorn: per slice, m_a*m_b
  std::vector<double> slice_costs;
  double total_cost = 0.0;
};

struct CotResult {
  double distance = 0.0;
  CouplingPlan plan;
};

// Slice-aggregated transport distance: d^2 = mean_k W2^2(slice k). The
// exact path solves a linear assignment per slice; inputs are ordered
// canonically first so both argument orders run the identical computation
// and the reported distance is bit-symmetric.
CotResult cot_distance(const ParameterMeasure& a, const ParameterMeasure& b,
                       const OtSolver& solver = OtSolver::exact());

// W2 between the joint (s, theta) atom clouds, s embedded at the slice
// midpoint. Always a lower bound for cot_distance. Desk scale only:
// throws when S*m exceeds 512 atoms.
double wasserstein_lower_bound(const ParameterMeasure& a,
                               const ParameterMeasure& b);

// True when every slice carries the same atom multiset up to `tol`
// (sorted-lexicographic comparison); the zero set of the distance.
bool slicewise_atoms_equal(const ParameterMeasure& a, const ParameterMeasure& b,
                           double tol = 1e-12);

// McCann interpolation along the exact per-slice matching:
// theta_t = (1-t) theta_a + t theta_b after pairing. t in [0, 1].
ParameterMeasure displacement(const ParameterMeasure& a,
                              const ParameterMeasure& b, double t);

// theta + scale * v, the exact pushforward of the particle cloud along a
// field shaped like a GradientField (v.g holds d theta).
ParameterMeasure push(const ParameterMeasure& mu, const GradientField& v,
                      double scale);

// First-order tangent consistency: distance between the frozen-velocity
// move push(mu, h*v) and the gradient-flow curve at time h (integrated by
// 32 descent micro-steps), divided by |h|. O(h) when v = -grad L[mu];
// converges to the velocity mismatch when it is not.
double tangent_approximation_residual(const ParameterMeasure& mu, Activation act,
                                      const Dataset& data, const Loss& loss,
                                      const GradientField& v, double h);

struct DerivativeCheckReport {
  std::vector<double> fd_derivative;       // central differences of d^2(mu_t, ref)
  std::vector<double> pairing_derivative;  // 2 <theta - theta', v> under the plan
  double max_rel_discrepancy = 0.0;
};

// Chain-rule check for the squared distance to a fixed reference along a
// curve with velocities v_t = d theta / dt, sampled every dt.
DerivativeCheckReport distance_derivative_check(
    const std::vector<ParameterMeasure>& curve,
    const std::vector<GradientField>& velocities, double dt,
    const ParameterMeasure& reference);

}  // namespace cotflow
