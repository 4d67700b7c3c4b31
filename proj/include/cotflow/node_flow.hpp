#pragma once

#include <string>
#include <vector>

#include "cotflow/activation.hpp"
#include "cotflow/dataset.hpp"
#include "cotflow/measure.hpp"

namespace cotflow {

enum class Scheme { Euler, RK4 };

// Per-sample trajectories at the S+1 grid nodes s_k = k/S. Node layout is
// sample-major: x[(i*(S+1) + k) * d].
struct FlowState {
  int N = 0, S = 0, d = 0;
  std::vector<double> x;

  double h() const { return 1.0 / S; }
  const double* at(int i, int k) const {
    return x.data() + (static_cast<std::size_t>(i) * (S + 1) + k) * d;
  }
  double* at(int i, int k) {
    return x.data() + (static_cast<std::size_t>(i) * (S + 1) + k) * d;
  }
};

// Adjoint states p^i(s_k), same layout as FlowState.
struct AdjointState {
  int N = 0, S = 0, d = 0;
  std::vector<double> p;

  const double* at(int i, int k) const {
    return p.data() + (static_cast<std::size_t>(i) * (S + 1) + k) * d;
  }
  double* at(int i, int k) {
    return p.data() + (static_cast<std::size_t>(i) * (S + 1) + k) * d;
  }
};

// Fundamental matrices Phi(s_k) of one sample's linearized forward flow,
// with Phi(s_0) = I; d x d blocks, row-major.
struct Resolvent {
  int S = 0, d = 0;
  std::vector<double> phi;    // (S+1)*d*d
  double max_condition = 1.0;  // worst cond(Phi(s_k)) over nodes

  const double* at(int k) const {
    return phi.data() + static_cast<std::size_t>(k) * d * d;
  }
  double* at(int k) {
    return phi.data() + static_cast<std::size_t>(k) * d * d;
  }
};

// Risk sensitivity at every particle slot; same flat layout as
// ParameterMeasure::theta scaled to the L^2(mu) geometry, i.e. the particle
// velocity field of the gradient flow. norm_sq = (1/(S*m)) sum ||g||^2.
struct GradientField {
  int S = 0, m = 0, d = 0;
  std::vector<double> g;
  double norm_sq = 0.0;

  int pdim() const { return 2 * d + 1; }
  double* at(int k, int j) {
    return g.data() + (static_cast<std::size_t>(k) * m + j) * pdim();
  }
  const double* at(int k, int j) const {
    return g.data() + (static_cast<std::size_t>(k) * m + j) * pdim();
  }
};

// Integrates dx/ds = mean_j phi(theta^j(s_k), x) with the slice-frozen field
// (left endpoint). Throws NumericalError on non-finite state or a violated
// growth envelope, identifying sample and slice.
FlowState forward(const ParameterMeasure& mu, Activation act,
                  const Dataset& data, Scheme scheme = Scheme::Euler);

// 1/(2N) sum_i ||out_i - y_i||^2 with out per Loss convention.
double risk(const FlowState& flow, const Dataset& data, const Loss& loss = {});

// Gradient of the per-sample loss at the terminal state, N x d row-major.
std::vector<double> terminal_gradient(const FlowState& flow, const Dataset& data,
                                      const Loss& loss = {});

// Exact transpose of the forward Euler recursion:
// p(s_k) = p(s_{k+1}) + h * D_x F(s_k, x(s_k))^T p(s_{k+1}).
AdjointState adjoint(const ParameterMeasure& mu, Activation act,
                     const FlowState& flow, const Dataset& data,
                     const Loss& loss = {});

// Phi(s_{k+1}) = (I + h * D_x F(s_k, x(s_k))) Phi(s_k) for one sample.
// Throws NumericalError when cond(Phi) exceeds 1e12.
Resolvent resolvent(const ParameterMeasure& mu, Activation act,
                    const FlowState& flow, int sample_index);

// Adjoint reconstructed through Phi: p(s_k) = Phi(s_k)^{-T} Phi(1)^T p(1).
std::vector<double> resolvent_adjoint(const Resolvent& res,
                                      const double* terminal, int d);

// Particle-velocity field of the risk. For slice k the sensitivities pair
// x(s_k) with p(s_{k+1}), the exact derivative of the Euler-discretized
// risk (scaled by S*m); see gradient_from_states.
GradientField gradient(const ParameterMeasure& mu, Activation act,
                       const Dataset& data, const Loss& loss = {});
GradientField gradient_from_states(const ParameterMeasure& mu, Activation act,
                                   const FlowState& flow,
                                   const AdjointState& adj);

double grad_norm_sq(const GradientField& field);

// Debug dump in the checkpoint container format (JSON line + float64 payload).
void dump_flow(const FlowState& flow, const std::string& path);

}  // namespace cotflow
