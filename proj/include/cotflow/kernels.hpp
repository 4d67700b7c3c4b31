#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cotflow/activation.hpp"
#include "cotflow/measure.hpp"
#include "cotflow/node_flow.hpp"

namespace cotflow {

// Spectral law of the feature weights w for the closed-form kernels:
// gaussian(rho) is w ~ N(0, rho^2 I); matern(nu) has density proportional
// to (1 + ||w||^2)^{-nu}, which needs nu > d/2 to normalize.
struct Spectral {
  enum class Kind { Gaussian, Matern };
  Kind kind = Kind::Gaussian;
  double rho = 1.0;
  double nu = 0.0;

  static Spectral gaussian(double rho) { return {Kind::Gaussian, rho, 0.0}; }
  static Spectral matern(double nu) { return {Kind::Matern, 1.0, nu}; }
};

// Symmetrized kernel matrix with its spectral range. Scalar matrices are
// N x N (one entry per point pair); Full matrices are N*d x N*d with d x d
// blocks per pair.
struct KernelMatrix {
  enum class Kind { Scalar, Full };
  Kind kind = Kind::Scalar;
  Eigen::MatrixXd entries;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

// entries(a,c) = (1/m) sum_j sigma(w_j.x^a + b_j) sigma(w_j.x^c + b_j)
// for the particles of one slice; depends only on the (w, b) marginal.
// points: N x d row-major.
KernelMatrix k1_matrix(const ParameterMeasure& mu, int slice, Activation act,
                       const double* points, int N);

// Block (a,c) = k1(x^a,x^c) I_d + (1/m) sum_j s'_a s'_c (x^a.x^c + 1) u_j u_j^T
// with s'_a = sigma'(w_j.x^a + b_j); equals the average of the outer products
// of the per-particle parameter Jacobians.
KernelMatrix full_kernel_matrix(const ParameterMeasure& mu, int slice,
                                Activation act, const double* points, int N);

// Mean over slices of lambda_min of the k1 matrix on the flow nodes x(s_k).
double lambda0(const ParameterMeasure& mu, Activation act,
               const FlowState& flow);

// Closed-form kernels of the cosine-activation feature average with
// b ~ U([0, pi]): entries (1/2) E_w[cos(w.(x-y))]. The 1/2 prefactor comes
// from the bias average and is kept here; some conventions normalize it
// away. gaussian: (1/2) exp(-rho^2 ||x-y||^2 / 2). matern: radial inverse
// Fourier transform of (1+||w||^2)^{-nu}, normalized so k(x,x) = 1/2,
// integrated adaptively on [0, 50/max||x-y||].
// Throws ConfigError on invalid spectral parameters, NumericalError when
// the matern quadrature fails to converge.
KernelMatrix fourier_kernel(const double* points, int N, int d,
                            const Spectral& spec);

// The squared gradient norm written as the kernel quadratic form
// (1/S) sum_k (1/N^2) <p(s_{k+1}), K_k p(s_{k+1})> with K_k the full kernel
// on the nodes x(s_k). Agrees with grad_norm_sq(gradient(...)) to 1e-9
// relative; the two paths share no code past the flow and adjoint.
double grad_norm_sq_kernel_form(const ParameterMeasure& mu, Activation act,
                                const FlowState& flow,
                                const AdjointState& adj);

}  // namespace cotflow
