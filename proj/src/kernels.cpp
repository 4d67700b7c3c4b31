#include "cotflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cotflow/errors.hpp"
#include "cotflow/parallel.hpp"
#include "cotflow/quadrature.hpp"

namespace cotflow {

namespace {

void finalize(KernelMatrix& km) {
  km.entries = (0.5 * (km.entries + km.entries.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(km.entries,
                                                    Eigen::EigenvaluesOnly);
  km.lambda_min = es.eigenvalues().minCoeff();
  km.lambda_max = es.eigenvalues().maxCoeff();
}

// Feature responses sigma(w_j.x^a + b_j), m x N.
Eigen::MatrixXd responses(const ParameterMeasure& mu, int slice,
                          Activation act, const double* points, int N) {
  const int d = mu.d;
  Eigen::MatrixXd phi(mu.m, N);
  for (int j = 0; j < mu.m; ++j) {
    const double* th = mu.particle(slice, j);
    const double* w = th + d;
    const double b = th[2 * d];
    for (int a = 0; a < N; ++a) {
      double z = b;
      for (int c = 0; c < d; ++c) z += w[c] * points[a * d + c];
      phi(j, a) = sigma(act, z);
    }
  }
  return phi;
}

// Spherical average of the plane wave over the radius-1 sphere in R^d,
// evaluated at s = t * ||x - y||. Equals 1 at s = 0.
double omega(int d, double s) {
  if (s < 1e-8) return 1.0 - s * s / (2.0 * d);
  switch (d) {
    case 1:
      return std::cos(s);
    case 2:
      return std::cyl_bessel_j(0.0, s);
    case 3:
      return std::sin(s) / s;
    default:
      return std::tgamma(d / 2.0) * std::pow(2.0 / s, d / 2.0 - 1.0) *
             std::cyl_bessel_j(d / 2.0 - 1.0, s);
  }
}

double matern_radial(int d, double nu, double r, double upper) {
  return adaptive_gk15(
      [d, nu, r](double t) {
        return std::pow(t, d - 1) * std::pow(1.0 + t * t, -nu) *
               omega(d, t * r);
      },
      0.0, upper, 1e-8);
}

}  // namespace

KernelMatrix k1_matrix(const ParameterMeasure& mu, int slice, Activation act,
                       const double* points, int N) {
  if (slice < 0 || slice >= mu.S)
    throw ConfigError("k1_matrix: slice index out of range");
  if (N <= 0) throw ConfigError("k1_matrix: need at least one point");
  KernelMatrix km;
  km.kind = KernelMatrix::Kind::Scalar;
  const Eigen::MatrixXd phi = responses(mu, slice, act, points, N);
  km.entries = phi.transpose() * phi / static_cast<double>(mu.m);
  finalize(km);
  return km;
}

KernelMatrix full_kernel_matrix(const ParameterMeasure& mu, int slice,
                                Activation act, const double* points, int N) {
  if (slice < 0 || slice >= mu.S)
    throw ConfigError("full_kernel_matrix: slice index out of range");
  if (N <= 0) throw ConfigError("full_kernel_matrix: need at least one point");
  const int d = mu.d;
  KernelMatrix km;
  km.kind = KernelMatrix::Kind::Full;
  km.entries = Eigen::MatrixXd::Zero(N * d, N * d);

  Eigen::MatrixXd phi(mu.m, N), dphi(mu.m, N);
  for (int j = 0; j < mu.m; ++j) {
    const double* th = mu.particle(slice, j);
    const double* w = th + d;
    const double b = th[2 * d];
    for (int a = 0; a < N; ++a) {
      double z = b;
      for (int c = 0; c < d; ++c) z += w[c] * points[a * d + c];
      phi(j, a) = sigma(act, z);
      dphi(j, a) = dsigma(act, z);
    }
  }

  const Eigen::MatrixXd k1 = phi.transpose() * phi / static_cast<double>(mu.m);
  for (int a = 0; a < N; ++a) {
    Eigen::Map<const Eigen::VectorXd> xa(points + a * d, d);
    for (int c = 0; c < N; ++c) {
      Eigen::Map<const Eigen::VectorXd> xc(points + c * d, d);
      Eigen::MatrixXd block = k1(a, c) * Eigen::MatrixXd::Identity(d, d);
      const double geo = xa.dot(xc) + 1.0;
      for (int j = 0; j < mu.m; ++j) {
        Eigen::Map<const Eigen::VectorXd> u(mu.particle(slice, j), d);
        block += (dphi(j, a) * dphi(j, c) * geo / mu.m) * (u * u.transpose());
      }
      km.entries.block(a * d, c * d, d, d) = block;
    }
  }
  finalize(km);
  return km;
}

double lambda0(const ParameterMeasure& mu, Activation act,
               const FlowState& flow) {
  if (flow.S != mu.S || flow.d != mu.d)
    throw ConfigError("lambda0: flow and measure shapes differ");
  std::vector<double> slice_min(mu.S);
  parallel_for(mu.S, [&](int k) {
    std::vector<double> pts(static_cast<std::size_t>(flow.N) * flow.d);
    for (int i = 0; i < flow.N; ++i)
      std::copy(flow.at(i, k), flow.at(i, k) + flow.d, &pts[i * flow.d]);
    slice_min[k] = k1_matrix(mu, k, act, pts.data(), flow.N).lambda_min;
  });
  double sum = 0.0;
  for (double v : slice_min) sum += v;
  return sum / mu.S;
}

KernelMatrix fourier_kernel(const double* points, int N, int d,
                            const Spectral& spec) {
  if (N <= 0 || d <= 0)
    throw ConfigError("fourier_kernel: need N >= 1 points in d >= 1");
  KernelMatrix km;
  km.kind = KernelMatrix::Kind::Scalar;
  km.entries.resize(N, N);

  Eigen::MatrixXd dist(N, N);
  double max_dist = 0.0;
  for (int a = 0; a < N; ++a)
    for (int c = 0; c < N; ++c) {
      double r2 = 0.0;
      for (int i = 0; i < d; ++i) {
        const double diff = points[a * d + i] - points[c * d + i];
        r2 += diff * diff;
      }
      dist(a, c) = std::sqrt(r2);
      max_dist = std::max(max_dist, dist(a, c));
    }

  if (spec.kind == Spectral::Kind::Gaussian) {
    if (!(spec.rho > 0.0))
      throw ConfigError("fourier_kernel: gaussian scale must be positive");
    for (int a = 0; a < N; ++a)
      for (int c = 0; c < N; ++c)
        km.entries(a, c) = 0.5 * std::exp(-0.5 * spec.rho * spec.rho *
                                          dist(a, c) * dist(a, c));
  } else {
    if (!(spec.nu > 0.5 * d))
      throw ConfigError("fourier_kernel: matern needs nu > d/2");
    if (max_dist == 0.0) {
      km.entries.setConstant(0.5);
    } else {
      const double upper = 50.0 / max_dist;
      const double norm = matern_radial(d, spec.nu, 0.0, upper);
      for (int a = 0; a < N; ++a)
        for (int c = a; c < N; ++c) {
          const double val =
              dist(a, c) == 0.0
                  ? 0.5
                  : 0.5 * matern_radial(d, spec.nu, dist(a, c), upper) / norm;
          km.entries(a, c) = val;
          km.entries(c, a) = val;
        }
    }
  }
  finalize(km);
  return km;
}

double grad_norm_sq_kernel_form(const ParameterMeasure& mu, Activation act,
                                const FlowState& flow,
                                const AdjointState& adj) {
  if (flow.S != mu.S || flow.d != mu.d)
    throw ConfigError("grad_norm_sq_kernel_form: shape mismatch");
  const int N = flow.N, d = flow.d;
  std::vector<double> per_slice(mu.S);
  parallel_for(mu.S, [&](int k) {
    std::vector<double> pts(static_cast<std::size_t>(N) * d);
    for (int i = 0; i < N; ++i)
      std::copy(flow.at(i, k), flow.at(i, k) + d, &pts[i * d]);
    const KernelMatrix K = full_kernel_matrix(mu, k, act, pts.data(), N);
    Eigen::VectorXd p(N * d);
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < d; ++c) p(i * d + c) = adj.at(i, k + 1)[c];
    per_slice[k] = p.dot(K.entries * p);
  });
  double sum = 0.0;
  for (double v : per_slice) sum += v;
  return sum / (static_cast<double>(mu.S) * N * N);
}

}  // namespace cotflow
