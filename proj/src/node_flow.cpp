#include "cotflow/node_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include <json.hpp>

#include "cotflow/errors.hpp"
#include "cotflow/parallel.hpp"

namespace cotflow {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MapVec = Eigen::Map<VectorXd>;
using MapConstVec = Eigen::Map<const VectorXd>;
using MapMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>;
using MapConstMat =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

[[noreturn]] void throw_nonfinite(const char* where, int sample, int slice) {
  nlohmann::json diag{{"error", "non_finite_state"},
                      {"where", where},
                      {"sample", sample},
                      {"slice", slice}};
  throw NumericalError("non-finite state in " + std::string(where), diag.dump());
}

[[noreturn]] void throw_growth(int sample, int slice, double norm, double cap) {
  nlohmann::json diag{{"error", "growth_bound_violated"},
                      {"sample", sample},
                      {"slice", slice},
                      {"norm", norm},
                      {"bound", cap}};
  throw NumericalError("flow growth bound violated", diag.dump());
}

// Field of one frozen slice: F(x) = (1/m) sum_j u_j sigma(w_j.x + b_j).
void eval_field(const ParameterMeasure& mu, Activation act, int k,
                const double* x, double* out) {
  const int d = mu.d;
  std::fill(out, out + d, 0.0);
  MapConstVec xv(x, d);
  for (int j = 0; j < mu.m; ++j) {
    const double* th = mu.particle(k, j);
    MapConstVec u(th, d);
    MapConstVec w(th + d, d);
    const double z = w.dot(xv) + th[2 * d];
    MapVec(out, d) += sigma(act, z) * u;
  }
  MapVec(out, d) /= mu.m;
}

// D_x F(x) = (1/m) sum_j sigma'(z_j) u_j w_j^T, accumulated into jac.
void eval_jacobian(const ParameterMeasure& mu, Activation act, int k,
                   const double* x, MatrixXd& jac) {
  const int d = mu.d;
  jac.setZero(d, d);
  MapConstVec xv(x, d);
  for (int j = 0; j < mu.m; ++j) {
    const double* th = mu.particle(k, j);
    MapConstVec u(th, d);
    MapConstVec w(th + d, d);
    const double z = w.dot(xv) + th[2 * d];
    jac.noalias() += dsigma(act, z) * u * w.transpose();
  }
  jac /= mu.m;
}

}  // namespace

FlowState forward(const ParameterMeasure& mu, Activation act,
                  const Dataset& data, Scheme scheme) {
  if (data.d != mu.d)
    throw ConfigError("dataset dimension " + std::to_string(data.d) +
                      " does not match state dimension " + std::to_string(mu.d));
  FlowState flow;
  flow.N = data.N;
  flow.S = mu.S;
  flow.d = mu.d;
  flow.x.resize(static_cast<std::size_t>(flow.N) * (flow.S + 1) * flow.d);

  const double h = flow.h();
  const double C = activation_bound(act);
  const double E2 = energy(mu);
  // ||x(s)|| <= e^{C(1+E2)} (||x0|| + C(1+E2)) holds for the Euler and RK4
  // iterates alike; 1.01 absorbs rounding.
  const double budget = C * (1.0 + E2);
  const double growth = std::exp(budget);

  parallel_for(flow.N, [&](int i) {
    std::memcpy(flow.at(i, 0), data.x(i), sizeof(double) * flow.d);
    const double cap = 1.01 * growth * (MapConstVec(data.x(i), flow.d).norm() + budget);
    std::vector<double> f(flow.d), tmp(flow.d), acc(flow.d);
    for (int k = 0; k < flow.S; ++k) {
      const double* xk = flow.at(i, k);
      double* xn = flow.at(i, k + 1);
      if (scheme == Scheme::Euler) {
        eval_field(mu, act, k, xk, f.data());
        for (int c = 0; c < flow.d; ++c) xn[c] = xk[c] + h * f[c];
      } else {
        // classic RK4 on the slice-frozen field
        eval_field(mu, act, k, xk, f.data());
        for (int c = 0; c < flow.d; ++c) acc[c] = f[c];
        for (int c = 0; c < flow.d; ++c) xn[c] = xk[c] + 0.5 * h * f[c];
        eval_field(mu, act, k, xn, tmp.data());
        for (int c = 0; c < flow.d; ++c) acc[c] += 2.0 * tmp[c];
        for (int c = 0; c < flow.d; ++c) xn[c] = xk[c] + 0.5 * h * tmp[c];
        eval_field(mu, act, k, xn, tmp.data());
        for (int c = 0; c < flow.d; ++c) acc[c] += 2.0 * tmp[c];
        for (int c = 0; c < flow.d; ++c) xn[c] = xk[c] + h * tmp[c];
        eval_field(mu, act, k, xn, tmp.data());
        for (int c = 0; c < flow.d; ++c) acc[c] += tmp[c];
        for (int c = 0; c < flow.d; ++c) xn[c] = xk[c] + (h / 6.0) * acc[c];
      }
      const double nrm = MapConstVec(xn, flow.d).norm();
      if (!std::isfinite(nrm)) throw_nonfinite("forward", i, k + 1);
      if (nrm > cap) throw_growth(i, k + 1, nrm, cap);
    }
  });
  return flow;
}

double risk(const FlowState& flow, const Dataset& data, const Loss& loss) {
  if (data.N != flow.N) throw ConfigError("risk: sample count mismatch");
  double total = 0.0;
  std::vector<double> out(data.d_out);
  for (int i = 0; i < flow.N; ++i) {
    const double* xT = flow.at(i, flow.S);
    if (loss.lifted) {
      // out = alpha * B x(1): the trailing d_out coordinates.
      for (int c = 0; c < data.d_out; ++c)
        out[c] = loss.alpha * xT[flow.d - data.d_out + c];
    } else {
      if (data.d_out != flow.d) throw ConfigError("risk: output dimension mismatch");
      for (int c = 0; c < data.d_out; ++c) out[c] = xT[c];
    }
    const double* y = data.y(i);
    for (int c = 0; c < data.d_out; ++c) {
      const double r = out[c] - y[c];
      total += r * r;
    }
  }
  return total / (2.0 * flow.N);
}

std::vector<double> terminal_gradient(const FlowState& flow, const Dataset& data,
                                      const Loss& loss) {
  std::vector<double> g(static_cast<std::size_t>(flow.N) * flow.d, 0.0);
  for (int i = 0; i < flow.N; ++i) {
    const double* xT = flow.at(i, flow.S);
    const double* y = data.y(i);
    double* gi = g.data() + static_cast<std::size_t>(i) * flow.d;
    if (loss.lifted) {
      // alpha B^T (alpha B x - y): only the trailing block is nonzero.
      const int off = flow.d - data.d_out;
      for (int c = 0; c < data.d_out; ++c)
        gi[off + c] = loss.alpha * (loss.alpha * xT[off + c] - y[c]);
    } else {
      for (int c = 0; c < flow.d; ++c) gi[c] = xT[c] - y[c];
    }
  }
  return g;
}

AdjointState adjoint(const ParameterMeasure& mu, Activation act,
                     const FlowState& flow, const Dataset& data,
                     const Loss& loss) {
  AdjointState adj;
  adj.N = flow.N;
  adj.S = flow.S;
  adj.d = flow.d;
  adj.p.resize(flow.x.size());
  const std::vector<double> term = terminal_gradient(flow, data, loss);
  const double h = flow.h();
  const int d = flow.d;

  parallel_for(flow.N, [&](int i) {
    std::memcpy(adj.at(i, flow.S), term.data() + static_cast<std::size_t>(i) * d,
                sizeof(double) * d);
    MatrixXd jac(d, d);
    for (int k = flow.S - 1; k >= 0; --k) {
      eval_jacobian(mu, act, k, flow.at(i, k), jac);
      MapConstVec pn(adj.at(i, k + 1), d);
      MapVec pk(adj.at(i, k), d);
      pk = pn + h * jac.transpose() * pn;
      if (!pk.allFinite()) throw_nonfinite("adjoint", i, k);
    }
  });
  return adj;
}

Resolvent resolvent(const ParameterMeasure& mu, Activation act,
                    const FlowState& flow, int sample_index) {
  if (sample_index < 0 || sample_index >= flow.N)
    throw ConfigError("resolvent: sample index out of range");
  const int d = flow.d;
  Resolvent res;
  res.S = flow.S;
  res.d = d;
  res.phi.resize(static_cast<std::size_t>(flow.S + 1) * d * d);
  MapMat(res.at(0), d, d) = MatrixXd::Identity(d, d);

  const double h = flow.h();
  MatrixXd jac(d, d);
  for (int k = 0; k < flow.S; ++k) {
    eval_jacobian(mu, act, k, flow.at(sample_index, k), jac);
    MapConstMat prev(res.at(k), d, d);
    MapMat next(res.at(k + 1), d, d);
    next = prev + h * jac * prev;
    Eigen::JacobiSVD<MatrixXd> svd(next);
    const double smin = svd.singularValues()(d - 1);
    const double cond = smin > 0.0 ? svd.singularValues()(0) / smin
                                   : std::numeric_limits<double>::infinity();
    res.max_condition = std::max(res.max_condition, cond);
    if (!(cond < 1e12)) {
      nlohmann::json diag{{"error", "resolvent_ill_conditioned"},
                          {"sample", sample_index},
                          {"slice", k + 1},
                          {"condition", cond}};
      throw NumericalError("resolvent condition number exceeds 1e12", diag.dump());
    }
  }
  return res;
}

std::vector<double> resolvent_adjoint(const Resolvent& res,
                                      const double* terminal, int d) {
  if (d != res.d) throw ConfigError("resolvent_adjoint: dimension mismatch");
  std::vector<double> p(static_cast<std::size_t>(res.S + 1) * d);
  MapConstMat phiT(res.at(res.S), d, d);
  const VectorXd w = phiT.transpose() * MapConstVec(terminal, d);
  for (int k = 0; k <= res.S; ++k) {
    MapConstMat phik(res.at(k), d, d);
    // p(s_k) = Phi_k^{-T} Phi_S^T p(1)
    MapVec(p.data() + static_cast<std::size_t>(k) * d, d) =
        phik.transpose().partialPivLu().solve(w);
  }
  return p;
}

GradientField gradient_from_states(const ParameterMeasure& mu, Activation act,
                                   const FlowState& flow,
                                   const AdjointState& adj) {
  GradientField field;
  field.S = mu.S;
  field.m = mu.m;
  field.d = mu.d;
  field.g.assign(mu.theta.size(), 0.0);
  const int d = mu.d;
  const int N = flow.N;

  parallel_for(mu.S, [&](int k) {
    for (int j = 0; j < mu.m; ++j) {
      const double* th = mu.particle(k, j);
      MapConstVec u(th, d);
      MapConstVec w(th + d, d);
      const double b = th[2 * d];
      double* g = field.at(k, j);
      MapVec gu(g, d);
      MapVec gw(g + d, d);
      double& gb = g[2 * d];
      for (int i = 0; i < N; ++i) {
        MapConstVec x(flow.at(i, k), d);
        MapConstVec p(adj.at(i, k + 1), d);  // exact pairing for Euler risk
        const double z = w.dot(x) + b;
        const double up = u.dot(p);
        const double ds = dsigma(act, z) * up;
        gu += sigma(act, z) * p;
        gw += ds * x;
        gb += ds;
      }
      gu /= N;
      gw /= N;
      gb /= N;
    }
  });
  field.norm_sq = grad_norm_sq(field);
  return field;
}

GradientField gradient(const ParameterMeasure& mu, Activation act,
                       const Dataset& data, const Loss& loss) {
  const FlowState flow = forward(mu, act, data);
  const AdjointState adj = adjoint(mu, act, flow, data, loss);
  return gradient_from_states(mu, act, flow, adj);
}

double grad_norm_sq(const GradientField& field) {
  double total = 0.0;
  for (double v : field.g) total += v * v;
  return total / (static_cast<double>(field.S) * field.m);
}

void dump_flow(const FlowState& flow, const std::string& path) {
  nlohmann::json header{{"version", 1},
                        {"N", flow.N},
                        {"S", flow.S},
                        {"d", flow.d}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(flow.x.data()),
            static_cast<std::streamsize>(flow.x.size() * sizeof(double)));
  if (!out) throw ConfigError("write failed for " + path);
}

}  // namespace cotflow
