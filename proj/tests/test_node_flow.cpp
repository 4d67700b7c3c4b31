#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotflow/dataset.hpp"
#include "cotflow/errors.hpp"
#include "cotflow/init.hpp"
#include "cotflow/measure.hpp"
#include "cotflow/node_flow.hpp"
#include "cotflow/rng.hpp"

using namespace cotflow;

namespace {

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Deterministic shared fixture: S=3, m=2, d=2, N=2 tanh instance with
// integer-formula parameters, pinned against an independent implementation.
ParameterMeasure frozen_measure() {
  auto mu = ParameterMeasure::zeros(3, 2, 2, 0);
  for (std::size_t t = 0; t < mu.theta.size(); ++t)
    mu.theta[t] =
        0.05 * (static_cast<double>((t * 2654435761ull) % 97) - 48.0);
  return mu;
}

Dataset frozen_dataset() {
  Dataset data;
  data.N = 2;
  data.d = 2;
  data.d_out = 2;
  for (int i = 0; i < data.N; ++i)
    for (int c = 0; c < data.d; ++c) {
      data.xs.push_back(0.1 * (i + 1) + 0.3 * c - 0.25);
      data.ys.push_back(0.2 * (i + 1) - 0.15 * c);
    }
  return data;
}

Dataset random_dataset(int N, int d, int d_out, std::uint64_t seed) {
  Dataset data;
  data.N = N;
  data.d = d;
  data.d_out = d_out;
  CounterRng r(seed, 0, 0);
  for (int i = 0; i < N * d; ++i) data.xs.push_back(r.normal());
  for (int i = 0; i < N * d_out; ++i) data.ys.push_back(r.normal());
  return data;
}

// Random cloud with nonzero outer weights so every gradient block is active.
ParameterMeasure random_measure(int S, int m, int d, std::uint64_t seed) {
  auto mu = init_fixup(S, m, d, Activation::Tanh, FeatureDist::gaussian(1.0), seed);
  CounterRng r(seed ^ 0xabcdef, 0, 0);
  for (int k = 0; k < S; ++k)
    for (int j = 0; j < m; ++j)
      for (int c = 0; c < d; ++c) mu.particle(k, j)[c] = 0.5 * r.normal();
  return mu;
}

}  // namespace

TEST_CASE("fixup initialization gives the identity flow") {
  const auto mu =
      init_fixup(8, 4, 2, Activation::Tanh, FeatureDist::gaussian(1.0), 21);
  const auto data = random_dataset(5, 2, 2, 22);
  const auto flow = forward(mu, Activation::Tanh, data);
  for (int i = 0; i < data.N; ++i)
    for (int k = 0; k <= mu.S; ++k)
      for (int c = 0; c < mu.d; ++c)
        CHECK(flow.at(i, k)[c] == data.x(i)[c]);  // exactly, F == 0

  // risk reduces to the input-target distance
  double expect = 0.0;
  for (int i = 0; i < data.N; ++i)
    for (int c = 0; c < 2; ++c) {
      const double r = data.x(i)[c] - data.y(i)[c];
      expect += r * r;
    }
  expect /= 2.0 * data.N;
  CHECK(risk(flow, data) == doctest::Approx(expect).epsilon(1e-15));

  // zero Jacobian: adjoint constant in s, resolvent identically I
  const auto adj = adjoint(mu, Activation::Tanh, flow, data);
  for (int i = 0; i < data.N; ++i)
    for (int k = 0; k <= mu.S; ++k)
      for (int c = 0; c < mu.d; ++c)
        CHECK(adj.at(i, k)[c] == adj.at(i, mu.S)[c]);
  const auto res = resolvent(mu, Activation::Tanh, flow, 0);
  CHECK(res.max_condition == doctest::Approx(1.0).epsilon(1e-12));
  for (int k = 0; k <= mu.S; ++k)
    for (int a = 0; a < mu.d; ++a)
      for (int b = 0; b < mu.d; ++b)
        CHECK(res.at(k)[a * mu.d + b] == (a == b ? 1.0 : 0.0));
}

TEST_CASE("fixup gradient only moves outer weights") {
  const auto mu =
      init_fixup(4, 3, 2, Activation::Tanh, FeatureDist::gaussian(1.0), 31);
  const auto data = random_dataset(4, 2, 2, 32);
  const auto field = gradient(mu, Activation::Tanh, data);
  const int d = mu.d;
  for (int k = 0; k < mu.S; ++k)
    for (int j = 0; j < mu.m; ++j) {
      const double* g = field.at(k, j);
      for (int c = 0; c < d; ++c) CHECK(g[d + c] == 0.0);
      CHECK(g[2 * d] == 0.0);
      // u block: (1/N) sum_i sigma(w.x^i + b) (x^i - y^i)
      const double* th = mu.particle(k, j);
      for (int c = 0; c < d; ++c) {
        double expect = 0.0;
        for (int i = 0; i < data.N; ++i) {
          double z = th[2 * d];
          for (int e = 0; e < d; ++e) z += th[d + e] * data.x(i)[e];
          expect += std::tanh(z) * (data.x(i)[c] - data.y(i)[c]);
        }
        expect /= data.N;
        CHECK(g[c] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
}

TEST_CASE("doubling the residual doubles adjoint and gradient at fixed flow") {
  const auto mu =
      init_fixup(4, 3, 2, Activation::Tanh, FeatureDist::gaussian(1.0), 41);
  auto data = random_dataset(3, 2, 2, 42);
  const auto flow = forward(mu, Activation::Tanh, data);
  const auto g1 = gradient(mu, Activation::Tanh, data);

  // y -> 2y - x(1) maps residual r to 2r; under the identity flow the
  // trajectory is unchanged, so everything is exactly linear in p.
  Dataset data2 = data;
  for (int i = 0; i < data.N; ++i)
    for (int c = 0; c < data.d_out; ++c)
      data2.y(i)[c] = 2.0 * data.y(i)[c] - flow.at(i, flow.S)[c];
  const auto g2 = gradient(mu, Activation::Tanh, data2);
  for (std::size_t t = 0; t < g1.g.size(); ++t)
    CHECK(g2.g[t] == doctest::Approx(2.0 * g1.g[t]).epsilon(1e-14));
  CHECK(g2.norm_sq == doctest::Approx(4.0 * g1.norm_sq).epsilon(1e-13));
}

TEST_CASE("frozen tanh instance reproduces pinned values") {
  const auto mu = frozen_measure();
  const auto data = frozen_dataset();
  const auto flow = forward(mu, Activation::Tanh, data);

  CHECK(close(flow.at(0, 3)[0], -0.70960850883173787, 1e-14));
  CHECK(close(flow.at(0, 3)[1], -0.26406013877674478, 1e-14));
  CHECK(close(risk(flow, data), 0.59137201303577991, 1e-14));

  const auto adj = adjoint(mu, Activation::Tanh, flow, data);
  CHECK(close(adj.at(0, 0)[0], -0.22552258001415326, 1e-13));
  CHECK(close(adj.at(0, 0)[1], 0.28072732210886747, 1e-13));

  const auto field = gradient(mu, Activation::Tanh, data);
  const double expect_g00[5] = {0.012514457082348029, 0.012339868183169561,
                                -0.032921710487667961, 0.1524524070890719,
                                0.61791372525579957};
  for (int c = 0; c < 5; ++c) CHECK(close(field.at(0, 0)[c], expect_g00[c], 1e-12));
  CHECK(close(field.norm_sq, 2.1088004082624723, 1e-13));
  CHECK(close(grad_norm_sq(field), field.norm_sq, 1e-15));
}

TEST_CASE("risk arithmetic") {
  FlowState flow;
  flow.N = 2;
  flow.S = 1;
  flow.d = 2;
  flow.x = {0, 0, 1, 0, 0, 0, 0, 2};  // terminal states (1,0) and (0,2)
  Dataset data;
  data.N = 2;
  data.d = 2;
  data.d_out = 2;
  data.xs = {0, 0, 0, 0};
  data.ys = {0, 0, 0, 0};
  CHECK(risk(flow, data) == doctest::Approx(1.25).epsilon(1e-15));

  data.ys = {1, 0, 0, 2};  // perfect fit
  CHECK(risk(flow, data) == 0.0);
}

TEST_CASE("single-slice forward is one explicit step") {
  auto mu = ParameterMeasure::zeros(1, 2, 2);
  const double u[2][2] = {{0.3, -0.2}, {0.1, 0.4}};
  const double w[2][2] = {{1.0, 0.5}, {-0.7, 0.2}};
  const double b[2] = {0.1, -0.3};
  for (int j = 0; j < 2; ++j) {
    double* th = mu.particle(0, j);
    th[0] = u[j][0];
    th[1] = u[j][1];
    th[2] = w[j][0];
    th[3] = w[j][1];
    th[4] = b[j];
  }
  Dataset data;
  data.N = 1;
  data.d = 2;
  data.d_out = 2;
  data.xs = {0.6, -0.4};
  data.ys = {0, 0};
  const auto flow = forward(mu, Activation::Tanh, data);
  for (int c = 0; c < 2; ++c) {
    double expect = data.xs[c];
    for (int j = 0; j < 2; ++j) {
      const double z = w[j][0] * 0.6 + w[j][1] * -0.4 + b[j];
      expect += 0.5 * u[j][c] * std::tanh(z);
    }
    CHECK(flow.at(0, 1)[c] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("linear scalar flow matches the exponential closed form") {
  // one particle u=w=1, b=0, identity activation: x(1) = (1+h)^S x -> e x
  Dataset data;
  data.N = 1;
  data.d = 1;
  data.d_out = 1;
  data.xs = {0.8};
  data.ys = {0.1};
  for (int S : {8, 16, 32, 64}) {
    auto mu = ParameterMeasure::zeros(S, 1, 1);
    for (int k = 0; k < S; ++k) {
      mu.particle(k, 0)[0] = 1.0;  // u
      mu.particle(k, 0)[1] = 1.0;  // w
    }
    const auto flow = forward(mu, Activation::Identity, data);
    const double h = 1.0 / S;
    const double euler = std::pow(1.0 + h, S) * 0.8;
    CHECK(flow.at(0, S)[0] == doctest::Approx(euler).epsilon(1e-13));
    CHECK(std::abs(flow.at(0, S)[0] - std::exp(1.0) * 0.8) <= 3.0 / S);

    // adjoint: p(s_k) = (1+h)^{S-k} (x(1) - y)
    const auto adj = adjoint(mu, Activation::Identity, flow, data);
    const double pS = flow.at(0, S)[0] - 0.1;
    for (int k = 0; k <= S; ++k)
      CHECK(adj.at(0, k)[0] ==
            doctest::Approx(std::pow(1.0 + h, S - k) * pS).epsilon(1e-12));
    CHECK(std::abs(adj.at(0, 0)[0] - std::exp(1.0) * pS) <=
          3.0 / S * std::abs(pS) * std::exp(1.0));

    // resolvent: Phi(s_k) = (1+h)^k
    const auto res = resolvent(mu, Activation::Identity, flow, 0);
    for (int k = 0; k <= S; ++k)
      CHECK(res.at(k)[0] == doctest::Approx(std::pow(1.0 + h, k)).epsilon(1e-12));

    // RK4 reproduces e within per-slice fourth-order error
    const auto rk4 = forward(mu, Activation::Identity, data, Scheme::RK4);
    CHECK(std::abs(rk4.at(0, S)[0] - std::exp(1.0) * 0.8) <= 1.0 / (S * S * S));
    CHECK(std::abs(rk4.at(0, S)[0] - flow.at(0, S)[0]) <= 3.0 / S);
  }
}

TEST_CASE("gradient matches central finite differences") {
  for (std::uint64_t seed : {101, 102, 103}) {
    auto mu = random_measure(4, 3, 2, seed);
    const auto data = random_dataset(3, 2, 2, seed + 1000);
    const auto field = gradient(mu, Activation::Tanh, data);
    const double scale = static_cast<double>(mu.S) * mu.m;
    const double eps = 1e-5;
    for (std::size_t t = 0; t < mu.theta.size(); ++t) {
      const double saved = mu.theta[t];
      mu.theta[t] = saved + eps;
      const double lp = risk(forward(mu, Activation::Tanh, data), data);
      mu.theta[t] = saved - eps;
      const double lm = risk(forward(mu, Activation::Tanh, data), data);
      mu.theta[t] = saved;
      const double fd = (lp - lm) / (2 * eps);
      const double ana = field.g[t] / scale;
      CHECK(std::abs(fd - ana) <=
            1e-6 * std::max({1e-2, std::abs(fd), std::abs(ana)}));
    }
  }
}

TEST_CASE("adjoint at s=0 is the input-gradient of the loss") {
  auto mu = random_measure(6, 3, 2, 201);
  auto data = random_dataset(3, 2, 2, 202);
  const auto flow = forward(mu, Activation::Tanh, data);
  const auto adj = adjoint(mu, Activation::Tanh, flow, data);
  const double eps = 1e-5;
  for (int i = 0; i < data.N; ++i) {
    for (int c = 0; c < data.d; ++c) {
      const double saved = data.x(i)[c];
      auto loss_at = [&](double v) {
        data.x(i)[c] = v;
        const auto f = forward(mu, Activation::Tanh, data);
        const double* xT = f.at(i, f.S);
        double l = 0.0;
        for (int e = 0; e < data.d_out; ++e) {
          const double r = xT[e] - data.y(i)[e];
          l += 0.5 * r * r;
        }
        return l;
      };
      const double fd = (loss_at(saved + eps) - loss_at(saved - eps)) / (2 * eps);
      data.x(i)[c] = saved;
      CHECK(close(adj.at(i, 0)[c], fd, 1e-6));
    }
  }
}

TEST_CASE("resolvent-based adjoint equals the recursive adjoint") {
  const auto mu = random_measure(16, 3, 3, 301);
  const auto data = random_dataset(2, 3, 3, 302);
  const auto flow = forward(mu, Activation::Tanh, data);
  const auto adj = adjoint(mu, Activation::Tanh, flow, data);
  for (int i = 0; i < data.N; ++i) {
    const auto res = resolvent(mu, Activation::Tanh, flow, i);
    const auto p = resolvent_adjoint(res, adj.at(i, flow.S), flow.d);
    for (int k = 0; k <= flow.S; ++k)
      for (int c = 0; c < flow.d; ++c)
        CHECK(close(p[static_cast<std::size_t>(k) * flow.d + c],
                    adj.at(i, k)[c], 1e-10));
  }
}

TEST_CASE("descent step dissipates at the squared-gradient rate") {
  // L(mu) - L(mu - eta g) = eta ||grad||^2 + O(eta^2): remainder is second
  // order, shrinking by about 4x when eta halves.
  const auto mu = random_measure(4, 3, 2, 401);
  const auto data = random_dataset(3, 2, 2, 402);
  const auto field = gradient(mu, Activation::Tanh, data);
  const double L0 = risk(forward(mu, Activation::Tanh, data), data);
  auto remainder = [&](double eta) {
    auto stepped = mu;
    for (std::size_t t = 0; t < stepped.theta.size(); ++t)
      stepped.theta[t] -= eta * field.g[t];
    const double L1 = risk(forward(stepped, Activation::Tanh, data), data);
    return std::abs(L0 - L1 - eta * field.norm_sq);
  };
  const double r1 = remainder(1e-3);
  const double r2 = remainder(5e-4);
  CHECK(r1 < 1e-3 * field.norm_sq);  // truly second order
  CHECK(r1 / r2 > 2.5);
  CHECK(r1 / r2 < 6.0);
}

TEST_CASE("lifted loss only reads the trailing coordinates") {
  const auto base = random_dataset(3, 2, 1, 501);
  const auto lifted = lift(base, 2.0);
  const auto mu = random_measure(4, 3, 3, 502);
  const auto flow = forward(mu, Activation::Tanh, lifted.data);
  const auto loss = lifted.loss();

  double expect = 0.0;
  for (int i = 0; i < base.N; ++i) {
    const double r = 2.0 * flow.at(i, flow.S)[2] - base.y(i)[0];
    expect += 0.5 * r * r;
  }
  expect /= base.N;
  CHECK(risk(flow, lifted.data, loss) == doctest::Approx(expect).epsilon(1e-14));

  const auto term = terminal_gradient(flow, lifted.data, loss);
  for (int i = 0; i < base.N; ++i) {
    CHECK(term[i * 3 + 0] == 0.0);
    CHECK(term[i * 3 + 1] == 0.0);
    const double r = 2.0 * (2.0 * flow.at(i, flow.S)[2] - base.y(i)[0]);
    CHECK(term[i * 3 + 2] == doctest::Approx(r).epsilon(1e-14));
  }
}

TEST_CASE("lifted gradient matches finite differences") {
  const auto base = random_dataset(2, 2, 1, 601);
  const auto lifted = lift(base, 3.0);
  auto mu = random_measure(3, 2, 3, 602);
  const auto loss = lifted.loss();
  const auto field = gradient(mu, Activation::Tanh, lifted.data, loss);
  const double scale = static_cast<double>(mu.S) * mu.m;
  const double eps = 1e-5;
  for (std::size_t t = 0; t < mu.theta.size(); ++t) {
    const double saved = mu.theta[t];
    mu.theta[t] = saved + eps;
    const double lp = risk(forward(mu, Activation::Tanh, lifted.data),
                           lifted.data, loss);
    mu.theta[t] = saved - eps;
    const double lm = risk(forward(mu, Activation::Tanh, lifted.data),
                           lifted.data, loss);
    mu.theta[t] = saved;
    const double fd = (lp - lm) / (2 * eps);
    CHECK(std::abs(fd - field.g[t] / scale) <=
          1e-6 * std::max(1e-2, std::abs(fd)));
  }
}

TEST_CASE("forward respects the growth envelope") {
  const auto mu = random_measure(8, 4, 2, 701);
  const auto data = random_dataset(4, 2, 2, 702);
  const auto flow = forward(mu, Activation::Tanh, data);
  const double C = activation_bound(Activation::Tanh);
  const double budget = C * (1.0 + energy(mu));
  for (int i = 0; i < data.N; ++i) {
    double x0 = 0.0;
    for (int c = 0; c < 2; ++c) x0 += data.x(i)[c] * data.x(i)[c];
    const double cap = std::exp(budget) * (std::sqrt(x0) + budget);
    for (int k = 0; k <= flow.S; ++k) {
      double sq = 0.0;
      for (int c = 0; c < 2; ++c) sq += flow.at(i, k)[c] * flow.at(i, k)[c];
      CHECK(std::sqrt(sq) <= 1.01 * cap);
    }
  }
}

TEST_CASE("overflowing trajectories fail with a located diagnostic") {
  auto mu = ParameterMeasure::zeros(4, 1, 1);
  for (int k = 0; k < 4; ++k) {
    mu.particle(k, 0)[0] = 1e200;  // u
    mu.particle(k, 0)[1] = 1e200;  // w
  }
  Dataset data;
  data.N = 1;
  data.d = 1;
  data.d_out = 1;
  data.xs = {1.0};
  data.ys = {0.0};
  try {
    forward(mu, Activation::Identity, data);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const auto diag = nlohmann::json::parse(e.diagnostic);
    CHECK(diag["error"] == "non_finite_state");
    CHECK(diag["sample"] == 0);
    CHECK(diag.contains("slice"));
  }
}

TEST_CASE("expanding-contracting flows trip the resolvent conditioning guard") {
  // diag(a, -a) field with h*a = 2: cond Phi(s_k) = 3^k, passes 1e12 by k=26
  const int S = 30;
  const double a = 60.0;
  auto mu = ParameterMeasure::zeros(S, 2, 2);
  for (int k = 0; k < S; ++k) {
    double* p0 = mu.particle(k, 0);  // u = a e1, w = e1
    p0[0] = a;
    p0[2] = 1.0;
    double* p1 = mu.particle(k, 1);  // u = -a e2, w = e2
    p1[1] = -a;
    p1[3] = 1.0;
  }
  Dataset data;
  data.N = 1;
  data.d = 2;
  data.d_out = 2;
  data.xs = {1e-4, 1e-4};
  data.ys = {0.0, 0.0};
  // field is (1/m) sum, so double u to get diag(a, -a)
  for (int k = 0; k < S; ++k) {
    mu.particle(k, 0)[0] *= 2;
    mu.particle(k, 1)[1] *= 2;
  }
  const auto flow = forward(mu, Activation::Identity, data);
  CHECK_THROWS_AS(resolvent(mu, Activation::Identity, flow, 0), NumericalError);
}

TEST_CASE("flow dump uses the length-prefixed container layout") {
  const auto mu = random_measure(3, 2, 2, 801);
  const auto data = random_dataset(2, 2, 2, 802);
  const auto flow = forward(mu, Activation::Tanh, data);
  const std::string path =
      (std::filesystem::temp_directory_path() / "cotflow_flow_dump.bin").string();
  dump_flow(flow, path);

  std::ifstream in(path, std::ios::binary);
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto header = nlohmann::json::parse(line);
  CHECK(header["N"] == flow.N);
  CHECK(header["S"] == flow.S);
  CHECK(header["d"] == flow.d);
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(payload.size() == flow.x.size() * sizeof(double));
  std::remove(path.c_str());
}

TEST_CASE("forward validates shapes") {
  const auto mu = random_measure(2, 2, 3, 901);
  const auto data = random_dataset(2, 2, 2, 902);  // d mismatch
  CHECK_THROWS_AS(forward(mu, Activation::Tanh, data), ConfigError);
}
