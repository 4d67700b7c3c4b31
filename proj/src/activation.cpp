#include "cotflow/activation.hpp"

#include <cmath>

#include "cotflow/errors.hpp"

namespace cotflow {

namespace {

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// sup|sigma'| over [-50, 50]; both gelu' and swish' flatten to {0,1} well
// inside that window, so the grid max is the global sup.
double grid_sup_dsigma(Activation act) {
  const int n = 2'000'000;
  double sup = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = -50.0 + 100.0 * static_cast<double>(i) / n;
    sup = std::max(sup, std::abs(dsigma(act, z)));
  }
  return sup;
}

}  // namespace

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "gelu") return Activation::Gelu;
  if (name == "swish") return Activation::Swish;
  if (name == "cos") return Activation::Cos;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation: " + std::string(name));
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Tanh: return "tanh";
    case Activation::Gelu: return "gelu";
    case Activation::Swish: return "swish";
    case Activation::Cos: return "cos";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

double sigma(Activation act, double z) {
  switch (act) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Gelu: return z * norm_cdf(z);
    case Activation::Swish: return z * sigmoid(z);
    case Activation::Cos: return std::cos(z);
    case Activation::Identity: return z;
  }
  return 0.0;
}

double dsigma(Activation act, double z) {
  switch (act) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Gelu: return norm_cdf(z) + z * norm_pdf(z);
    case Activation::Swish: {
      const double s = sigmoid(z);
      return s + z * s * (1.0 - s);
    }
    case Activation::Cos: return -std::sin(z);
    case Activation::Identity: return 1.0;
  }
  return 0.0;
}

double ddsigma(Activation act, double z) {
  switch (act) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Gelu: return norm_pdf(z) * (2.0 - z * z);
    case Activation::Swish: {
      const double s = sigmoid(z);
      return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
    }
    case Activation::Cos: return -std::cos(z);
    case Activation::Identity: return 0.0;
  }
  return 0.0;
}

double activation_bound(Activation act) {
  switch (act) {
    case Activation::Tanh: return 1.0;      // |tanh(0)| + 1
    case Activation::Cos: return 2.0;       // |cos(0)| + 1
    case Activation::Identity: return 1.0;  // 0 + 1
    case Activation::Gelu: {
      static const double m = grid_sup_dsigma(Activation::Gelu);
      return m;  // sigma(0) = 0
    }
    case Activation::Swish: {
      static const double m = grid_sup_dsigma(Activation::Swish);
      return m;  // sigma(0) = 0
    }
  }
  return 1.0;
}

}  // namespace cotflow
