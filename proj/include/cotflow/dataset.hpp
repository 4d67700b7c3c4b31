#pragma once

#include <string>
#include <vector>

namespace cotflow {

struct Dataset {
  int N = 0;      // samples
  int d = 0;      // input dimension
  int d_out = 0;  // target dimension
  std::vector<double> xs;  // N*d, row-major
  std::vector<double> ys;  // N*d_out, row-major

  const double* x(int i) const { return xs.data() + static_cast<std::size_t>(i) * d; }
  const double* y(int i) const { return ys.data() + static_cast<std::size_t>(i) * d_out; }
  double* x(int i) { return xs.data() + static_cast<std::size_t>(i) * d; }
  double* y(int i) { return ys.data() + static_cast<std::size_t>(i) * d_out; }
};

// Minimal pairwise input distance. Throws ConfigError for N < 2.
double separation(const Dataset& data);

// Loss convention for risk/adjoint. Plain: 1/2 ||x(1) - y||^2, requires
// d == d_out. Lifted: 1/2 ||alpha * tail(z(1)) - y||^2 where tail takes the
// last d_out state coordinates.
struct Loss {
  bool lifted = false;
  double alpha = 1.0;
};

// Inputs embedded as z = (x, 0) in R^{d + d_out}; the readout projects onto
// the trailing d_out coordinates and scales by alpha. The embedding and
// projection blocks satisfy proj(embed(x)) = 0 for every x.
struct LiftedProblem {
  Dataset data;   // d = base_d + d_out, trailing input coordinates zero
  double alpha = 1.0;
  int base_d = 0;
  Loss loss() const { return Loss{true, alpha}; }
};

LiftedProblem lift(const Dataset& base, double alpha);  // throws if alpha <= 0

// CSV exchange. Header row is required and names the columns x0..x{d-1}
// followed by y0..y{d'-1}; dimensions are inferred from it.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

}  // namespace cotflow
