#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cotflow/dataset.hpp"
#include "cotflow/measure.hpp"
#include "cotflow/node_flow.hpp"

namespace cotflow {

// Explicit Euler on particle positions in optimization time. The adaptive
// rule halves eta when a step raises the loss (the step is rejected) and
// restores by 1.1x after ten clean accepts, never above eta0. Particles
// keep their slice forever; only theta moves.
struct TrainerConfig {
  double eta0 = 1e-2;
  double t_max = 1.0;
  bool adaptive = true;
  int checkpoint_every = 0;     // accepted steps between checkpoints, 0 = off
  std::string checkpoint_dir;   // required when checkpoint_every > 0
  std::string jsonl_path;       // stream one record per line when set
  std::uint64_t seed = 0;       // recorded in provenance only
  double loss_tol = 1e-10;
  double grad_tol = 1e-12;
  double divergence_factor = 1e6;  // abort when L > factor * L0
  bool monitor_lambda0 = true;     // the one expensive monitor
};

struct StepRecord {
  int step = 0;      // accepted steps so far; record 0 is the initial state
  double t = 0.0;
  double eta = 0.0;  // step size that produced this record
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double energy = 0.0;
  double lambda0 = 0.0;       // NaN when the monitor is disabled
  double ede_residual = 0.0;  // |L0 - L(t) - int ||grad||^2| / L0
  double max_norm = 0.0;      // support radius
  double dist_to_init = 0.0;  // identity-coupling upper bound for d(mu_t, mu_0)
};

struct TrajectoryLog {
  std::vector<StepRecord> records;
  std::string termination;  // t_max | loss_tol | grad_tol | diverged | stalled
  int rejected_steps = 0;
};

struct TrainResult {
  ParameterMeasure mu;
  TrajectoryLog log;
};

// theta^j(s_k) <- theta^j(s_k) - eta g^j(s_k). Throws NumericalError on a
// non-finite update.
ParameterMeasure step(const ParameterMeasure& mu, const GradientField& field,
                      double eta);
ParameterMeasure step(const ParameterMeasure& mu, Activation act,
                      const Dataset& data, const Loss& loss, double eta);

// Runs the descent loop until t_max, loss < loss_tol, or grad norm
// squared < grad_tol. Divergence past divergence_factor * L0 stops the run
// with termination = "diverged" and the log intact.
TrainResult train(const ParameterMeasure& mu0, Activation act,
                  const Dataset& data, const Loss& loss,
                  const TrainerConfig& config);

void write_trajectory_csv(const TrajectoryLog& log, const std::string& path);

// Co-trains perturbed copies of mu0 at each scale and reports the final
// distance amplification d(mu_T, mu_T') / eps. A zero scale is reported as
// ratio 0 with an exact-equality flag instead of 0/0.
struct StabilityReport {
  std::vector<double> scales;
  std::vector<double> ratios;
  std::vector<bool> identical;
};

StabilityReport stability_experiment(const ParameterMeasure& mu0,
                                     Activation act, const Dataset& data,
                                     const Loss& loss,
                                     const std::vector<double>& scales,
                                     double T, const TrainerConfig& base);

// Smallest C with value_t <= exp(C t) (value_0 + C t) over the log, fitted
// by bisection for the energy and the support radius separately. ok means
// both constants are finite.
struct EnvelopeFit {
  double c_energy = 0.0;
  double c_radius = 0.0;
  bool ok = false;
};

EnvelopeFit energy_monitor_check(const TrajectoryLog& log);

}  // namespace cotflow
