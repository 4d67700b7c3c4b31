#include "cotflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cotflow/checkpoint.hpp"
#include "cotflow/cond_ot.hpp"
#include "cotflow/errors.hpp"
#include "cotflow/kernels.hpp"
#include "cotflow/rng.hpp"

namespace cotflow {

namespace {

void validate(const TrainerConfig& cfg) {
  if (!(cfg.eta0 > 0.0)) throw ConfigError("trainer needs eta0 > 0");
  if (!(cfg.t_max > 0.0)) throw ConfigError("trainer needs t_max > 0");
  if (cfg.checkpoint_every < 0)
    throw ConfigError("checkpoint_every must be non-negative");
  if (cfg.checkpoint_every > 0 && cfg.checkpoint_dir.empty())
    throw ConfigError("checkpointing needs a directory");
  if (!(cfg.divergence_factor > 1.0))
    throw ConfigError("divergence factor must exceed 1");
}

double dist_to_init_bound(const ParameterMeasure& mu,
                          const ParameterMeasure& mu0) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.theta.size(); ++i) {
    const double diff = mu.theta[i] - mu0.theta[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / (static_cast<double>(mu.S) * mu.m));
}

nlohmann::json record_json(const StepRecord& r) {
  return {{"step", r.step},
          {"t", r.t},
          {"eta", r.eta},
          {"loss", r.loss},
          {"grad_norm_sq", r.grad_norm_sq},
          {"energy", r.energy},
          {"lambda0", r.lambda0},
          {"ede_residual", r.ede_residual},
          {"max_norm", r.max_norm},
          {"dist_to_init", r.dist_to_init}};
}

std::string checkpoint_name(const std::string& dir, int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06d.ckpt", step);
  return dir + "/" + buf;
}

// smallest C >= 0 with v_t <= exp(C t)(v_0 + C t) over the series
double fit_envelope(const std::vector<double>& t,
                    const std::vector<double>& v) {
  const double v0 = v.front();
  auto feasible = [&](double c) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double bound = std::exp(c * t[i]) * (v0 + c * t[i]);
      if (!(v[i] <= bound * (1.0 + 1e-9) + 1e-300)) return false;
    }
    return true;
  };
  if (feasible(0.0)) return 0.0;
  double lo = 0.0, hi = 1e6;
  if (!feasible(hi)) return std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

ParameterMeasure step(const ParameterMeasure& mu, const GradientField& field,
                      double eta) {
  if (!(eta > 0.0)) throw ConfigError("step needs eta > 0");
  if (field.S != mu.S || field.m != mu.m || field.d != mu.d)
    throw ConfigError("step: field and measure shapes differ");
  ParameterMeasure out = mu;
  for (std::size_t i = 0; i < out.theta.size(); ++i) {
    out.theta[i] -= eta * field.g[i];
    if (!std::isfinite(out.theta[i]))
      throw NumericalError("non-finite parameter update",
                           "{\"error\":\"non_finite_update\",\"index\":" +
                               std::to_string(i) + "}");
  }
  return out;
}

ParameterMeasure step(const ParameterMeasure& mu, Activation act,
                      const Dataset& data, const Loss& loss, double eta) {
  return step(mu, gradient(mu, act, data, loss), eta);
}

TrainResult train(const ParameterMeasure& mu0, Activation act,
                  const Dataset& data, const Loss& loss,
                  const TrainerConfig& cfg) {
  validate(cfg);

  TrainResult result;
  result.mu = mu0;
  auto& log = result.log;

  std::ofstream jsonl;
  if (!cfg.jsonl_path.empty()) {
    jsonl.open(cfg.jsonl_path, std::ios::trunc);
    if (!jsonl) throw ConfigError("cannot open jsonl sink " + cfg.jsonl_path);
  }

  auto flow = forward(result.mu, act, data);
  double loss_now = risk(flow, data, loss);
  auto adj = adjoint(result.mu, act, flow, data, loss);
  auto field = gradient_from_states(result.mu, act, flow, adj);
  double gns = grad_norm_sq(field);
  const double initial = loss_now;
  double integral = 0.0;  // trapezoid of the logged grad norms in t

  auto append = [&](int stepno, double t, double eta) {
    StepRecord r;
    r.step = stepno;
    r.t = t;
    r.eta = eta;
    r.loss = loss_now;
    r.grad_norm_sq = gns;
    r.energy = energy(result.mu);
    r.lambda0 = cfg.monitor_lambda0
                    ? lambda0(result.mu, act, flow)
                    : std::numeric_limits<double>::quiet_NaN();
    r.ede_residual =
        initial > 0.0 ? std::abs(initial - loss_now - integral) / initial : 0.0;
    r.max_norm = max_particle_norm(result.mu);
    r.dist_to_init = dist_to_init_bound(result.mu, mu0);
    log.records.push_back(r);
    if (jsonl.is_open()) jsonl << record_json(r).dump() << "\n" << std::flush;
  };

  append(0, 0.0, 0.0);
  if (loss_now <= cfg.loss_tol) {
    log.termination = "loss_tol";
    return result;
  }
  if (gns <= cfg.grad_tol) {
    log.termination = "grad_tol";
    return result;
  }

  double eta = cfg.eta0;
  double t = 0.0;
  int accepted = 0, clean = 0;
  while (cfg.t_max - t > 1e-12 * cfg.t_max) {
    const double eta_use = std::min(eta, cfg.t_max - t);
    auto candidate = step(result.mu, field, eta_use);
    auto cand_flow = forward(candidate, act, data);
    const double cand_loss = risk(cand_flow, data, loss);

    if (cfg.adaptive && cand_loss > loss_now) {
      eta *= 0.5;
      clean = 0;
      ++log.rejected_steps;
      if (eta < 1e-18) {
        log.termination = "stalled";
        break;
      }
      continue;
    }

    const double prev_gns = gns;
    result.mu = std::move(candidate);
    flow = std::move(cand_flow);
    loss_now = cand_loss;
    t += eta_use;
    ++accepted;
    adj = adjoint(result.mu, act, flow, data, loss);
    field = gradient_from_states(result.mu, act, flow, adj);
    gns = grad_norm_sq(field);
    integral += 0.5 * (prev_gns + gns) * eta_use;
    if (cfg.adaptive && ++clean >= 10) {
      eta = std::min(eta * 1.1, cfg.eta0);
      clean = 0;
    }

    append(accepted, t, eta_use);
    if (cfg.checkpoint_every > 0 && accepted % cfg.checkpoint_every == 0)
      write_checkpoint(checkpoint_name(cfg.checkpoint_dir, accepted),
                       result.mu, act);

    if (loss_now > cfg.divergence_factor * initial) {
      log.termination = "diverged";
      break;
    }
    if (loss_now <= cfg.loss_tol) {
      log.termination = "loss_tol";
      break;
    }
    if (gns <= cfg.grad_tol) {
      log.termination = "grad_tol";
      break;
    }
  }
  if (log.termination.empty()) log.termination = "t_max";
  return result;
}

void write_trajectory_csv(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open csv sink " + path);
  out.precision(17);
  out << "step,t,eta,loss,grad_norm_sq,energy,lambda0,ede_residual,max_norm,"
         "dist_to_init\n";
  for (const auto& r : log.records)
    out << r.step << ',' << r.t << ',' << r.eta << ',' << r.loss << ','
        << r.grad_norm_sq << ',' << r.energy << ',' << r.lambda0 << ','
        << r.ede_residual << ',' << r.max_norm << ',' << r.dist_to_init
        << '\n';
}

StabilityReport stability_experiment(const ParameterMeasure& mu0,
                                     Activation act, const Dataset& data,
                                     const Loss& loss,
                                     const std::vector<double>& scales,
                                     double T, const TrainerConfig& base) {
  if (!(T > 0.0)) throw ConfigError("stability experiment needs T > 0");
  if (scales.empty()) throw ConfigError("stability experiment needs scales");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] < 0.0) throw ConfigError("scales must be non-negative");
    if (i > 0 && !(scales[i] < scales[i - 1]))
      throw ConfigError("scales must be strictly decreasing");
  }

  TrainerConfig cfg = base;
  cfg.t_max = T;
  cfg.jsonl_path.clear();
  cfg.checkpoint_every = 0;
  cfg.checkpoint_dir.clear();

  // one shared perturbation ray, unit speed in the particle metric
  GradientField dir;
  dir.S = mu0.S;
  dir.m = mu0.m;
  dir.d = mu0.d;
  dir.g.resize(mu0.size());
  CounterRng r(cfg.seed, 0x5742, 0);
  double nsq = 0.0;
  for (auto& v : dir.g) {
    v = r.normal();
    nsq += v * v;
  }
  const double unit = std::sqrt(static_cast<double>(mu0.S) * mu0.m / nsq);
  for (auto& v : dir.g) v *= unit;

  const auto reference = train(mu0, act, data, loss, cfg);

  StabilityReport report;
  report.scales = scales;
  for (double eps : scales) {
    const auto perturbed = train(push(mu0, dir, eps), act, data, loss, cfg);
    const bool same = perturbed.mu.theta == reference.mu.theta;
    report.identical.push_back(same);
    report.ratios.push_back(
        eps > 0.0 ? cot_distance(reference.mu, perturbed.mu).distance / eps
                  : 0.0);
  }
  return report;
}

EnvelopeFit energy_monitor_check(const TrajectoryLog& log) {
  if (log.records.empty())
    throw ConfigError("energy check needs a non-empty log");
  std::vector<double> t, e, rad;
  for (const auto& r : log.records) {
    t.push_back(r.t);
    e.push_back(r.energy);
    rad.push_back(r.max_norm);
  }
  EnvelopeFit fit;
  fit.c_energy = fit_envelope(t, e);
  fit.c_radius = fit_envelope(t, rad);
  fit.ok = std::isfinite(fit.c_energy) && std::isfinite(fit.c_radius);
  return fit;
}

}  // namespace cotflow
