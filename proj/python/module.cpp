#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "cotflow/activation.hpp"
#include "cotflow/checkpoint.hpp"
#include "cotflow/cond_ot.hpp"
#include "cotflow/dataset.hpp"
#include "cotflow/errors.hpp"
#include "cotflow/init.hpp"
#include "cotflow/kernels.hpp"
#include "cotflow/measure.hpp"
#include "cotflow/node_flow.hpp"
#include "cotflow/parallel.hpp"
#include "cotflow/pl_certify.hpp"
#include "cotflow/trainer.hpp"
#include "cotflow/version.hpp"

namespace py = pybind11;
using namespace cotflow;

namespace {

Dataset make_dataset(const py::array_t<double>& x, const py::array_t<double>& y) {
  const auto xb = x.request();
  const auto yb = y.request();
  if (xb.ndim != 2 || yb.ndim != 2)
    throw ConfigError("x and y must be 2d arrays (N x d, N x d_out)");
  if (xb.shape[0] != yb.shape[0])
    throw ConfigError("x and y disagree on the sample count");
  Dataset data;
  data.N = static_cast<int>(xb.shape[0]);
  data.d = static_cast<int>(xb.shape[1]);
  data.d_out = static_cast<int>(yb.shape[1]);
  const auto xs = x.unchecked<2>();
  const auto ys = y.unchecked<2>();
  data.xs.resize(static_cast<std::size_t>(data.N) * data.d);
  data.ys.resize(static_cast<std::size_t>(data.N) * data.d_out);
  for (int i = 0; i < data.N; ++i) {
    for (int c = 0; c < data.d; ++c) data.xs[i * data.d + c] = xs(i, c);
    for (int c = 0; c < data.d_out; ++c) data.ys[i * data.d_out + c] = ys(i, c);
  }
  return data;
}

// The lifted convention embeds the base data once here so callers always
// pass base-dimension arrays.
std::pair<Dataset, Loss> make_problem(const py::array_t<double>& x,
                                      const py::array_t<double>& y,
                                      bool lifted, double alpha) {
  Dataset base = make_dataset(x, y);
  if (!lifted) return {std::move(base), Loss{}};
  auto problem = lift(base, alpha);
  return {std::move(problem.data), problem.loss()};
}

py::array_t<double> theta_array(const ParameterMeasure& mu) {
  py::array_t<double> out({mu.S, mu.m, mu.pdim()});
  std::memcpy(out.mutable_data(), mu.theta.data(),
              mu.theta.size() * sizeof(double));
  return out;
}

py::dict record_dict(const StepRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["t"] = r.t;
  d["eta"] = r.eta;
  d["loss"] = r.loss;
  d["grad_norm_sq"] = r.grad_norm_sq;
  d["energy"] = r.energy;
  d["lambda0"] = r.lambda0;
  d["ede_residual"] = r.ede_residual;
  d["max_norm"] = r.max_norm;
  d["dist_to_init"] = r.dist_to_init;
  return d;
}

py::dict certificate_dict(const Certificate& cert) {
  const auto loads = py::module_::import("json").attr("loads");
  return loads(to_json(cert));
}

FeatureDist make_dist(const std::string& kind, double rho, double nu,
                      bool tied_slices) {
  FeatureDist dist;
  dist.kind = feature_kind_from_string(kind);
  dist.rho = rho;
  dist.nu = nu;
  dist.tied_slices = tied_slices;
  return dist;
}

}  // namespace

PYBIND11_MODULE(_cotflow, m) {
  m.doc() = "mean-field neural ODE flows, conditional-OT geometry, and "
            "gradient-dominance certificates";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  static py::exception<NumericalError> numerical(m, "NumericalError",
                                                 PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const NumericalError& e) {
      py::set_error(numerical,
                    (std::string(e.what()) + " " + e.diagnostic).c_str());
    }
  });

  py::class_<ParameterMeasure>(m, "Measure")
      .def_readonly("S", &ParameterMeasure::S)
      .def_readonly("m", &ParameterMeasure::m)
      .def_readonly("d", &ParameterMeasure::d)
      .def_readonly("seed", &ParameterMeasure::seed)
      .def_property_readonly("theta", &theta_array,
                             "particles as an (S, m, 2d+1) array, copied")
      .def("energy", &energy)
      .def("max_norm", &max_particle_norm)
      .def("__repr__", [](const ParameterMeasure& mu) {
        return "Measure(S=" + std::to_string(mu.S) +
               ", m=" + std::to_string(mu.m) + ", d=" + std::to_string(mu.d) +
               ")";
      });

  m.def("set_max_threads", &set_max_threads, py::arg("n"));

  m.def(
      "init_fixup",
      [](int S, int mm, int d, const std::string& activation,
         const std::string& kind, double rho, double nu, bool tied_slices,
         std::uint64_t seed) {
        return init_fixup(S, mm, d, activation_from_string(activation),
                          make_dist(kind, rho, nu, tied_slices), seed);
      },
      py::arg("S"), py::arg("m"), py::arg("d"), py::arg("activation") = "tanh",
      py::arg("kind") = "gaussian", py::arg("rho") = 1.0, py::arg("nu") = 0.0,
      py::arg("tied_slices") = false, py::arg("seed") = 0,
      "identity-flow initialization: zero readout, random features");

  m.def(
      "flow_nodes",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        const auto flow = forward(mu, activation_from_string(activation), data);
        py::array_t<double> out({data.N, mu.S + 1, mu.d});
        auto view = out.mutable_unchecked<3>();
        for (int i = 0; i < data.N; ++i)
          for (int k = 0; k <= mu.S; ++k) {
            const double* node = flow.at(i, k);
            for (int c = 0; c < mu.d; ++c) view(i, k, c) = node[c];
          }
        return out;
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0,
      "Euler trajectory nodes, shaped (N, S+1, d)");

  m.def(
      "risk",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        const auto act = activation_from_string(activation);
        return risk(forward(mu, act, data), data, loss);
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0);

  m.def(
      "grad_norm_sq",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        const auto act = activation_from_string(activation);
        return grad_norm_sq(gradient(mu, act, data, loss));
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0);

  m.def(
      "gradient",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        const auto act = activation_from_string(activation);
        const auto field = gradient(mu, act, data, loss);
        py::array_t<double> out({mu.S, mu.m, mu.pdim()});
        std::memcpy(out.mutable_data(), field.g.data(),
                    field.g.size() * sizeof(double));
        return out;
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0,
      "descent field per particle, shaped like theta");

  m.def(
      "train",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha, double eta0, double t_max, bool adaptive,
         bool monitor_lambda0, const std::string& jsonl_path) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        TrainerConfig cfg;
        cfg.eta0 = eta0;
        cfg.t_max = t_max;
        cfg.adaptive = adaptive;
        cfg.monitor_lambda0 = monitor_lambda0;
        cfg.jsonl_path = jsonl_path;
        const auto result =
            train(mu, activation_from_string(activation), data, loss, cfg);
        py::list records;
        for (const auto& r : result.log.records) records.append(record_dict(r));
        py::dict out;
        out["mu"] = result.mu;
        out["records"] = records;
        out["termination"] = result.log.termination;
        out["rejected_steps"] = result.log.rejected_steps;
        return out;
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0,
      py::arg("eta0") = 1e-2, py::arg("t_max") = 1.0,
      py::arg("adaptive") = true, py::arg("monitor_lambda0") = true,
      py::arg("jsonl_path") = "");

  m.def(
      "certify",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        return certificate_dict(
            certify(mu, activation_from_string(activation), data, loss));
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0);

  m.def(
      "select_alpha",
      [](const py::array_t<double>& x, const py::array_t<double>& y,
         const ParameterMeasure& mu, const std::string& activation,
         int budget) {
        const auto sel = select_alpha(make_dataset(x, y), mu,
                                      activation_from_string(activation), budget);
        py::dict out;
        out["alpha"] = sel.alpha;
        out["certificate"] = certificate_dict(sel.certificate);
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("mu"), py::arg("activation"),
      py::arg("budget") = 20,
      "double the readout scale until the certificate passes");

  m.def(
      "lambda0",
      [](const ParameterMeasure& mu, const std::string& activation,
         const py::array_t<double>& x, const py::array_t<double>& y,
         bool lifted, double alpha) {
        const auto [data, loss] = make_problem(x, y, lifted, alpha);
        const auto act = activation_from_string(activation);
        return lambda0(mu, act, forward(mu, act, data));
      },
      py::arg("mu"), py::arg("activation"), py::arg("x"), py::arg("y"),
      py::arg("lifted") = false, py::arg("alpha") = 1.0,
      "slice-averaged kernel floor along the flow");

  m.def(
      "cot_distance",
      [](const ParameterMeasure& a, const ParameterMeasure& b) {
        return cot_distance(a, b).distance;
      },
      py::arg("a"), py::arg("b"),
      "slice-aggregated transport distance between particle clouds");

  m.def(
      "write_checkpoint",
      [](const std::string& path, const ParameterMeasure& mu,
         const std::string& activation) {
        write_checkpoint(path, mu, activation_from_string(activation));
      },
      py::arg("path"), py::arg("mu"), py::arg("activation"));

  m.def(
      "read_checkpoint",
      [](const std::string& path) {
        const auto ckpt = read_checkpoint(path);
        return py::make_tuple(ckpt.mu, std::string(to_string(ckpt.activation)));
      },
      py::arg("path"), "returns (measure, activation)");
}
