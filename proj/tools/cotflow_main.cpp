// Command line front end. One JSON config document drives every subcommand;
// flags override dotted config paths. No environment variables are consulted.
//
// Exit codes: 0 success, 1 config error, 2 numerical failure (JSON
// diagnostic on stderr), 3 certificate failed (certify only).

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
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
#include "cotflow/rng.hpp"
#include "cotflow/trainer.hpp"
#include "cotflow/version.hpp"

namespace {

using nlohmann::json;
using namespace cotflow;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string format;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
  auto* cfg = sub->add_option("--config", f.config_path,
                              "experiment config (JSON document)");
  if (config_required) cfg->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed,
                  "override model init and synthetic data seeds")
      ->each([&f](const std::string&) { f.seed_given = true; });
  sub->add_option("--threads", f.threads, "worker thread cap")
      ->check(CLI::PositiveNumber);
  sub->add_option("--out-dir", f.out_dir, "override outputs.dir");
  sub->add_option("--format", f.format, "restrict outputs.formats")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  sub->add_option("--set", f.sets,
                  "dotted config override, e.g. trainer.eta0=1e-3");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---- config loading ---------------------------------------------------------

json parse_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + ": " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed ") + what + " " + path + ": " +
                      e.what());
  }
}

void apply_set(json& cfg, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key.path=value, got '" + expr + "'");
  const std::string path = expr.substr(0, eq);
  const std::string raw = expr.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings pass through verbatim
  }

  json* node = &cfg;
  std::stringstream keys(path);
  std::string key, next;
  std::getline(keys, key, '.');
  while (std::getline(keys, next, '.')) {
    if (!node->is_object())
      throw ConfigError("--set path '" + path + "' descends into a non-object");
    node = &(*node)[key];
    key = next;
  }
  if (!node->is_object())
    throw ConfigError("--set path '" + path + "' descends into a non-object");
  (*node)[key] = value;
}

void expect_keys(const json& obj, const char* where,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known)
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

void validate_schema(const json& cfg) {
  expect_keys(cfg, "config root",
              {"dataset", "model", "trainer", "lift", "outputs"});
  if (cfg.contains("dataset")) {
    const auto& ds = cfg.at("dataset");
    expect_keys(ds, "dataset", {"csv", "synthetic"});
    if (ds.contains("csv") == ds.contains("synthetic"))
      throw ConfigError("dataset needs exactly one of 'csv' or 'synthetic'");
    if (ds.contains("synthetic"))
      expect_keys(ds.at("synthetic"), "dataset.synthetic",
                  {"N", "d", "d_prime", "ball_radius", "min_separation",
                   "seed"});
  }
  if (cfg.contains("model")) {
    const auto& model = cfg.at("model");
    expect_keys(model, "model", {"S", "m", "activation", "init"});
    if (model.contains("init"))
      expect_keys(model.at("init"), "model.init",
                  {"kind", "rho", "nu", "tied_slices", "seed"});
  }
  if (cfg.contains("trainer"))
    expect_keys(cfg.at("trainer"), "trainer",
                {"eta0", "t_max", "adaptive", "checkpoint_every", "loss_tol",
                 "grad_tol", "divergence_factor", "monitor_lambda0"});
  if (cfg.contains("lift")) expect_keys(cfg.at("lift"), "lift", {"enabled", "alpha"});
  if (cfg.contains("outputs"))
    expect_keys(cfg.at("outputs"), "outputs", {"dir", "formats"});
}

template <typename T>
T get_field(const json& obj, const char* where, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " has the wrong type");
  }
}

// ---- synthetic data ---------------------------------------------------------

Dataset synthesize(const json& spec) {
  const int N = get_field(spec, "dataset.synthetic", "N", 8);
  const int d = get_field(spec, "dataset.synthetic", "d", 2);
  const int d_prime = get_field(spec, "dataset.synthetic", "d_prime", 1);
  const double ball_radius =
      get_field(spec, "dataset.synthetic", "ball_radius", 1.0);
  const double min_sep =
      get_field(spec, "dataset.synthetic", "min_separation", 0.0);
  const std::uint64_t seed =
      get_field<std::uint64_t>(spec, "dataset.synthetic", "seed", 0);

  if (N < 1) throw ConfigError("dataset.synthetic.N must be >= 1");
  if (d < 1) throw ConfigError("dataset.synthetic.d must be >= 1");
  if (d_prime < 1) throw ConfigError("dataset.synthetic.d_prime must be >= 1");
  if (!(ball_radius > 0.0))
    throw ConfigError("dataset.synthetic.ball_radius must be > 0");
  if (min_sep < 0.0)
    throw ConfigError("dataset.synthetic.min_separation must be >= 0");

  Dataset data;
  data.N = N;
  data.d = d;
  data.d_out = d_prime;
  data.ys.resize(static_cast<std::size_t>(N) * d_prime);

  // Candidates drawn uniformly in the ball (normal direction, radial
  // inverse-CDF); a candidate is kept when it clears min_separation against
  // everything accepted so far. Hard cap on tested candidates.
  CounterRng rng(seed, 0x531f, 0);
  constexpr int kMaxAttempts = 100000;
  int attempts = 0;
  std::vector<double> cand(d);
  while (data.xs.size() < static_cast<std::size_t>(N) * d) {
    if (++attempts > kMaxAttempts)
      throw NumericalError(
          "synthetic sampling exceeded the attempt budget",
          "{\"error\":\"synth_rejection_cap\",\"attempts\":100000}");
    double nsq = 0.0;
    for (int c = 0; c < d; ++c) {
      cand[c] = rng.normal();
      nsq += cand[c] * cand[c];
    }
    const double norm = std::sqrt(nsq);
    const double r =
        ball_radius * std::pow(rng.uniform01(), 1.0 / d);
    const double scale = norm > 0.0 ? r / norm : 0.0;
    for (int c = 0; c < d; ++c) cand[c] *= scale;

    bool ok = true;
    const int have = static_cast<int>(data.xs.size()) / d;
    for (int i = 0; i < have && ok; ++i) {
      double dsq = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = cand[c] - data.xs[static_cast<std::size_t>(i) * d + c];
        dsq += diff * diff;
      }
      ok = dsq >= min_sep * min_sep;
    }
    if (ok) data.xs.insert(data.xs.end(), cand.begin(), cand.end());
  }
  for (auto& y : data.ys) y = rng.uniform(-1.0, 1.0);
  return data;
}

// ---- resolved experiment ----------------------------------------------------

struct RunSetup {
  json cfg;
  std::string out_dir = "out";
  bool want_csv = true;
  bool want_jsonl = true;

  bool has_dataset = false;
  Dataset base;

  int S = 8;
  int m = 64;
  Activation act = Activation::Tanh;
  FeatureDist dist = FeatureDist::gaussian(1.0);
  std::uint64_t init_seed = 0;

  TrainerConfig trainer;

  bool lift_enabled = false;
  bool alpha_auto = false;
  double alpha = 1.0;
};

RunSetup resolve(const CommonFlags& flags, bool need_dataset) {
  json cfg = json::object();
  if (!flags.config_path.empty())
    cfg = parse_json_file(flags.config_path, "config");
  if (!cfg.is_object()) throw ConfigError("config root must be a JSON object");

  for (const auto& expr : flags.sets) apply_set(cfg, expr);
  if (flags.seed_given) {
    if (cfg.contains("model")) cfg["model"]["init"]["seed"] = flags.seed;
    if (cfg.contains("dataset") && cfg["dataset"].contains("synthetic"))
      cfg["dataset"]["synthetic"]["seed"] = flags.seed;
    if (!cfg.contains("model") &&
        !(cfg.contains("dataset") && cfg["dataset"].contains("synthetic")))
      cfg["model"]["init"]["seed"] = flags.seed;
  }
  if (!flags.out_dir.empty()) cfg["outputs"]["dir"] = flags.out_dir;
  if (!flags.format.empty()) cfg["outputs"]["formats"] = {flags.format};
  validate_schema(cfg);

  RunSetup setup;
  setup.cfg = cfg;

  const json outputs = cfg.value("outputs", json::object());
  setup.out_dir = get_field<std::string>(outputs, "outputs", "dir", "out");
  if (outputs.contains("formats")) {
    if (!outputs.at("formats").is_array())
      throw ConfigError("outputs.formats must be an array");
    setup.want_csv = setup.want_jsonl = false;
    for (const auto& f : outputs.at("formats")) {
      const std::string name = f.is_string() ? f.get<std::string>() : "";
      if (name == "csv")
        setup.want_csv = true;
      else if (name == "jsonl")
        setup.want_jsonl = true;
      else
        throw ConfigError("outputs.formats entries must be csv or jsonl");
    }
  }

  if (cfg.contains("dataset")) {
    const auto& ds = cfg.at("dataset");
    setup.base = ds.contains("csv")
                     ? read_dataset_csv(
                           get_field<std::string>(ds, "dataset", "csv", ""))
                     : synthesize(ds.at("synthetic"));
    setup.has_dataset = true;
  } else if (need_dataset) {
    throw ConfigError("this subcommand needs a dataset section");
  }

  const json model = cfg.value("model", json::object());
  setup.S = get_field(model, "model", "S", 8);
  setup.m = get_field(model, "model", "m", 64);
  if (setup.S < 1) throw ConfigError("model.S must be >= 1");
  if (setup.m < 1) throw ConfigError("model.m must be >= 1");
  setup.act = activation_from_string(
      get_field<std::string>(model, "model", "activation", "tanh"));
  const json init = model.value("init", json::object());
  FeatureDist dist;
  dist.kind = feature_kind_from_string(
      get_field<std::string>(init, "model.init", "kind", "gaussian"));
  dist.rho = get_field(init, "model.init", "rho", 1.0);
  dist.nu = get_field(init, "model.init", "nu", 0.0);
  dist.tied_slices = get_field(init, "model.init", "tied_slices", false);
  setup.dist = dist;
  setup.init_seed = get_field<std::uint64_t>(init, "model.init", "seed", 0);

  const json tr = cfg.value("trainer", json::object());
  setup.trainer.eta0 = get_field(tr, "trainer", "eta0", setup.trainer.eta0);
  setup.trainer.t_max = get_field(tr, "trainer", "t_max", setup.trainer.t_max);
  setup.trainer.adaptive =
      get_field(tr, "trainer", "adaptive", setup.trainer.adaptive);
  setup.trainer.checkpoint_every = get_field(
      tr, "trainer", "checkpoint_every", setup.trainer.checkpoint_every);
  setup.trainer.loss_tol =
      get_field(tr, "trainer", "loss_tol", setup.trainer.loss_tol);
  setup.trainer.grad_tol =
      get_field(tr, "trainer", "grad_tol", setup.trainer.grad_tol);
  setup.trainer.divergence_factor = get_field(
      tr, "trainer", "divergence_factor", setup.trainer.divergence_factor);
  setup.trainer.monitor_lambda0 = get_field(
      tr, "trainer", "monitor_lambda0", setup.trainer.monitor_lambda0);
  setup.trainer.seed = setup.init_seed;

  const json lift = cfg.value("lift", json::object());
  setup.lift_enabled = get_field(lift, "lift", "enabled", false);
  if (lift.contains("alpha")) {
    const auto& a = lift.at("alpha");
    if (a.is_string() && a.get<std::string>() == "auto")
      setup.alpha_auto = true;
    else if (a.is_number())
      setup.alpha = a.get<double>();
    else
      throw ConfigError("lift.alpha must be a number or \"auto\"");
  }
  return setup;
}

int model_dim(const RunSetup& setup) {
  return setup.lift_enabled ? setup.base.d + setup.base.d_out : setup.base.d;
}

std::filesystem::path ensure_out_dir(const RunSetup& setup) {
  std::filesystem::path dir(setup.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_manifest(const RunSetup& setup, const CommonFlags& flags,
                    const std::string& subcommand,
                    const std::vector<std::string>& inputs) {
  json manifest;
  manifest["subcommand"] = subcommand;
  manifest["config"] = setup.cfg;
  char hex[32];
  std::snprintf(hex, sizeof hex, "fnv1a:%016" PRIx64,
                fnv1a(setup.cfg.dump()));
  manifest["config_hash"] = hex;
  manifest["seeds"] = {{"init", setup.init_seed},
                       {"radius_strategy", RadiusStrategy{}.seed}};
  if (setup.cfg.contains("dataset") &&
      setup.cfg["dataset"].contains("synthetic"))
    manifest["seeds"]["synthetic"] = get_field<std::uint64_t>(
        setup.cfg["dataset"]["synthetic"], "dataset.synthetic", "seed", 0);
  manifest["threads"] = flags.threads;
  manifest["inputs"] = inputs;
  manifest["versions"] = {{"cotflow", kVersion},
                          {"certificate_schema", kCertificateSchemaVersion}};

  const auto path = ensure_out_dir(setup) / "manifest.json";
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
  if (!out) throw ConfigError("cannot write " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

// ---- subcommands ------------------------------------------------------------

int cmd_init(const CommonFlags& flags) {
  RunSetup setup = resolve(flags, true);
  const auto dir = ensure_out_dir(setup);
  const auto mu = init_fixup(setup.S, setup.m, model_dim(setup), setup.act,
                             setup.dist, setup.init_seed);
  const auto path = dir / "init.ckpt";
  write_checkpoint(path.string(), mu, setup.act);
  write_manifest(setup, flags, "init", {});
  json out = {{"checkpoint", path.string()},
              {"S", mu.S},
              {"m", mu.m},
              {"d", mu.d},
              {"activation", std::string(to_string(setup.act))}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_synth(const CommonFlags& flags) {
  RunSetup setup = resolve(flags, true);
  if (!setup.cfg["dataset"].contains("synthetic"))
    throw ConfigError("synth needs dataset.synthetic");
  const auto dir = ensure_out_dir(setup);
  const auto path = dir / "dataset.csv";
  write_dataset_csv(setup.base, path.string());
  write_manifest(setup, flags, "synth", {});
  json out = {{"dataset", path.string()},
              {"N", setup.base.N},
              {"d", setup.base.d},
              {"d_out", setup.base.d_out},
              {"separation", separation(setup.base)}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  RunSetup setup = resolve(flags, true);
  const auto dir = ensure_out_dir(setup);

  auto mu0 = init_fixup(setup.S, setup.m, model_dim(setup), setup.act,
                        setup.dist, setup.init_seed);
  double alpha = setup.alpha;
  if (setup.lift_enabled && setup.alpha_auto)
    alpha = select_alpha(setup.base, mu0, setup.act).alpha;

  Dataset data = setup.base;
  Loss loss;
  if (setup.lift_enabled) {
    data = lift(setup.base, alpha).data;
    loss = Loss{true, alpha};
  }

  TrainerConfig cfg = setup.trainer;
  if (setup.want_jsonl) cfg.jsonl_path = (dir / "trajectory.jsonl").string();
  if (cfg.checkpoint_every > 0) {
    cfg.checkpoint_dir = (dir / "checkpoints").string();
    std::filesystem::create_directories(cfg.checkpoint_dir);
  }

  const auto result = train(mu0, setup.act, data, loss, cfg);

  if (setup.want_csv)
    write_trajectory_csv(result.log, (dir / "trajectory.csv").string());
  write_checkpoint((dir / "final.ckpt").string(), result.mu, setup.act);

  json summary = {{"termination", result.log.termination},
                  {"steps", result.log.records.back().step},
                  {"records", result.log.records.size()},
                  {"rejected_steps", result.log.rejected_steps},
                  {"initial_loss", result.log.records.front().loss},
                  {"final_loss", result.log.records.back().loss},
                  {"final_t", result.log.records.back().t},
                  {"lifted", setup.lift_enabled},
                  {"alpha", setup.lift_enabled ? alpha : 1.0}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(setup, flags, "train", {});
  std::cout << summary.dump() << "\n";

  if (result.log.termination == "diverged") {
    json diag = {{"error", "divergence"},
                 {"initial_loss", result.log.records.front().loss},
                 {"final_loss", result.log.records.back().loss}};
    std::cerr << diag.dump() << "\n";
    return 2;
  }
  return 0;
}

int cmd_certify(const CommonFlags& flags) {
  RunSetup setup = resolve(flags, true);
  const auto dir = ensure_out_dir(setup);

  const auto mu0 = init_fixup(setup.S, setup.m, model_dim(setup), setup.act,
                              setup.dist, setup.init_seed);
  Certificate cert;
  if (setup.lift_enabled && setup.alpha_auto) {
    cert = select_alpha(setup.base, mu0, setup.act).certificate;
  } else if (setup.lift_enabled) {
    const auto lifted = lift(setup.base, setup.alpha);
    cert = certify(mu0, setup.act, lifted.data, lifted.loss());
  } else {
    cert = certify(mu0, setup.act, setup.base);
  }

  const std::string cert_json = to_json(cert);
  write_text(dir / "certificate.json", cert_json + "\n");
  write_manifest(setup, flags, "certify", {});
  std::cout << cert_json << "\n";
  if (!cert.passed) {
    std::cerr << "certificate failed: " << cert.reason << "\n";
    return 3;
  }
  return 0;
}

int cmd_distance(const CommonFlags& flags, const std::string& path_a,
                 const std::string& path_b) {
  RunSetup setup = resolve(flags, false);
  const auto dir = ensure_out_dir(setup);

  const auto a = read_checkpoint(path_a);
  const auto b = read_checkpoint(path_b);
  const auto result = cot_distance(a.mu, b.mu);

  json out = {{"cot_distance", result.distance},
              {"squared", result.plan.total_cost},
              {"slices", result.plan.S},
              {"slice_costs", result.plan.slice_costs}};
  write_text(dir / "distance.json", out.dump(2) + "\n");
  write_manifest(setup, flags, "distance", {path_a, path_b});
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_kernel(const CommonFlags& flags, const std::string& ckpt_path,
               int slice) {
  RunSetup setup = resolve(flags, true);
  const auto dir = ensure_out_dir(setup);

  const auto ckpt = read_checkpoint(ckpt_path);
  Dataset data = setup.base;
  if (ckpt.mu.d == setup.base.d + setup.base.d_out)
    data = lift(setup.base, 1.0).data;
  else if (ckpt.mu.d != setup.base.d)
    throw ConfigError("checkpoint dimension fits neither the dataset nor its lift");
  if (slice < 0 || slice >= ckpt.mu.S)
    throw ConfigError("slice out of range");

  const auto flow = forward(ckpt.mu, ckpt.activation, data);
  std::vector<double> nodes(static_cast<std::size_t>(data.N) * data.d);

  const auto nodes_at = [&](int k) {
    for (int i = 0; i < data.N; ++i) {
      const double* x = flow.at(i, k);
      std::copy(x, x + data.d, nodes.begin() + static_cast<std::size_t>(i) * data.d);
    }
  };

  std::ostringstream eigen_csv;
  eigen_csv.precision(17);
  eigen_csv << "slice,k1_lambda_min,k1_lambda_max,full_lambda_min,full_lambda_max\n";
  double floor_sum = 0.0;
  for (int k = 0; k < ckpt.mu.S; ++k) {
    nodes_at(k);
    const auto k1 = k1_matrix(ckpt.mu, k, ckpt.activation, nodes.data(), data.N);
    const auto full =
        full_kernel_matrix(ckpt.mu, k, ckpt.activation, nodes.data(), data.N);
    eigen_csv << k << "," << k1.lambda_min << "," << k1.lambda_max << ","
              << full.lambda_min << "," << full.lambda_max << "\n";
    floor_sum += k1.lambda_min;
  }
  write_text(dir / "kernel_eigen.csv", eigen_csv.str());

  const auto dump_matrix = [&](const Eigen::MatrixXd& mat,
                               const std::string& name) {
    std::ostringstream csv;
    csv.precision(17);
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c)
        csv << (c ? "," : "") << mat(r, c);
      csv << "\n";
    }
    write_text(dir / name, csv.str());
  };
  nodes_at(slice);
  const auto k1 =
      k1_matrix(ckpt.mu, slice, ckpt.activation, nodes.data(), data.N);
  const auto full =
      full_kernel_matrix(ckpt.mu, slice, ckpt.activation, nodes.data(), data.N);
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "_slice%03d.csv", slice);
  dump_matrix(k1.entries, std::string("k1") + suffix);
  dump_matrix(full.entries, std::string("full") + suffix);

  write_manifest(setup, flags, "kernel", {ckpt_path});
  json out = {{"lambda0", floor_sum / ckpt.mu.S},
              {"slice", slice},
              {"eigen_csv", (dir / "kernel_eigen.csv").string()}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_report(const CommonFlags& flags) {
  RunSetup setup = resolve(flags, false);
  const auto dir = ensure_out_dir(setup);
  const auto jsonl = dir / "trajectory.jsonl";

  std::ifstream in(jsonl);
  if (!in) throw ConfigError("cannot open " + jsonl.string() +
                             " (train with jsonl output first)");
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,t,loss,grad_norm_sq\n";
  json first, last;
  std::size_t rows = 0;
  double min_loss = std::numeric_limits<double>::infinity();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("malformed record in " + jsonl.string() + ": " +
                        e.what());
    }
    csv << rec.at("step").get<int>() << "," << rec.at("t").get<double>() << ","
        << rec.at("loss").get<double>() << ","
        << rec.at("grad_norm_sq").get<double>() << "\n";
    if (rows == 0) first = rec;
    last = rec;
    min_loss = std::min(min_loss, rec.at("loss").get<double>());
    ++rows;
  }
  if (rows == 0) throw ConfigError(jsonl.string() + " holds no records");

  write_text(dir / "loss_curve.csv", csv.str());
  json summary = {{"rows", rows},
                  {"steps", last.at("step").get<int>()},
                  {"initial_loss", first.at("loss").get<double>()},
                  {"final_loss", last.at("loss").get<double>()},
                  {"min_loss", min_loss},
                  {"final_t", last.at("t").get<double>()}};
  write_text(dir / "report.json", summary.dump(2) + "\n");
  write_manifest(setup, flags, "report", {jsonl.string()});
  std::cout << summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional transport gradient-flow experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string ckpt_a, ckpt_b, ckpt;
  int slice = 0;

  auto* init = app.add_subcommand("init", "write the initial checkpoint");
  add_common(init, flags, true);
  auto* train = app.add_subcommand("train", "run the descent loop");
  add_common(train, flags, true);
  auto* certify = app.add_subcommand("certify", "evaluate the convergence certificate");
  add_common(certify, flags, true);
  auto* distance = app.add_subcommand("distance", "transport distance between two checkpoints");
  add_common(distance, flags, false);
  distance->add_option("a", ckpt_a, "first checkpoint")->required()->check(CLI::ExistingFile);
  distance->add_option("b", ckpt_b, "second checkpoint")->required()->check(CLI::ExistingFile);
  auto* kernel = app.add_subcommand("kernel", "dump kernel matrices and spectra");
  add_common(kernel, flags, true);
  kernel->add_option("checkpoint", ckpt, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  kernel->add_option("--slice", slice, "slice whose matrices are dumped");
  auto* report = app.add_subcommand("report", "summarize a training trajectory");
  add_common(report, flags, false);
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  add_common(synth, flags, true);

  CLI11_PARSE(app, argc, argv);

  try {
    set_max_threads(flags.threads);
    if (init->parsed()) return cmd_init(flags);
    if (train->parsed()) return cmd_train(flags);
    if (certify->parsed()) return cmd_certify(flags);
    if (distance->parsed()) return cmd_distance(flags, ckpt_a, ckpt_b);
    if (kernel->parsed()) return cmd_kernel(flags, ckpt, slice);
    if (report->parsed()) return cmd_report(flags);
    if (synth->parsed()) return cmd_synth(flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    json diag;
    diag["error"] = "numerical";
    diag["detail"] = e.what();
    try {
      diag["diagnostic"] = json::parse(e.diagnostic);
    } catch (const json::exception&) {
      diag["diagnostic"] = e.diagnostic;
    }
    std::cerr << diag.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
