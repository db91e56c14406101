#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixse/amp.hpp"
#include "mixse/experiment.hpp"
#include "mixse/io.hpp"
#include "mixse/observables.hpp"

namespace {

using mixse::ExperimentConfig;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --override solver.damping=0.7 style dotted-path patches on the config json
json apply_overrides(json j, const std::vector<std::string>& overrides) {
  if (j.contains("schema") && j.value("schema", "") == "mixse-manifest") j = j.at("config");
  for (const std::string& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("override must be key=value: " + kv);
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    json parsed = json::parse(val, nullptr, false);
    if (parsed.is_discarded()) parsed = val;

    json* node = &j;
    size_t pos = 0;
    while (true) {
      auto dot = key.find('.', pos);
      std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (dot == std::string::npos) {
        (*node)[part] = parsed;
        break;
      }
      node = &(*node)[part];
      pos = dot + 1;
    }
  }
  return j;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             const std::string& out, int threads, long long seed) {
  json j = json::parse(read_file(path));
  j = apply_overrides(j, overrides);
  if (!out.empty()) j["out"] = out;
  if (threads > 0) j["threads"] = threads;
  if (seed >= 0) j["solver"]["seed"] = seed;
  return mixse::parse_config_text(j.dump());
}

void print_rows(const std::vector<mixse::ResultRow>& rows) {
  std::cout << mixse::result_csv_header() << "\n";
  for (const auto& r : rows) std::cout << mixse::to_csv(r) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixse: sharp asymptotics of Gaussian-mixture classification, with "
               "finite-instance ERM and AMP cross-checks"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path;
  std::vector<std::string> overrides;
  int threads = 0;
  long long seed = -1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON config (or manifest) path");
    if (needs_config) opt->required();
    sub->add_option("--out", out_path, "output path");
    sub->add_option("--seed", seed, "base RNG seed");
    sub->add_option("--threads", threads, "worker threads (default: MIXSE_THREADS or hardware)");
    sub->add_option("--override", overrides, "config override key=value (repeatable)");
  };

  auto* cmd_solve = app.add_subcommand("solve", "solve a single (alpha, lambda) point");
  double opt_alpha = -1.0, opt_lambda = -1.0;
  add_common(cmd_solve, true);
  cmd_solve->add_option("--alpha", opt_alpha, "override sample complexity");
  cmd_solve->add_option("--lambda", opt_lambda, "override penalty strength");

  auto* cmd_sweep = app.add_subcommand("sweep", "run the full experiment grid");
  add_common(cmd_sweep, true);

  auto* cmd_erm = app.add_subcommand("erm", "finite-instance simulation only");
  add_common(cmd_erm, true);

  auto* cmd_ingest = app.add_subcommand("ingest", "estimate an empirical mixture from a dataset");
  double ingest_scale = 1.0;
  bool ingest_center = false;
  int fmap_p = 0;
  long long fmap_seed = 0;
  cmd_ingest->add_option("--data", data_path, "dataset path (.csv or .json descriptor)")
      ->required();
  cmd_ingest->add_option("--out", out_path, "output model file")->required();
  cmd_ingest->add_option("--scale", ingest_scale, "divide features by this value (e.g. 255)");
  cmd_ingest->add_flag("--center", ingest_center, "subtract the global feature mean");
  cmd_ingest->add_option("--feature-map", fmap_p, "apply erf random features of this dimension");
  cmd_ingest->add_option("--feature-seed", fmap_seed, "random-feature seed");

  auto* cmd_amp = app.add_subcommand("amp", "AMP oracle vs ERM on one sampled instance");
  add_common(cmd_amp, true);

  auto* cmd_bayes = app.add_subcommand("bayes", "Bayes-optimal baseline");
  int bayes_K = 2;
  double bayes_delta = 0.5, bayes_alpha = 1.0;
  int bayes_mc = 200000;
  cmd_bayes->add_option("--K", bayes_K, "clusters");
  cmd_bayes->add_option("--delta", bayes_delta, "shared isotropic variance");
  cmd_bayes->add_option("--alpha", bayes_alpha, "sample complexity");
  cmd_bayes->add_option("--mc", bayes_mc, "Monte Carlo samples (general case)");
  cmd_bayes->add_option("--seed", seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_solve->parsed()) {
      ExperimentConfig cfg = load_config(config_path, overrides, out_path, threads, seed);
      if (opt_alpha > 0) cfg.alpha_grid = {opt_alpha};
      else cfg.alpha_grid = {cfg.alpha_grid.front()};
      if (opt_lambda > 0) {
        cfg.lambda_grid = {opt_lambda};
        cfg.optimal_lambda = false;
      } else if (!cfg.optimal_lambda) {
        cfg.lambda_grid = {cfg.lambda_grid.front()};
      }
      mixse::RunOutput run = mixse::run_experiment(cfg);
      print_rows(run.rows);
      return run.exit_code;
    }
    if (cmd_sweep->parsed() || cmd_erm->parsed()) {
      ExperimentConfig cfg = load_config(config_path, overrides, out_path, threads, seed);
      if (cmd_erm->parsed()) {
        cfg.skip_theory = true;
        if (cfg.seeds <= 0) cfg.seeds = 10;
      }
      mixse::RunOutput run = mixse::run_experiment(cfg);
      print_rows(run.rows);
      if (!cfg.out.empty()) std::cerr << "wrote " << cfg.out << "\n";
      return run.exit_code;
    }
    if (cmd_ingest->parsed()) {
      mixse::Dataset ds = mixse::read_dataset(data_path);
      if (ingest_scale != 1.0) ds.X /= ingest_scale;
      if (ingest_center) ds.X.rowwise() -= ds.X.colwise().mean();
      if (fmap_p > 0)
        ds = mixse::random_feature_map(ds, fmap_p, static_cast<std::uint64_t>(fmap_seed));
      int K = ds.label_dim() == 1 ? 2 : ds.label_dim();
      mixse::MixtureModel model = mixse::estimate_from_data(ds, K);
      mixse::write_model(out_path, model);
      std::cout << "ingested n=" << ds.n() << " d=" << ds.dim() << " K=" << model.K << " -> "
                << out_path << "\n";
      return 0;
    }
    if (cmd_amp->parsed()) {
      ExperimentConfig cfg = load_config(config_path, overrides, out_path, threads, seed);
      mixse::ScenarioAssets assets = mixse::build_scenario(cfg);
      double alpha = cfg.alpha_grid.front();
      double lambda = cfg.optimal_lambda ? cfg.lambda_min : cfg.lambda_grid.front();
      int n = static_cast<int>(std::lround(alpha * cfg.d));
      mixse::Dataset data = mixse::sample(assets.model, n, cfg.solver.seed + 7);

      mixse::AmpOptions opts;
      opts.loss = cfg.loss;
      opts.penalty = cfg.penalty;
      opts.lambda = lambda;
      mixse::AmpResult amp = mixse::amp_run(data, assets.model, opts, cfg.solver.seed);

      mixse::ErmProblem pb;
      pb.data = &data;
      pb.loss = cfg.loss;
      pb.penalty = cfg.penalty;
      pb.lambda = lambda;
      pb.fit_bias = false;
      pb.tol = cfg.erm_tol;
      mixse::ErmSolution erm = mixse::fit(pb, cfg.solver.seed);

      double rel = (amp.W - erm.W.row(0).transpose()).norm() / std::max(1e-300, erm.W.norm());
      const auto& ov = amp.trajectory.back();
      std::cout << "amp iterations=" << amp.iterations << " converged=" << amp.converged
                << "\nrelative |W_amp - W_erm| = " << rel << "\noverlaps q=(" << ov.q1 << ","
                << ov.q2 << ") m=(" << ov.m1 << "," << ov.m2 << ")\n";
      return amp.converged ? 0 : 2;
    }
    if (cmd_bayes->parsed()) {
      mixse::BayesSpec spec;
      spec.K = bayes_K;
      spec.delta = bayes_delta;
      spec.alpha = bayes_alpha;
      spec.theta = mixse::Mat::Identity(bayes_K, bayes_K);
      spec.priors = mixse::Vec::Constant(bayes_K, 1.0 / bayes_K);
      mixse::BayesEstimate est =
          mixse::bayes_error(spec, bayes_mc, seed < 0 ? 0 : static_cast<std::uint64_t>(seed));
      std::cout << "bayes_error=" << est.value << " stderr=" << est.stderr_mc << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::string msg = e.what();
    return msg.rfind("config:", 0) == 0 ? 1 : 3;
  }
  return 0;
}
