#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mixse/erm.hpp"
#include "mixse/state_evolution.hpp"

namespace mixse {

struct FeatureMapSpec {
  bool enabled = false;
  int p = 0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string scenario;  // sparse | multiclass_isotropic | two_cluster_anisotropic | xor | real_data
  LossKind loss = LossKind::CrossEntropy;
  PenaltyKind penalty = PenaltyKind::Ridge;
  std::vector<double> alpha_grid;
  std::vector<double> lambda_grid;
  bool optimal_lambda = false;  // replaces lambda_grid by a per-alpha search
  double lambda_min = 1e-4, lambda_max = 1e2;

  int d = 1000;
  int seeds = 0;  // ERM instances per grid point; 0 disables simulation
  int test_samples = 20000;
  double erm_tol = 1e-8;
  bool skip_theory = false;  // simulation-only sweeps

  // scenario parameters
  int K = 2;
  double delta = 0.5;
  double delta1 = 0.1, delta2 = 1.0, rho_sparse = 0.1;
  bool realisable = true, reduction = false;  // xor
  std::vector<double> priors;                 // empty = balanced
  std::string dataset_path;
  FeatureMapSpec feature_map;

  std::string out;  // CSV path; manifest written alongside as <out>.manifest.json
  int threads = 0;  // 0 = MIXSE_THREADS or hardware count
  SolverConfig solver;

  std::string raw_json;  // config echo for the manifest
};

/// Parses a JSON config (or a manifest produced by a previous run, whose
/// embedded config is then used). Throws std::runtime_error with field
/// diagnostics on invalid input.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

struct ScenarioAssets {
  MixtureModel model;
  ChannelSpec spec;
  std::string id;
  std::optional<Dataset> pool;  // real_data: full table for subsampling
};

ScenarioAssets build_scenario(const ExperimentConfig& cfg);

struct ResultRow {
  static constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  std::string scenario;
  int K = 0;
  double alpha = 0.0, lambda = 0.0;
  double eps_g = kNan, eps_t = kNan, eps_l = kNan;
  double eps_g_sim = kNan, eps_g_sim_se = kNan;
  double eps_t_sim = kNan, eps_t_sim_se = kNan;
  double eps_l_sim = kNan, eps_l_sim_se = kNan;
  double q_avg = kNan, m_avg = kNan, v_avg = kNan;
  bool converged = false, hit_spurious = false, lambda_at_boundary = false;
  int iterations = 0;
  double wall_time_s = 0.0;  // manifest only; kept out of the CSV for reruns
};

std::string result_csv_header();
std::string to_csv(const ResultRow& row);

struct RunOutput {
  std::vector<ResultRow> rows;
  int exit_code = 0;  // 0 ok, 2 if any grid point failed to converge
};

RunOutput run_experiment(const ExperimentConfig& cfg);

struct OptimalLambda {
  double lambda_star = 0.0;
  double eps_g_star = 0.0;
  bool lower_boundary = false, upper_boundary = false;
  int evals = 0;
};

/// Golden-section search on log lambda; returns the argmin over all
/// evaluated points and flags interval-edge hits.
OptimalLambda optimal_lambda(const std::function<double(double)>& eps_of_lambda, double lo,
                             double hi, int max_evals = 24);

}  // namespace mixse
