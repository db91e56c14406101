#include "mixse/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "mixse/io.hpp"
#include "mixse/observables.hpp"
#include "mixse/random.hpp"

namespace mixse {

namespace {

using nlohmann::json;

LossKind parse_loss(const std::string& s) {
  if (s == "square") return LossKind::Square;
  if (s == "cross_entropy") return LossKind::CrossEntropy;
  if (s == "logistic") return LossKind::Logistic;
  throw std::runtime_error("config: unknown loss '" + s + "'");
}

PenaltyKind parse_penalty(const std::string& s) {
  if (s == "ridge") return PenaltyKind::Ridge;
  if (s == "l1") return PenaltyKind::L1;
  throw std::runtime_error("config: unknown penalty '" + s + "'");
}

std::vector<double> parse_grid(const json& j, const std::string& field) {
  std::vector<double> grid;
  const json& g = j.at(field);
  if (g.is_array()) {
    grid = g.get<std::vector<double>>();
  } else if (g.is_object()) {
    double lo = g.at("min").get<double>();
    double hi = g.at("max").get<double>();
    int steps = g.at("steps").get<int>();
    bool logscale = g.value("log", false);
    for (int i = 0; i < steps; ++i) {
      double t = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
      grid.push_back(logscale ? lo * std::pow(hi / lo, t) : lo + t * (hi - lo));
    }
  } else {
    throw std::runtime_error("config: field '" + field + "' must be an array or {min,max,steps}");
  }
  if (grid.empty()) throw std::runtime_error("config: field '" + field + "' is empty");
  return grid;
}

std::string read_git_revision() {
  FILE* pipe = popen("git rev-parse HEAD 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  if (j.contains("schema") && j.value("schema", "") == "mixse-manifest")
    j = j.at("config");  // manifest round-trip

  ExperimentConfig cfg;
  try {
    cfg.scenario = j.at("scenario").get<std::string>();
    cfg.loss = parse_loss(j.at("loss").get<std::string>());
    cfg.penalty = parse_penalty(j.value("penalty", "ridge"));
    cfg.alpha_grid = parse_grid(j, "alpha_grid");
    if (j.contains("optimal_lambda")) {
      cfg.optimal_lambda = true;
      cfg.lambda_min = j["optimal_lambda"].at("min").get<double>();
      cfg.lambda_max = j["optimal_lambda"].at("max").get<double>();
    } else {
      cfg.lambda_grid = parse_grid(j, "lambda_grid");
    }
    cfg.d = j.value("d", 1000);
    cfg.seeds = j.value("seeds", 0);
    cfg.test_samples = j.value("test_samples", 20000);
    cfg.erm_tol = j.value("erm_tol", 1e-8);
    cfg.skip_theory = j.value("skip_theory", false);
    cfg.K = j.value("K", 2);
    cfg.delta = j.value("delta", 0.5);
    cfg.delta1 = j.value("delta1", 0.1);
    cfg.delta2 = j.value("delta2", 1.0);
    cfg.rho_sparse = j.value("rho_sparse", 0.1);
    cfg.realisable = j.value("realisable", true);
    cfg.reduction = j.value("reduction", false);
    cfg.priors = j.value("priors", std::vector<double>{});
    cfg.dataset_path = j.value("dataset", "");
    if (j.contains("feature_map")) {
      cfg.feature_map.enabled = true;
      cfg.feature_map.p = j["feature_map"].at("p").get<int>();
      cfg.feature_map.seed = j["feature_map"].value("seed", 0);
    }
    cfg.out = j.value("out", "");
    cfg.threads = j.value("threads", 0);

    if (j.contains("solver")) {
      const json& s = j["solver"];
      cfg.solver.mc_samples = s.value("mc_samples", cfg.solver.mc_samples);
      cfg.solver.damping = s.value("damping", cfg.solver.damping);
      cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
      cfg.solver.conv_tol = s.value("conv_tol", cfg.solver.conv_tol);
      cfg.solver.seed = s.value("seed", static_cast<std::uint64_t>(0));
      cfg.solver.anneal = s.value("anneal", false);
      if (s.contains("path")) {
        std::string p = s["path"].get<std::string>();
        if (p == "corollary_ridge") cfg.solver.path_override = PriorPathKind::CorollaryRidge;
        else if (p == "uniform_cov") cfg.solver.path_override = PriorPathKind::UniformCov;
        else if (p == "binary_diagonal") cfg.solver.path_override = PriorPathKind::BinaryDiagonal;
        else if (p == "binary_generic") cfg.solver.path_override = PriorPathKind::BinaryGeneric;
        else throw std::runtime_error("config: unknown solver.path '" + p + "'");
      }
    }
  } catch (const json::out_of_range& e) {
    throw std::runtime_error(std::string("config: missing field: ") + e.what());
  } catch (const json::type_error& e) {
    throw std::runtime_error(std::string("config: bad field type: ") + e.what());
  }

  if (cfg.dataset_path.empty() && cfg.scenario == "real_data")
    throw std::runtime_error("config: real_data requires 'dataset'");
  cfg.raw_json = j.dump();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ScenarioAssets build_scenario(const ExperimentConfig& cfg) {
  ScenarioAssets assets;
  assets.id = cfg.scenario;

  Vec priors;
  if (!cfg.priors.empty()) {
    priors = Eigen::Map<const Vec>(cfg.priors.data(), static_cast<Eigen::Index>(cfg.priors.size()));
  }

  if (cfg.scenario == "sparse") {
    ScenarioSparse s{cfg.rho_sparse, cfg.delta1, cfg.delta2, cfg.d};
    assets.model = build_sparse_scenario(s, cfg.solver.seed).model;
  } else if (cfg.scenario == "multiclass_isotropic") {
    if (priors.size() == 0) priors = Vec::Constant(cfg.K, 1.0 / cfg.K);
    assets.model = build_isotropic_model(cfg.K, cfg.delta, cfg.d, priors);
  } else if (cfg.scenario == "two_cluster_anisotropic") {
    Vec mu = Vec::Zero(cfg.d);
    mu(0) = 1.0;
    if (priors.size() == 0) priors = Vec::Constant(2, 0.5);
    std::vector<Mat> covs = {cfg.delta1 * Mat::Identity(cfg.d, cfg.d),
                             cfg.delta2 * Mat::Identity(cfg.d, cfg.d)};
    assets.model = MixtureModel::make({mu, -mu}, covs, priors, MixtureModel::pm1_codes());
  } else if (cfg.scenario == "xor") {
    XorScenario xs = build_xor_scenario(cfg.delta, cfg.realisable, cfg.d);
    assets.model = cfg.reduction ? xs.two_cluster : xs.four_cluster;
    assets.id = cfg.reduction ? "xor_reduced" : "xor";
  } else if (cfg.scenario == "real_data") {
    Dataset ds = read_dataset(cfg.dataset_path);
    if (cfg.feature_map.enabled)
      ds = random_feature_map(ds, cfg.feature_map.p, cfg.feature_map.seed);
    int K = ds.label_dim() == 1 ? 2 : ds.label_dim();
    assets.model = estimate_from_data(ds, K);
    assets.pool = std::move(ds);
  } else {
    throw std::runtime_error("config: unknown scenario '" + cfg.scenario + "'");
  }

  assets.spec = ChannelSpec{cfg.loss, assets.model.label_codes, assets.model.priors};
  return assets;
}

std::string result_csv_header() {
  return "scenario,K,alpha,lambda,eps_g,eps_t,eps_l,"
         "eps_g_sim,eps_g_sim_se,eps_t_sim,eps_t_sim_se,eps_l_sim,eps_l_sim_se,"
         "q_avg,m_avg,v_avg,converged,hit_spurious,lambda_at_boundary,iterations";
}

std::string to_csv(const ResultRow& r) {
  std::ostringstream s;
  s << r.scenario << ',' << r.K << ',' << fmt(r.alpha) << ',' << fmt(r.lambda) << ','
    << fmt(r.eps_g) << ',' << fmt(r.eps_t) << ',' << fmt(r.eps_l) << ',' << fmt(r.eps_g_sim)
    << ',' << fmt(r.eps_g_sim_se) << ',' << fmt(r.eps_t_sim) << ',' << fmt(r.eps_t_sim_se) << ','
    << fmt(r.eps_l_sim) << ',' << fmt(r.eps_l_sim_se) << ',' << fmt(r.q_avg) << ','
    << fmt(r.m_avg) << ',' << fmt(r.v_avg) << ',' << (r.converged ? 1 : 0) << ','
    << (r.hit_spurious ? 1 : 0) << ',' << (r.lambda_at_boundary ? 1 : 0) << ',' << r.iterations;
  return s.str();
}

OptimalLambda optimal_lambda(const std::function<double(double)>& eps_of_lambda, double lo,
                             double hi, int max_evals) {
  if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("optimal_lambda: bad interval");
  OptimalLambda out;
  struct Eval {
    double lam, eps;
  };
  std::vector<Eval> evals;
  auto probe = [&](double lam) {
    double e = eps_of_lambda(lam);
    evals.push_back({lam, e});
    return e;
  };

  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo), b = std::log(hi);
  probe(lo);
  probe(hi);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = probe(std::exp(x1)), f2 = probe(std::exp(x2));
  while (static_cast<int>(evals.size()) < max_evals && (b - a) > 0.05) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = probe(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = probe(std::exp(x2));
    }
  }

  auto best = std::min_element(evals.begin(), evals.end(),
                               [](const Eval& u, const Eval& v) { return u.eps < v.eps; });
  out.lambda_star = best->lam;
  out.eps_g_star = best->eps;
  out.evals = static_cast<int>(evals.size());
  out.lower_boundary = best->lam <= lo * 1.0000001;
  out.upper_boundary = best->lam >= hi * 0.9999999;
  return out;
}

namespace {

struct SimStats {
  double g_mean = 0, g_se = 0, t_mean = 0, t_se = 0, l_mean = 0, l_se = 0;
};

SimStats aggregate(const std::vector<ErrorTriple>& runs) {
  SimStats s;
  const int n = static_cast<int>(runs.size());
  for (const auto& r : runs) {
    s.g_mean += r.eps_g;
    s.t_mean += r.eps_t;
    s.l_mean += r.eps_l;
  }
  s.g_mean /= n;
  s.t_mean /= n;
  s.l_mean /= n;
  if (n > 1) {
    double vg = 0, vt = 0, vl = 0;
    for (const auto& r : runs) {
      vg += (r.eps_g - s.g_mean) * (r.eps_g - s.g_mean);
      vt += (r.eps_t - s.t_mean) * (r.eps_t - s.t_mean);
      vl += (r.eps_l - s.l_mean) * (r.eps_l - s.l_mean);
    }
    s.g_se = std::sqrt(vg / (n - 1) / n);
    s.t_se = std::sqrt(vt / (n - 1) / n);
    s.l_se = std::sqrt(vl / (n - 1) / n);
  }
  return s;
}

ErrorTriple simulate_once(const ExperimentConfig& cfg, const ScenarioAssets& assets, double alpha,
                          double lambda, std::uint64_t seed) {
  const int n = std::max(1, static_cast<int>(std::lround(alpha * cfg.d)));
  Dataset train, test;
  if (assets.pool) {
    const Dataset& pool = *assets.pool;
    std::vector<int> order(pool.n());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = pool.n() - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(rng.engine()() % static_cast<std::uint64_t>(i + 1))]);
    if (n >= pool.n()) throw std::runtime_error("simulate: dataset too small for alpha*d");
    int ntest = std::min(cfg.test_samples, pool.n() - n);
    auto take = [&](int from, int count) {
      Dataset ds;
      ds.X.resize(count, pool.dim());
      ds.Y.resize(count, pool.label_dim());
      for (int i = 0; i < count; ++i) {
        ds.X.row(i) = pool.X.row(order[static_cast<size_t>(from + i)]);
        ds.Y.row(i) = pool.Y.row(order[static_cast<size_t>(from + i)]);
      }
      return ds;
    };
    train = take(0, n);
    test = take(n, ntest);
  } else {
    train = sample(assets.model, n, seed);
    test = sample(assets.model, cfg.test_samples, seed + 0x517cc1b727220a95ull);
  }

  ErmProblem pb;
  pb.data = &train;
  pb.test = &test;
  pb.loss = cfg.loss;
  pb.penalty = cfg.penalty;
  pb.lambda = lambda;
  pb.fit_bias = true;
  pb.tol = cfg.erm_tol;
  ErmSolution sol = fit(pb, seed);
  return sol.train;  // eps_t/eps_l on train, eps_g on test
}

ResultRow run_point(const ExperimentConfig& cfg, const ScenarioAssets& assets, double alpha,
                    double lambda, bool lambda_at_boundary) {
  ResultRow row;
  row.scenario = assets.id;
  row.K = assets.model.K;
  row.alpha = alpha;
  row.lambda = lambda;
  row.lambda_at_boundary = lambda_at_boundary;

  auto t0 = std::chrono::steady_clock::now();
  if (cfg.skip_theory) {
    row.converged = true;
    row.iterations = 0;
  } else try {
    SolverConfig sc = cfg.solver;
    sc.alpha = alpha;
    sc.lambda = lambda;
    if (lambda < 1e-3 && !sc.anneal) sc.anneal = true;
    SolveReport report = solve(assets.model, cfg.loss, cfg.penalty, sc);
    row.converged = report.converged;
    row.hit_spurious = report.hit_spurious;
    row.iterations = report.iterations;

    ErrorTriple err =
        errors_from_params(report.params, assets.spec, 2 * sc.mc_samples, sc.seed + 1, sc.prox);
    row.eps_g = err.eps_g;
    row.eps_t = err.eps_t;
    row.eps_l = err.eps_l;

    const int K = assets.model.K, L = assets.model.L;
    double q = 0, m = 0, v = 0;
    for (int k = 0; k < K; ++k) {
      q += assets.model.priors(k) * report.params.Q[k].trace() / L;
      m += assets.model.priors(k) * report.params.m[k].norm();
      v += assets.model.priors(k) * report.params.V[k].trace() / L;
    }
    row.q_avg = q;
    row.m_avg = m;
    row.v_avg = v;
  } catch (const std::exception&) {
    row.converged = false;
  }

  if (cfg.seeds > 0) {
    std::vector<ErrorTriple> runs;
    for (int s = 0; s < cfg.seeds; ++s) {
      runs.push_back(
          simulate_once(cfg, assets, alpha, lambda, cfg.solver.seed + 1000003ull * (s + 1)));
    }
    SimStats st = aggregate(runs);
    row.eps_g_sim = st.g_mean;
    row.eps_g_sim_se = st.g_se;
    row.eps_t_sim = st.t_mean;
    row.eps_t_sim_se = st.t_se;
    row.eps_l_sim = st.l_mean;
    row.eps_l_sim_se = st.l_se;
  }
  row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

int thread_count(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("MIXSE_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& cfg) {
  ScenarioAssets assets = build_scenario(cfg);

  struct Point {
    double alpha, lambda;
    bool boundary;
  };
  std::vector<Point> points;
  for (double alpha : cfg.alpha_grid) {
    if (cfg.optimal_lambda) {
      auto eps_of = [&](double lam) {
        SolverConfig sc = cfg.solver;
        sc.alpha = alpha;
        sc.lambda = lam;
        if (lam < 1e-3 && !sc.anneal) sc.anneal = true;
        SolveReport rep = solve(assets.model, cfg.loss, cfg.penalty, sc);
        return errors_from_params(rep.params, assets.spec, 2 * sc.mc_samples, sc.seed + 1, sc.prox)
            .eps_g;
      };
      OptimalLambda best = optimal_lambda(eps_of, cfg.lambda_min, cfg.lambda_max);
      points.push_back({alpha, best.lambda_star, best.lower_boundary || best.upper_boundary});
    } else {
      for (double lam : cfg.lambda_grid) points.push_back({alpha, lam, false});
    }
  }

  RunOutput out;
  out.rows.resize(points.size());
  const int nthreads = std::min<int>(thread_count(cfg), static_cast<int>(points.size()));
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      out.rows[i] = run_point(cfg, assets, points[i].alpha, points[i].lambda, points[i].boundary);
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& row : out.rows)
    if (!row.converged) out.exit_code = 2;

  if (!cfg.out.empty()) {
    std::ofstream csv(cfg.out);
    if (!csv.good()) throw std::runtime_error("cannot open " + cfg.out);
    csv << result_csv_header() << "\n";
    for (const auto& row : out.rows) csv << to_csv(row) << "\n";

    json manifest;
    manifest["schema"] = "mixse-manifest";
    manifest["git_revision"] = read_git_revision();
    manifest["config"] = json::parse(cfg.raw_json);
    manifest["rows"] = out.rows.size();
    manifest["exit_code"] = out.exit_code;
    std::vector<double> timings;
    for (const auto& row : out.rows) timings.push_back(row.wall_time_s);
    manifest["wall_time_s"] = timings;
    std::ofstream mf(cfg.out + ".manifest.json");
    mf << manifest.dump(2) << "\n";
  }
  return out;
}

}  // namespace mixse
