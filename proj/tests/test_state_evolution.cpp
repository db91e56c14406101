#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "mixse/observables.hpp"
#include "mixse/state_evolution.hpp"

using namespace mixse;

namespace {

constexpr double kRoot2Pi = 2.5066282746310002;

// adaptive Simpson quadrature for E_{xi~N(0,1)}[g(xi)], independent of the
// closed-form path under test
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

// expectation over xi ~ N(0,1), integrating separately across the given
// breakpoints so kinks and jumps of g do not defeat the error estimate
double gauss_expect(const std::function<double(double)>& g, const std::vector<double>& breaks,
                    double tol = 1e-12) {
  std::vector<double> pts = {-14.0, 14.0};
  for (double b : breaks)
    if (b > -14.0 && b < 14.0) pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  auto f = [&](double x) { return g(x) * std::exp(-0.5 * x * x) / kRoot2Pi; };
  double total = 0.0;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    double a = pts[i] + 1e-13, b = pts[i + 1] - 1e-13;
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
  }
  return total;
}

MixtureModel binary_isotropic(double delta, int d) {
  Vec mu = Vec::Zero(d);
  mu(0) = 1.0;
  Vec p(2);
  p << 0.5, 0.5;
  Mat S = delta * Mat::Identity(d, d);
  return MixtureModel::make({mu, -mu}, {S, S}, p, MixtureModel::pm1_codes());
}

double max_param_diff(const OrderParams& a, const OrderParams& b) {
  double r = (a.b - b.b).norm();
  for (int k = 0; k < a.clusters(); ++k) {
    r = std::max(r, (a.Q[k] - b.Q[k]).norm());
    r = std::max(r, (a.V[k] - b.V[k]).norm());
    r = std::max(r, (a.m[k] - b.m[k]).norm());
    r = std::max(r, (a.Qhat[k] - b.Qhat[k]).norm());
    r = std::max(r, (a.Vhat[k] - b.Vhat[k]).norm());
    r = std::max(r, (a.mhat[k] - b.mhat[k]).norm());
  }
  return r;
}

}  // namespace

TEST_SUITE("state_evolution") {

TEST_CASE("soft-threshold moments match adaptive quadrature") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 50; ++t) {
    double v = 2.0 * normal(gen);
    double u = 0.05 + std::abs(normal(gen));
    double lam = std::abs(normal(gen));
    SoftThresholdMoments mom = soft_threshold_moments(v, u, lam);
    double su = std::sqrt(u);
    std::vector<double> breaks = {(lam - v) / su, (-lam - v) / su};
    double p = gauss_expect(
        [&](double z) { return std::abs(v + su * z) > lam ? 1.0 : 0.0; }, breaks);
    double m1 =
        gauss_expect([&](double z) { return soft_threshold(v + su * z, lam); }, breaks);
    double m2 = gauss_expect(
        [&](double z) {
          double s = soft_threshold(v + su * z, lam);
          return s * s;
        },
        breaks);
    CHECK(mom.p == doctest::Approx(p).epsilon(1e-8));
    CHECK(mom.m1 == doctest::Approx(m1).epsilon(1e-8));
    CHECK(mom.m2 == doctest::Approx(m2).epsilon(1e-8));
  }
}

TEST_CASE("channel update: alpha = 0 kills the hats") {
  ChannelSpec spec{LossKind::CrossEntropy, MixtureModel::onehot_codes(3),
                   Vec::Constant(3, 1.0 / 3.0)};
  SolverConfig cfg;
  cfg.alpha = 0.0;
  cfg.mc_samples = 200;
  OrderParams p = OrderParams::identity_init(3, 3);
  ChannelPool pool(3, 3, cfg.mc_samples, 1);
  ChannelUpdate ch = channel_update(p, spec, cfg, 1.0, pool);
  for (int k = 0; k < 3; ++k) {
    CHECK(ch.Qhat[k].norm() == 0.0);
    CHECK(ch.Vhat[k].norm() == 0.0);
    CHECK(ch.mhat[k].norm() == 0.0);
  }
}

TEST_CASE("channel update: square closed form matches Monte Carlo") {
  ChannelSpec spec{LossKind::Square, MixtureModel::onehot_codes(2), Vec::Constant(2, 0.5)};
  SolverConfig cfg;
  cfg.alpha = 1.7;
  cfg.mc_samples = 100000;
  OrderParams p = OrderParams::identity_init(2, 2);
  p.m[0] << 0.3, -0.1;
  p.m[1] << -0.2, 0.4;
  p.b << 0.05, -0.02;
  ChannelPool pool(2, 2, cfg.mc_samples, 5);

  ChannelUpdate closed = channel_update(p, spec, cfg, 1.0, pool);
  cfg.resample = true;  // forces the Monte Carlo path for the square loss
  ChannelUpdate mc = channel_update(p, spec, cfg, 1.0, pool);

  double tol = 3.0 / std::sqrt(static_cast<double>(cfg.mc_samples));
  for (int k = 0; k < 2; ++k) {
    CHECK((closed.Qhat[k] - mc.Qhat[k]).norm() <= tol);
    CHECK((closed.mhat[k] - mc.mhat[k]).norm() <= tol);
    CHECK((closed.Vhat[k] - mc.Vhat[k]).norm() <= tol);
  }
}

TEST_CASE("channel update: logistic sign symmetry of mhat") {
  ChannelSpec spec{LossKind::Logistic, MixtureModel::pm1_codes(), Vec::Constant(2, 0.5)};
  SolverConfig cfg;
  cfg.alpha = 2.0;
  cfg.mc_samples = 50000;
  OrderParams p = OrderParams::identity_init(2, 1);
  ChannelPool pool(2, 1, cfg.mc_samples, 3);
  ChannelUpdate ch = channel_update(p, spec, cfg, 1.0, pool);
  double mc_err = 3.0 * cfg.alpha / std::sqrt(static_cast<double>(cfg.mc_samples));
  CHECK(ch.mhat[0](0) == doctest::Approx(-ch.mhat[1](0)).epsilon(0.05).scale(1.0));
  CHECK(std::abs(ch.mhat[0](0) + ch.mhat[1](0)) <= mc_err);
}

TEST_CASE("prior update: zero hats reduce the resolvent to lambda^{-1}") {
  MixtureModel model = binary_isotropic(0.8, 40);
  SolverConfig cfg;
  PriorPath path = PriorPath::select(model, LossKind::Logistic, PenaltyKind::Ridge, cfg);
  path.rescaled = false;  // exercise the plain-lambda resolvent
  const double lambda = 0.37;

  OrderParams hats = OrderParams::identity_init(2, 1);
  for (int k = 0; k < 2; ++k) {
    hats.Qhat[k].setZero();
    hats.Vhat[k].setZero();
    hats.mhat[k].setZero();
  }
  std::vector<Mat> Q(2, Mat(1, 1)), V(2, Mat(1, 1));
  std::vector<Vec> m(2, Vec(1));
  prior_update(path, lambda, hats, &Q, &m, &V);
  for (int k = 0; k < 2; ++k) {
    CHECK(Q[k](0, 0) == doctest::Approx(0.0));
    CHECK(m[k](0) == doctest::Approx(0.0));
    CHECK(V[k](0, 0) == doctest::Approx(0.8 / lambda).epsilon(1e-12));
  }
}

TEST_CASE("prior update is invariant under atom permutation") {
  ScenarioSparse sp{0.3, 0.2, 1.0, 200};
  SparseScenario sc = build_sparse_scenario(sp, 9);
  SolverConfig cfg;
  PriorPath path = PriorPath::from_spectral(sc.spectral, 1, PenaltyKind::L1, cfg);

  PriorPath shuffled = path;
  std::mt19937_64 gen(4);
  std::shuffle(shuffled.spectral.atoms.begin(), shuffled.spectral.atoms.end(), gen);

  OrderParams hats = OrderParams::identity_init(2, 1);
  hats.Qhat[0](0, 0) = 0.8;
  hats.Qhat[1](0, 0) = 0.7;
  hats.Vhat[0](0, 0) = 0.6;
  hats.Vhat[1](0, 0) = 0.5;
  hats.mhat[0](0) = 0.4;
  hats.mhat[1](0) = -0.45;

  std::vector<Mat> Q1(2, Mat(1, 1)), V1(2, Mat(1, 1)), Q2(2, Mat(1, 1)), V2(2, Mat(1, 1));
  std::vector<Vec> m1(2, Vec(1)), m2(2, Vec(1));
  prior_update(path, 0.05, hats, &Q1, &m1, &V1);
  prior_update(shuffled, 0.05, hats, &Q2, &m2, &V2);
  for (int k = 0; k < 2; ++k) {
    CHECK(Q1[k](0, 0) == doctest::Approx(Q2[k](0, 0)).epsilon(1e-12));
    CHECK(m1[k](0) == doctest::Approx(m2[k](0)).epsilon(1e-12));
    CHECK(V1[k](0, 0) == doctest::Approx(V2[k](0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("square uniform-covariance fixed point solves the scalar V equation") {
  // balanced K=2 one-hot square regression; V satisfies
  // lam V^2 + (lam + alpha Delta - Delta) V = Delta, with the explicit root
  // [Delta (1-alpha) - lam + sqrt((Delta - alpha Delta - lam)^2 + 4 Delta lam)] / (2 lam)
  const double delta = 0.5, lambda = 1.0, alpha = 1.0;
  const int K = 2, d = 50;
  MixtureModel model = build_isotropic_model(K, delta, d, Vec::Constant(K, 0.5));
  SolverConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda = lambda;
  cfg.conv_tol = 1e-12;
  cfg.mc_samples = 10;  // square channel is closed form; pool unused
  SolveReport rep = solve(model, LossKind::Square, PenaltyKind::Ridge, cfg);
  REQUIRE(rep.converged);
  CHECK(rep.path == PriorPathKind::UniformCov);

  double root = (delta * (1 - alpha) - lambda +
                 std::sqrt(std::pow(delta - alpha * delta - lambda, 2) + 4 * delta * lambda)) /
                (2 * lambda);

  // independent bisection on lam V^2 + (lam + alpha Delta - Delta) V - Delta = 0
  auto g = [&](double v) {
    return lambda * v * v + (lambda + alpha * delta - delta) * v - delta;
  };
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (g(mid) > 0 ? hi : lo) = mid;
  }
  CHECK(root == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-10));

  for (int k = 0; k < K; ++k) {
    CHECK(rep.params.V[k](0, 0) == doctest::Approx(root).epsilon(1e-8));
    CHECK(rep.params.V[k](0, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
  }
}

TEST_CASE("huge lambda kills the weights") {
  MixtureModel model = build_isotropic_model(3, 0.5, 30, Vec::Constant(3, 1.0 / 3.0));
  SolverConfig cfg;
  cfg.alpha = 2.0;
  cfg.lambda = 1e6;
  cfg.mc_samples = 4000;
  cfg.seed = 12;
  SolveReport rep = solve(model, LossKind::CrossEntropy, PenaltyKind::Ridge, cfg);
  REQUIRE(rep.converged);
  for (int k = 0; k < 3; ++k) CHECK(rep.params.Q[k].norm() <= 1e-3);
}

TEST_CASE("solve is deterministic and initialization-invariant") {
  MixtureModel model = binary_isotropic(0.5, 40);
  SolverConfig cfg;
  cfg.alpha = 1.5;
  cfg.lambda = 1.0;
  cfg.mc_samples = 5000;
  cfg.seed = 77;
  cfg.conv_tol = 1e-8;

  SolveReport a = solve(model, LossKind::Logistic, PenaltyKind::Ridge, cfg);
  SolveReport b = solve(model, LossKind::Logistic, PenaltyKind::Ridge, cfg);
  REQUIRE(a.converged);
  CHECK(max_param_diff(a.params, b.params) == 0.0);  // bit-identical
  CHECK(a.iterations == b.iterations);

  // a very different (but valid) starting point lands on the same fixed point
  OrderParams init = OrderParams::identity_init(2, 1);
  for (int k = 0; k < 2; ++k) {
    init.Q[k] *= 7.0;
    init.V[k] *= 0.1;
    init.m[k].setConstant(k == 0 ? 2.0 : -2.0);
    init.Qhat[k].setConstant(0.3);
    init.Vhat[k].setConstant(0.2);
    init.mhat[k].setConstant(k == 0 ? 0.5 : -0.5);
  }
  SolverConfig cfg2 = cfg;
  cfg2.init = init;
  SolveReport c = solve(model, LossKind::Logistic, PenaltyKind::Ridge, cfg2);
  REQUIRE(c.converged);
  CHECK(max_param_diff(a.params, c.params) <= 10.0 * cfg.conv_tol);
}

TEST_CASE("fixed-point residual certificate") {
  MixtureModel model = binary_isotropic(0.7, 30);
  SolverConfig cfg;
  cfg.alpha = 2.0;
  cfg.lambda = 0.3;
  cfg.mc_samples = 8000;
  cfg.seed = 5;
  SolveReport rep = solve(model, LossKind::Logistic, PenaltyKind::Ridge, cfg);
  REQUIRE(rep.converged);
  CHECK(rep.residual <= cfg.conv_tol);

  // converged Q, V are symmetric positive definite
  for (int k = 0; k < 2; ++k) {
    CHECK((rep.params.Q[k] - rep.params.Q[k].transpose()).norm() <= 1e-10);
    CHECK((rep.params.V[k] - rep.params.V[k].transpose()).norm() <= 1e-10);
    CHECK(rep.params.Q[k](0, 0) > 0.0);
    CHECK(rep.params.V[k](0, 0) > 0.0);
  }
}

TEST_CASE("path equivalence on the isotropic binary model") {
  const double delta = 0.6, lambda = 0.05, alpha = 1.5;
  const int d = 150;
  MixtureModel model = binary_isotropic(delta, d);

  auto run_with = [&](PriorPathKind kind) {
    SolverConfig cfg;
    cfg.alpha = alpha;
    cfg.lambda = lambda;
    cfg.conv_tol = 1e-10;
    cfg.mc_samples = 10;  // square loss: channel closed form
    cfg.path_override = kind;
    return solve(model, LossKind::Square, PenaltyKind::Ridge, cfg);
  };
  SolveReport corr = run_with(PriorPathKind::CorollaryRidge);
  SolveReport diag = run_with(PriorPathKind::BinaryDiagonal);
  SolveReport gen = run_with(PriorPathKind::BinaryGeneric);
  REQUIRE(corr.converged);
  REQUIRE(diag.converged);
  REQUIRE(gen.converged);

  ChannelSpec spec{LossKind::Square, model.label_codes, model.priors};
  double eg_corr = errors_from_params(corr.params, spec, 1000, 1).eps_g;
  double eg_diag = errors_from_params(diag.params, spec, 1000, 1).eps_g;
  double eg_gen = errors_from_params(gen.params, spec, 1000, 1).eps_g;

  for (const SolveReport* other : {&diag, &gen}) {
    for (int k = 0; k < 2; ++k) {
      CHECK(corr.params.Q[k](0, 0) ==
            doctest::Approx(other->params.Q[k](0, 0)).epsilon(1e-4));
      CHECK(corr.params.m[k](0) == doctest::Approx(other->params.m[k](0)).epsilon(1e-4));
      CHECK(corr.params.V[k](0, 0) ==
            doctest::Approx(other->params.V[k](0, 0)).epsilon(1e-4));
    }
  }
  CHECK(eg_corr == doctest::Approx(eg_diag).epsilon(1e-4));
  CHECK(eg_corr == doctest::Approx(eg_gen).epsilon(1e-4));

  // one-hot variant: corollary path vs the compact uniform-covariance system
  MixtureModel onehot = build_isotropic_model(2, delta, d, Vec::Constant(2, 0.5));
  SolverConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda = lambda;
  cfg.conv_tol = 1e-10;
  cfg.mc_samples = 10;
  cfg.path_override = PriorPathKind::UniformCov;
  SolveReport uni = solve(onehot, LossKind::Square, PenaltyKind::Ridge, cfg);
  cfg.path_override = PriorPathKind::CorollaryRidge;
  SolveReport cor2 = solve(onehot, LossKind::Square, PenaltyKind::Ridge, cfg);
  REQUIRE(uni.converged);
  REQUIRE(cor2.converged);
  for (int k = 0; k < 2; ++k) {
    CHECK((uni.params.Q[k] - cor2.params.Q[k]).norm() <= 1e-4);
    CHECK((uni.params.V[k] - cor2.params.V[k]).norm() <= 1e-4);
    CHECK((uni.params.m[k] - cor2.params.m[k]).norm() <= 1e-4);
  }
}

TEST_CASE("doubling the Monte Carlo pool moves eps_g within its standard error") {
  MixtureModel model = build_isotropic_model(3, 0.5, 30, Vec::Constant(3, 1.0 / 3.0));
  ChannelSpec spec{LossKind::CrossEntropy, model.label_codes, model.priors};

  auto eg_at = [&](int mc) {
    SolverConfig cfg;
    cfg.alpha = 2.0;
    cfg.lambda = 0.1;
    cfg.mc_samples = mc;
    cfg.seed = 21;
    SolveReport rep = solve(model, LossKind::CrossEntropy, PenaltyKind::Ridge, cfg);
    REQUIRE(rep.converged);
    return errors_from_params(rep.params, spec, 200000, 3);
  };
  ErrorTriple small = eg_at(10000);
  ErrorTriple big = eg_at(100000);
  double se = std::max({small.se_g, big.se_g, 1e-3});
  CHECK(std::abs(small.eps_g - big.eps_g) <= 3.0 * se);
}

TEST_CASE("separability scan: transition behaviour and Cover limit") {
  // Delta large: the means carry no signal and the classical alpha* = 2 shows up
  MixtureModel model = binary_isotropic(400.0, 24);
  SolverConfig cfg;
  cfg.lambda = 1e-4;
  cfg.mc_samples = 20000;
  cfg.seed = 2;
  cfg.max_iters = 3000;
  std::vector<double> grid;
  for (double a = 1.5; a <= 2.55; a += 0.1) grid.push_back(a);
  ScanResult scan = separability_scan(model, LossKind::Logistic, cfg, grid);
  REQUIRE(scan.alpha_star.has_value());
  CHECK(std::abs(*scan.alpha_star - 2.0) <= 0.15);

  // eps_t is zero below the detected transition and nondecreasing along the grid
  bool before = true;
  double prev = 0.0;
  for (const auto& pt : scan.points) {
    if (pt.alpha < *scan.alpha_star - 1e-9) {
      CHECK(pt.eps_t <= 1e-4);
    } else {
      before = false;
      CHECK(pt.eps_t >= prev - 2e-3);
    }
    if (!before) prev = pt.eps_t;
  }
}

}  // TEST_SUITE
