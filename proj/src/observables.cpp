#include "mixse/observables.hpp"

#include <cmath>
#include <stdexcept>

#include "mixse/random.hpp"

namespace mixse {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
double normal_tail(double t) { return 0.5 * std::erfc(t / std::sqrt(2.0)); }

Mat psd_sqrt(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// argmax with ties broken toward the smallest index
int argmax_index(const Vec& x) {
  int best = 0;
  for (int i = 1; i < x.size(); ++i)
    if (x(i) > x(best)) best = i;
  return best;
}

bool classified_correctly(const Vec& x, const Vec& label) {
  if (label.size() == 1) {
    double s = x(0) >= 0.0 ? 1.0 : -1.0;  // sign(0) resolves to the first class
    return s * label(0) > 0.0;
  }
  return argmax_index(x) == argmax_index(label);
}

}  // namespace

ErrorTriple errors_from_params(const OrderParams& params, const ChannelSpec& spec,
                               int mc_samples, std::uint64_t seed, const ProxOptions& prox) {
  const int K = spec.clusters();
  const int L = spec.label_dim();
  ErrorTriple out;

  // conditioning scale for the channel prox: f is invariant under
  // (omega, V, lam) -> (c omega, c V, c lam)
  double vmax = 1.0;
  for (int k = 0; k < K; ++k) vmax = std::max(vmax, params.V[k].norm());
  const double c = 1.0 / vmax;

  Rng rng(seed);
  double var_g = 0.0, var_t = 0.0, var_l = 0.0;
  bool exact_g = (L == 1);

  for (int k = 0; k < K; ++k) {
    const double rho = spec.priors(k);
    const Vec& y = spec.label_codes[k];
    const Vec mb = params.m[k] + params.b;

    if (exact_g) {
      double q = params.Q[k](0, 0);
      double s = y(0) > 0 ? 1.0 : -1.0;
      double err;
      if (q > 0.0)
        err = normal_tail(s * mb(0) / std::sqrt(q));
      else
        err = s * mb(0) >= 0.0 ? 0.0 : 1.0;
      out.eps_g += rho * err;
    }

    Mat sqQ = psd_sqrt(params.Q[k]);
    Mat Vc = c * params.V[k];
    double sum_g = 0.0, sum_t = 0.0, sum_l = 0.0, sum_l2 = 0.0;
    Vec fwarm = Vec::Zero(L);
    for (int j = 0; j < mc_samples; ++j) {
      Vec omega = mb + sqQ * rng.gaussian_vector(L);
      if (!exact_g && !classified_correctly(omega, y)) sum_g += 1.0;
      ProxResult pr = prox_loss_scaled(spec.loss, y, c * omega, Vc, c, &fwarm, prox);
      fwarm = pr.f;
      Vec h = pr.h / c;
      if (!classified_correctly(h, y)) sum_t += 1.0;
      double lv = loss_value(spec.loss, y, h);
      sum_l += lv;
      sum_l2 += lv * lv;
    }
    const double n = static_cast<double>(mc_samples);
    double pt = sum_t / n, pl = sum_l / n;
    out.eps_t += rho * pt;
    out.eps_l += rho * pl;
    var_t += rho * rho * pt * (1.0 - pt) / n;
    var_l += rho * rho * std::max(0.0, sum_l2 / n - pl * pl) / n;
    if (!exact_g) {
      double pg = sum_g / n;
      out.eps_g += rho * pg;
      var_g += rho * rho * pg * (1.0 - pg) / n;
    }
  }
  out.se_g = std::sqrt(var_g);
  out.se_t = std::sqrt(var_t);
  out.se_l = std::sqrt(var_l);
  return out;
}

Vec BayesSpec::eta() const {
  Vec e(K);
  for (int k = 0; k < K; ++k)
    e(k) = std::sqrt(delta * (1.0 + delta / (alpha * priors(k))));
  return e;
}

double bayes_error_binary_balanced(const BayesSpec& spec) {
  double eta = spec.eta()(0);
  return 0.5 * std::erfc(1.0 / (2.0 * eta));
}

namespace {

bool balanced_identity(const BayesSpec& spec) {
  if ((spec.theta - Mat::Identity(spec.K, spec.K)).norm() > 1e-12) return false;
  return (spec.priors.array() - 1.0 / spec.K).abs().maxCoeff() < 1e-12;
}

// P[1/eta < max_{kappa in [K-1]} Z_kappa + Z] by 1d quadrature:
// E_Z[1 - Phi(1/eta - Z)^{K-1}] with composite Simpson on [-10, 10].
double bayes_reduced(double eta, int K) {
  const int n = 4000;  // even
  const double a = -10.0, b = 10.0, h = (b - a) / n;
  auto f = [&](double z) {
    double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
    return phi * (1.0 - std::pow(normal_cdf(1.0 / eta - z), K - 1));
  };
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

BayesEstimate bayes_error(const BayesSpec& spec, int mc_samples, std::uint64_t seed) {
  if (spec.K < 2) throw std::invalid_argument("bayes: K must be >= 2");
  BayesEstimate out;
  if (balanced_identity(spec)) {
    out.value = bayes_reduced(spec.eta()(0), spec.K);
    out.stderr_mc = 0.0;
    return out;
  }

  const int K = spec.K;
  Mat S = (spec.delta * spec.theta.inverse() + spec.alpha * Mat(spec.priors.asDiagonal()))
              .inverse();
  Vec eta = spec.eta();
  Rng rng(seed);
  double value = 0.0, var = 0.0;
  for (int k = 0; k < K; ++k) {
    int errors = 0;
    for (int t = 0; t < mc_samples; ++t) {
      Vec z = rng.gaussian_vector(K);
      Vec a(K);
      for (int kk = 0; kk < K; ++kk)
        a(kk) = spec.alpha * spec.priors(kk) * (spec.theta(k, kk) + eta(kk) * z(kk)) / spec.delta;
      Vec score(K);
      for (int kk = 0; kk < K; ++kk)
        score(kk) = std::log(spec.priors(kk)) + a.dot(S.col(kk)) + 0.5 * S(kk, kk);
      if (argmax_index(score) != k) ++errors;
    }
    double p = static_cast<double>(errors) / mc_samples;
    value += spec.priors(k) * p;
    var += spec.priors(k) * spec.priors(k) * p * (1.0 - p) / mc_samples;
  }
  out.value = value;
  out.stderr_mc = std::sqrt(var);
  return out;
}

double bayes_gap(const SolveReport& report, const ChannelSpec& spec, const BayesSpec& bayes,
                 int mc_samples, std::uint64_t seed) {
  ErrorTriple err = errors_from_params(report.params, spec, mc_samples, seed);
  return err.eps_g - bayes_error(bayes, mc_samples, seed).value;
}

}  // namespace mixse
