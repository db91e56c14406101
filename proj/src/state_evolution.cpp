#include "mixse/state_evolution.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mixse/observables.hpp"
#include "mixse/random.hpp"

namespace mixse {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double erfc_scaled_arg(double t) { return 0.5 * std::erfc(t / std::sqrt(2.0)); }
double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * kPi); }

Mat psd_sqrt(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// clip negative eigenvalues to zero; reports whether a material clip happened
bool psd_project(Mat* A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(*A);
  double lo = es.eigenvalues().minCoeff();
  double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (lo >= 0.0) return false;
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  *A = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return lo < -1e-12 * scale;
}

Mat sym(const Mat& A) { return 0.5 * (A + A.transpose()); }

double frob_diff(const Mat& A, const Mat& B) { return (A - B).norm(); }

}  // namespace

OrderParams OrderParams::identity_init(int K, int L) {
  OrderParams p;
  p.Q.assign(K, Mat::Identity(L, L));
  p.V.assign(K, Mat::Identity(L, L));
  p.Qhat.assign(K, Mat::Zero(L, L));
  p.Vhat.assign(K, Mat::Zero(L, L));
  p.m.assign(K, Vec::Zero(L));
  p.mhat.assign(K, Vec::Zero(L));
  p.b = Vec::Zero(L);
  return p;
}

const char* to_string(PriorPathKind kind) {
  switch (kind) {
    case PriorPathKind::CorollaryRidge: return "corollary_ridge";
    case PriorPathKind::UniformCov: return "uniform_cov";
    case PriorPathKind::BinaryDiagonal: return "binary_diagonal";
    case PriorPathKind::BinaryGeneric: return "binary_generic";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// path selection

namespace {

bool is_uniform_isotropic(const MixtureModel& model, double* delta_out) {
  const int d = model.dim();
  double delta = model.covariances[0](0, 0);
  for (const Mat& S : model.covariances) {
    if ((S - delta * Mat::Identity(d, d)).norm() > 1e-12 * std::max(1.0, S.norm())) return false;
  }
  *delta_out = delta;
  return true;
}

bool covariances_commute(const MixtureModel& model) {
  for (int a = 0; a < model.K; ++a)
    for (int b = 0; b < a; ++b) {
      const Mat &A = model.covariances[a], &B = model.covariances[b];
      if ((A * B - B * A).norm() > 1e-8 * A.norm() * B.norm()) return false;
    }
  return true;
}

}  // namespace

PriorPath PriorPath::select(const MixtureModel& model, LossKind loss, PenaltyKind penalty,
                            const SolverConfig& cfg) {
  const int L = model.L;
  const int K = model.K;
  // logistic needs scalar +-1 labels; cross-entropy needs one-hot codes;
  // the square loss accepts either encoding
  if (loss == LossKind::Logistic && L != 1)
    throw std::invalid_argument("solve: logistic loss requires scalar labels");
  if (loss == LossKind::CrossEntropy && (L != K || K < 2))
    throw std::invalid_argument("solve: cross-entropy requires one-hot labels, K >= 2");
  if (loss == LossKind::Square && L != 1 && L != K)
    throw std::invalid_argument("solve: loss/label dimension mismatch");

  PriorPath path;
  path.penalty = penalty;

  auto want = cfg.path_override;
  double delta = 0.0;

  if (penalty == PenaltyKind::L1) {
    if (L != 1 || K != 2)
      throw std::invalid_argument("solve: l1 penalty supported for K=2 scalar labels only");
    if (!covariances_commute(model))
      throw std::invalid_argument("solve: l1 penalty requires commuting covariances");
    if (want && *want != PriorPathKind::BinaryDiagonal)
      throw std::invalid_argument("solve: l1 penalty admits the binary_diagonal path only");
    path.kind = PriorPathKind::BinaryDiagonal;
    path.spectral = SpectralMixture::from_model(model);
    return path;
  }

  PriorPathKind kind;
  if (want) {
    kind = *want;
  } else if (L == K && is_uniform_isotropic(model, &delta)) {
    kind = PriorPathKind::UniformCov;
  } else if (covariances_commute(model)) {
    kind = K == 2 && L == 1 ? PriorPathKind::BinaryDiagonal : PriorPathKind::CorollaryRidge;
  } else if (K == 2 && L == 1) {
    kind = PriorPathKind::BinaryGeneric;
  } else {
    throw std::invalid_argument(
        "solve: non-commuting covariances with K>2 or one-hot labels are unsupported");
  }

  path.kind = kind;
  switch (kind) {
    case PriorPathKind::UniformCov:
      if (!is_uniform_isotropic(model, &delta))
        throw std::invalid_argument("uniform_cov path requires Sigma_k = Delta I");
      path.delta = delta;
      path.theta = model.mean_gram();
      path.rescaled = true;
      break;
    case PriorPathKind::CorollaryRidge:
      path.spectral = SpectralMixture::from_model(model);
      path.rescaled = true;
      break;
    case PriorPathKind::BinaryDiagonal:
      if (K != 2 || L != 1)
        throw std::invalid_argument("binary_diagonal path requires K=2 scalar labels");
      path.spectral = SpectralMixture::from_model(model);
      break;
    case PriorPathKind::BinaryGeneric:
      if (K != 2 || L != 1)
        throw std::invalid_argument("binary_generic path requires K=2 scalar labels");
      path.sigma = model.covariances;
      path.mu = model.means;
      break;
  }
  return path;
}

PriorPath PriorPath::from_spectral(const SpectralMixture& sm, int L, PenaltyKind penalty,
                                   const SolverConfig& cfg) {
  PriorPath path;
  path.penalty = penalty;
  path.spectral = sm;
  if (penalty == PenaltyKind::L1) {
    path.kind = PriorPathKind::BinaryDiagonal;
  } else {
    path.kind = cfg.path_override.value_or(L == 1 ? PriorPathKind::BinaryDiagonal
                                                  : PriorPathKind::CorollaryRidge);
    if (path.kind == PriorPathKind::CorollaryRidge) path.rescaled = true;
  }
  return path;
}

// ---------------------------------------------------------------------------
// channel side

ChannelPool::ChannelPool(int K, int L, int mc_samples, std::uint64_t seed)
    : mc_(mc_samples), seed_(seed) {
  xi_.assign(K, Mat(L, mc_samples));
  warm_.assign(K, Mat::Zero(L, mc_samples));
  resample();
}

void ChannelPool::resample() {
  Rng rng(seed_ + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(draws_++));
  for (auto& m : xi_) {
    for (int j = 0; j < m.cols(); ++j)
      for (int i = 0; i < m.rows(); ++i) m(i, j) = rng.gaussian();
    // moment-match the pool to zero mean and identity covariance: the finite
    // pool otherwise injects a fixed Q^{1/2} xi-bar offset into the bias
    // equation, which the channel cannot compensate at large lambda
    const int L = static_cast<int>(m.rows());
    if (m.cols() >= 8 * L) {
      Vec mean = m.rowwise().mean();
      m.colwise() -= mean;
      Mat cov = m * m.transpose() / static_cast<double>(m.cols());
      Eigen::LLT<Mat> llt(cov);
      if (llt.info() == Eigen::Success)
        m = llt.matrixL().solve(m);
    }
  }
}

ChannelUpdate channel_update(const OrderParams& p, const ChannelSpec& spec,
                             const SolverConfig& cfg, double lam_prox, ChannelPool& pool) {
  const int K = spec.clusters();
  const int L = spec.label_dim();
  const double alpha = cfg.alpha;

  ChannelUpdate out;
  out.Qhat.assign(K, Mat::Zero(L, L));
  out.Vhat.assign(K, Mat::Zero(L, L));
  out.mhat.assign(K, Vec::Zero(L));
  out.b_new = Vec::Zero(L);
  out.bias_residual = Vec::Zero(L);

  const bool square_closed = spec.loss == LossKind::Square && !cfg.resample && lam_prox > 0.0;

  for (int k = 0; k < K; ++k) {
    const double rho = spec.priors(k);
    const Vec& y = spec.label_codes[k];
    const Mat& V = p.V[k];
    const Vec mb = p.m[k] + p.b;

    if (square_closed) {
      // E over xi in closed form: f = (lam I + V)^{-1} (lam y - omega)
      Mat A = (lam_prox * Mat::Identity(L, L) + V).ldlt().solve(Mat::Identity(L, L));
      Vec r = lam_prox * y - mb;
      Vec Ef = A * r;
      Mat Eff = A * (r * r.transpose() + p.Q[k]) * A.transpose();
      out.mhat[k] = alpha * rho * Ef;
      out.Qhat[k] = sym(alpha * rho * Eff);
      out.Vhat[k] = sym(alpha * rho * A);
      out.b_new += rho * (V * Ef + p.b);
      out.bias_residual += rho * (V * Ef);
      continue;
    }

    Mat sqQ = psd_sqrt(p.Q[k]);
    const Mat& xi = pool.xi(k);
    Mat& warm = pool.warm(k);
    const int mc = pool.samples();

    Vec sf = Vec::Zero(L), sh = Vec::Zero(L);
    Mat sff = Mat::Zero(L, L), shess = Mat::Zero(L, L), sfxi = Mat::Zero(L, L);
    const bool stein = cfg.stein_vhat || lam_prox == 0.0;

    for (int j = 0; j < mc; ++j) {
      Vec omega = mb + sqQ * xi.col(j);
      Vec f, h_state;
      if (lam_prox == 0.0) {
        if (spec.loss != LossKind::CrossEntropy)
          throw std::invalid_argument("lambda = 0 channel supported for cross-entropy only");
        f = prox_loss_limit_maxmargin(y, omega, V);
        h_state = V * f + omega;
      } else {
        Vec w = warm.col(j);
        ProxResult pr = prox_loss_scaled(spec.loss, y, omega, V, lam_prox, &w, cfg.prox);
        f = pr.f;
        h_state = pr.h;
        warm.col(j) = f;
      }
      sf += f;
      sff += f * f.transpose();
      sh += h_state;
      if (stein) {
        sfxi += f * xi.col(j).transpose();
      } else {
        Mat S = loss_hess(spec.loss, y, h_state / lam_prox);
        shess += (lam_prox * Mat::Identity(L, L) + S * V).partialPivLu().solve(S);
      }
    }

    Vec Ef = sf / mc;
    out.mhat[k] = alpha * rho * Ef;
    out.Qhat[k] = sym(alpha * rho * sff / mc);
    if (stein) {
      // -alpha rho Q^{-1/2} E[f xi'], symmetrised; pseudo-inverse of sqrt(Q)
      Eigen::SelfAdjointEigenSolver<Mat> es(p.Q[k]);
      Vec ev = es.eigenvalues();
      Vec inv = ev.unaryExpr([&](double e) {
        return e > 1e-12 * std::max(1.0, ev.maxCoeff()) ? 1.0 / std::sqrt(e) : 0.0;
      });
      Mat isq = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
      out.Vhat[k] = sym(-alpha * rho * isq * (sfxi / mc));
    } else {
      out.Vhat[k] = sym(alpha * rho * shess / mc);
    }
    out.b_new += rho * (sh / mc - p.m[k]);
    out.bias_residual += rho * (V * Ef);

    Eigen::SelfAdjointEigenSolver<Mat> check(out.Qhat[k], Eigen::EigenvaluesOnly);
    if (check.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, out.Qhat[k].norm()))
      throw std::runtime_error("channel degenerate");
  }
  return out;
}

// ---------------------------------------------------------------------------
// soft-threshold Gaussian moments (exact xi-integrals of the l1 prior)

SoftThresholdMoments soft_threshold_moments(double v, double u, double lam) {
  SoftThresholdMoments mom;
  if (u <= 1e-300) {
    double s = soft_threshold(v, lam);
    mom.p = std::abs(v) > lam ? 1.0 : 0.0;
    mom.m1 = s;
    mom.m2 = s * s;
    return mom;
  }
  const double su = std::sqrt(u);
  const double tu = (lam - v) / su;  // upper tail y > lam
  const double td = (lam + v) / su;  // lower tail y < -lam
  const double Qu = erfc_scaled_arg(tu), Qd = erfc_scaled_arg(td);
  const double pu = normal_pdf(tu), pd = normal_pdf(td);
  mom.p = Qu + Qd;
  mom.m1 = (v - lam) * Qu + su * pu + (v + lam) * Qd - su * pd;
  mom.m2 = ((v - lam) * (v - lam) + u) * Qu + su * (v - lam) * pu +
           ((v + lam) * (v + lam) + u) * Qd - su * (v + lam) * pd;
  return mom;
}

// ---------------------------------------------------------------------------
// prior side

namespace {

void prior_spectral_ridge(const SpectralMixture& sm, double lam_eff, const OrderParams& hats,
                          std::vector<Mat>* Q, std::vector<Vec>* m, std::vector<Mat>* V) {
  const int K = static_cast<int>(hats.Qhat.size());
  const int L = static_cast<int>(hats.mhat[0].size());
  for (int k = 0; k < K; ++k) {
    (*Q)[k].setZero(L, L);
    (*m)[k].setZero(L);
    (*V)[k].setZero(L, L);
  }
  Mat D(L, L), mid(L, L);
  Vec vmean(L);
  for (const auto& atom : sm.atoms) {
    Mat res = lam_eff * Mat::Identity(L, L);
    for (int kk = 0; kk < K; ++kk) res += atom.sigma(kk) * hats.Vhat[kk];
    Eigen::LDLT<Mat> ldlt(res);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw std::runtime_error("resolvent singular (lambda too small for conditioning)");
    D = ldlt.solve(Mat::Identity(L, L));
    vmean.setZero();
    for (int kk = 0; kk < K; ++kk) vmean += atom.mu(kk) * hats.mhat[kk];
    mid = vmean * vmean.transpose();
    for (int kk = 0; kk < K; ++kk) mid += atom.sigma(kk) * hats.Qhat[kk];
    Vec Dv = D * vmean;
    Mat DmD = D * mid * D;
    for (int k = 0; k < K; ++k) {
      (*Q)[k] += atom.weight * atom.sigma(k) * DmD;
      (*m)[k] += atom.weight * atom.mu(k) * Dv;
      (*V)[k] += atom.weight * atom.sigma(k) * D;
    }
  }
  for (int k = 0; k < K; ++k) (*Q)[k] = sym((*Q)[k]);
}

void prior_uniform(const PriorPath& path, double lam_eff, const OrderParams& hats,
                   std::vector<Mat>* Q, std::vector<Vec>* m, std::vector<Mat>* V) {
  const int K = static_cast<int>(hats.Qhat.size());
  const int L = static_cast<int>(hats.mhat[0].size());
  Mat Vhc = Mat::Zero(L, L), Qhc = Mat::Zero(L, L), Mh(L, K);
  for (int k = 0; k < K; ++k) {
    Vhc += path.delta * hats.Vhat[k];
    Qhc += path.delta * hats.Qhat[k];
    Mh.col(k) = hats.mhat[k];
  }
  Eigen::LDLT<Mat> ldlt(lam_eff * Mat::Identity(L, L) + Vhc);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error("resolvent singular (lambda too small for conditioning)");
  Mat D = ldlt.solve(Mat::Identity(L, L));
  Mat Qc = sym(path.delta * D * (Qhc + Mh * path.theta * Mh.transpose()) * D);
  Mat Mc = D * Mh * path.theta;
  Mat Vc = path.delta * D;
  for (int k = 0; k < K; ++k) {
    (*Q)[k] = Qc;
    (*m)[k] = Mc.col(k);
    (*V)[k] = Vc;
  }
}

void prior_binary_diagonal_l1(const SpectralMixture& sm, double lambda, const OrderParams& hats,
                              std::vector<Mat>* Q, std::vector<Vec>* m, std::vector<Mat>* V) {
  double vh1 = hats.Vhat[0](0, 0), vh2 = hats.Vhat[1](0, 0);
  double qh1 = hats.Qhat[0](0, 0), qh2 = hats.Qhat[1](0, 0);
  double mh1 = hats.mhat[0](0), mh2 = hats.mhat[1](0);
  double q1 = 0, q2 = 0, mm1 = 0, mm2 = 0, v1 = 0, v2 = 0;
  for (const auto& atom : sm.atoms) {
    double A = atom.sigma(0) * vh1 + atom.sigma(1) * vh2;
    if (A <= 0.0)
      throw std::runtime_error("resolvent singular (lambda too small for conditioning)");
    double a = atom.mu(0) * mh1 + atom.mu(1) * mh2;
    double u = atom.sigma(0) * qh1 + atom.sigma(1) * qh2;
    SoftThresholdMoments mom = soft_threshold_moments(a, u, lambda);
    double w = atom.weight;
    q1 += w * atom.sigma(0) * mom.m2 / (A * A);
    q2 += w * atom.sigma(1) * mom.m2 / (A * A);
    mm1 += w * atom.mu(0) * mom.m1 / A;
    mm2 += w * atom.mu(1) * mom.m1 / A;
    v1 += w * atom.sigma(0) * mom.p / A;
    v2 += w * atom.sigma(1) * mom.p / A;
  }
  (*Q)[0](0, 0) = q1;
  (*Q)[1](0, 0) = q2;
  (*m)[0](0) = mm1;
  (*m)[1](0) = mm2;
  (*V)[0](0, 0) = v1;
  (*V)[1](0, 0) = v2;
}

void prior_binary_generic(const PriorPath& path, double lambda, const OrderParams& hats,
                          std::vector<Mat>* Q, std::vector<Vec>* m, std::vector<Mat>* V) {
  const int d = static_cast<int>(path.mu[0].size());
  double vh1 = hats.Vhat[0](0, 0), vh2 = hats.Vhat[1](0, 0);
  double qh1 = hats.Qhat[0](0, 0), qh2 = hats.Qhat[1](0, 0);
  Mat res = lambda * Mat::Identity(d, d) + vh1 * path.sigma[0] + vh2 * path.sigma[1];
  Eigen::LLT<Mat> llt(res);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("resolvent singular (lambda too small for conditioning)");
  Mat S = llt.solve(Mat::Identity(d, d));
  Vec mbar = hats.mhat[0](0) * path.mu[0] + hats.mhat[1](0) * path.mu[1];
  Vec Sm = S * mbar;
  Mat noise = qh1 * path.sigma[0] + qh2 * path.sigma[1];
  Mat T = S * noise * S;
  for (int k = 0; k < 2; ++k) {
    (*Q)[k](0, 0) = Sm.dot(path.sigma[k] * Sm) + (path.sigma[k].cwiseProduct(T)).sum() / d;
    (*m)[k](0) = path.mu[k].dot(Sm);
    (*V)[k](0, 0) = (path.sigma[k].cwiseProduct(S)).sum() / d;
  }
}

}  // namespace

void prior_update(const PriorPath& path, double lambda, const OrderParams& hats,
                  std::vector<Mat>* Q, std::vector<Vec>* m, std::vector<Mat>* V) {
  const double lam_eff = path.rescaled ? 1.0 : lambda;
  switch (path.kind) {
    case PriorPathKind::CorollaryRidge:
      prior_spectral_ridge(path.spectral, lam_eff, hats, Q, m, V);
      break;
    case PriorPathKind::UniformCov:
      prior_uniform(path, lam_eff, hats, Q, m, V);
      break;
    case PriorPathKind::BinaryDiagonal:
      if (path.penalty == PenaltyKind::L1)
        prior_binary_diagonal_l1(path.spectral, lambda, hats, Q, m, V);
      else
        prior_spectral_ridge(path.spectral, lam_eff, hats, Q, m, V);
      break;
    case PriorPathKind::BinaryGeneric:
      prior_binary_generic(path, lambda, hats, Q, m, V);
      break;
  }
}

// ---------------------------------------------------------------------------
// fixed-point loop

namespace {

struct InnerResult {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool hit_spurious = false;
};

InnerResult solve_inner(const PriorPath& path, const ChannelSpec& spec, const SolverConfig& cfg,
                        double lambda, OrderParams* state, ChannelPool* pool) {
  const int K = spec.clusters();
  const double lam_prox = path.rescaled ? lambda : 1.0;
  InnerResult res;
  double gamma = cfg.damping;
  double prev_residual = std::numeric_limits<double>::infinity();

  std::vector<Mat> Qn(K), Vn(K);
  std::vector<Vec> mn(K);
  for (int k = 0; k < K; ++k) {
    Qn[k] = state->Q[k];
    Vn[k] = state->V[k];
    mn[k] = state->m[k];
  }

  for (int t = 0; t < cfg.max_iters; ++t) {
    if (cfg.resample) pool->resample();
    ChannelUpdate ch = channel_update(*state, spec, cfg, lam_prox, *pool);

    OrderParams fresh = *state;
    fresh.Qhat = ch.Qhat;
    fresh.Vhat = ch.Vhat;
    fresh.mhat = ch.mhat;
    prior_update(path, lambda, fresh, &Qn, &mn, &Vn);

    double r = (ch.b_new - state->b).norm();
    for (int k = 0; k < K; ++k) {
      r = std::max(r, frob_diff(Qn[k], state->Q[k]));
      r = std::max(r, frob_diff(Vn[k], state->V[k]));
      r = std::max(r, (mn[k] - state->m[k]).norm());
      r = std::max(r, frob_diff(ch.Qhat[k], state->Qhat[k]));
      r = std::max(r, frob_diff(ch.Vhat[k], state->Vhat[k]));
      r = std::max(r, (ch.mhat[k] - state->mhat[k]).norm());
    }
    res.iterations = t + 1;
    res.residual = r;

    for (int k = 0; k < K; ++k) res.hit_spurious |= psd_project(&Qn[k]);

    if (r <= cfg.conv_tol) {
      for (int k = 0; k < K; ++k) {
        state->Q[k] = Qn[k];
        state->V[k] = Vn[k];
        state->m[k] = mn[k];
        state->Qhat[k] = ch.Qhat[k];
        state->Vhat[k] = ch.Vhat[k];
        state->mhat[k] = ch.mhat[k];
      }
      state->b = ch.b_new;
      res.converged = true;
      return res;
    }

    if (r > prev_residual) gamma = std::max(gamma, 0.8);
    prev_residual = r;

    const double w = 1.0 - gamma;
    for (int k = 0; k < K; ++k) {
      state->Q[k] = w * Qn[k] + gamma * state->Q[k];
      state->V[k] = w * Vn[k] + gamma * state->V[k];
      state->m[k] = w * mn[k] + gamma * state->m[k];
      state->Qhat[k] = w * ch.Qhat[k] + gamma * state->Qhat[k];
      state->Vhat[k] = w * ch.Vhat[k] + gamma * state->Vhat[k];
      state->mhat[k] = w * ch.mhat[k] + gamma * state->mhat[k];
      res.hit_spurious |= psd_project(&state->Q[k]);
    }
    state->b = w * ch.b_new + gamma * state->b;
  }
  return res;
}

OrderParams to_plain(const OrderParams& s, bool rescaled, double lambda) {
  if (!rescaled || lambda == 0.0) return s;
  OrderParams p = s;
  const int K = s.clusters();
  for (int k = 0; k < K; ++k) {
    p.Q[k] = s.Q[k] / (lambda * lambda);
    p.m[k] = s.m[k] / lambda;
    p.V[k] = s.V[k] / lambda;
    p.Vhat[k] = lambda * s.Vhat[k];
  }
  p.b = s.b / lambda;
  return p;
}

std::vector<double> anneal_ladder(double lambda_target) {
  std::vector<double> ladder;
  double lam = std::max(0.5, 4.0 * lambda_target);
  while (lam > lambda_target * 1.5 && lam > 1e-12) {
    ladder.push_back(lam);
    lam *= 0.5;
  }
  ladder.push_back(lambda_target);
  return ladder;
}

void validate_config(const SolverConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("solver: alpha must be positive");
  if (cfg.lambda < 0.0) throw std::invalid_argument("solver: lambda must be nonnegative");
  if (cfg.lambda == 0.0 && !cfg.anneal)
    throw std::invalid_argument("solver: lambda = 0 requires anneal");
  if (!(cfg.damping >= 0.0 && cfg.damping < 1.0))
    throw std::invalid_argument("solver: damping must be in [0,1)");
  if (cfg.mc_samples < 1) throw std::invalid_argument("solver: mc_samples must be >= 1");
}

}  // namespace

SolveReport solve_with_path(const PriorPath& path, const ChannelSpec& spec,
                            const SolverConfig& cfg) {
  validate_config(cfg);
  const int K = spec.clusters();
  const int L = spec.label_dim();
  auto t0 = std::chrono::steady_clock::now();

  OrderParams state = cfg.init.value_or(OrderParams::identity_init(K, L));
  ChannelPool pool(K, L, cfg.mc_samples, cfg.seed);
  if (!cfg.init) {
    double lam0 = cfg.anneal ? anneal_ladder(cfg.lambda).front() : cfg.lambda;
    ChannelUpdate ch = channel_update(state, spec, cfg, path.rescaled ? lam0 : 1.0, pool);
    state.Qhat = ch.Qhat;
    state.Vhat = ch.Vhat;
    state.mhat = ch.mhat;
  }

  InnerResult inner;
  if (cfg.anneal) {
    for (double lam : anneal_ladder(cfg.lambda)) {
      inner = solve_inner(path, spec, cfg, lam, &state, &pool);
      if (!inner.converged) break;
    }
  } else {
    inner = solve_inner(path, spec, cfg, cfg.lambda, &state, &pool);
  }

  SolveReport report;
  report.params = to_plain(state, path.rescaled, cfg.lambda);
  report.iterations = inner.iterations;
  report.residual = inner.residual;
  report.converged = inner.converged;
  report.hit_spurious = inner.hit_spurious;
  report.path = path.kind;
  report.alpha = cfg.alpha;
  report.lambda = cfg.lambda;
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

SolveReport solve(const MixtureModel& model, LossKind loss, PenaltyKind penalty,
                  const SolverConfig& cfg) {
  PriorPath path = PriorPath::select(model, loss, penalty, cfg);
  ChannelSpec spec{loss, model.label_codes, model.priors};
  return solve_with_path(path, spec, cfg);
}

SolveReport solve(const SpectralMixture& sm, const ChannelSpec& spec, PenaltyKind penalty,
                  const SolverConfig& cfg) {
  PriorPath path = PriorPath::from_spectral(sm, spec.label_dim(), penalty, cfg);
  return solve_with_path(path, spec, cfg);
}

ScanResult separability_scan(const MixtureModel& model, LossKind loss, SolverConfig cfg,
                             const std::vector<double>& alpha_grid, double eps_t_threshold) {
  PriorPath path = PriorPath::select(model, loss, PenaltyKind::Ridge, cfg);
  ChannelSpec spec{loss, model.label_codes, model.priors};
  const int K = spec.clusters();
  const int L = spec.label_dim();

  OrderParams state = OrderParams::identity_init(K, L);
  ChannelPool pool(K, L, cfg.mc_samples, cfg.seed);
  bool first = true;

  ScanResult out;
  for (double alpha : alpha_grid) {
    cfg.alpha = alpha;
    if (first) {
      ChannelUpdate ch = channel_update(state, spec, cfg, path.rescaled ? cfg.lambda : 1.0, pool);
      state.Qhat = ch.Qhat;
      state.Vhat = ch.Vhat;
      state.mhat = ch.mhat;
      first = false;
    }
    InnerResult inner = solve_inner(path, spec, cfg, cfg.lambda, &state, &pool);

    OrderParams plain = to_plain(state, path.rescaled, cfg.lambda);
    ErrorTriple err = errors_from_params(plain, spec, 4 * cfg.mc_samples, cfg.seed + 1, cfg.prox);
    ScanPoint pt{alpha, err.eps_t, err.eps_g, inner.converged};
    out.points.push_back(pt);
    if (!out.alpha_star && inner.converged && err.eps_t > eps_t_threshold)
      out.alpha_star = alpha;
  }
  return out;
}

}  // namespace mixse
