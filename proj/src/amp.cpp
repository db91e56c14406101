#include "mixse/amp.hpp"

#include <cmath>
#include <stdexcept>

namespace mixse {

namespace {

double scalar_prox_f(LossKind loss, double y, double omega, double V, double* curvature) {
  // f = (prox_{V l(y,.)}(omega) - omega) / V and the Vhat integrand
  // l''(h) / (1 + V l''(h)) at the proximal point
  if (loss == LossKind::Square) {
    if (curvature) *curvature = 1.0 / (1.0 + V);
    return (y - omega) / (1.0 + V);
  }
  Vec yv(1), ov(1);
  yv(0) = y;
  ov(0) = omega;
  Mat Vm(1, 1);
  Vm(0, 0) = V;
  ProxResult pr = prox_loss(loss, yv, ov, Vm);
  if (curvature) {
    double lpp = loss_hess(loss, yv, pr.h)(0, 0);
    *curvature = lpp / (1.0 + V * lpp);
  }
  return pr.f(0);
}

}  // namespace

AmpResult amp_run(const Dataset& data, const MixtureModel& model, const AmpOptions& opts,
                  std::uint64_t /*seed*/) {
  if (model.K != 2 || model.L != 1)
    throw std::invalid_argument("amp: requires K=2 scalar labels");
  if (opts.loss == LossKind::CrossEntropy)
    throw std::invalid_argument("amp: scalar losses only (square or logistic)");
  if (data.cluster.empty()) throw std::invalid_argument("amp: dataset lacks cluster indices");
  const int d = model.dim();
  const int n = data.n();
  const double sq = std::sqrt(static_cast<double>(d));

  // diagonal covariances
  std::vector<Vec> sigma(2), rsig(2);
  for (int k = 0; k < 2; ++k) {
    const Mat& S = model.covariances[k];
    if ((S - Mat(S.diagonal().asDiagonal())).norm() > 1e-10 * S.norm())
      throw std::invalid_argument("amp: covariances must be diagonal");
    sigma[k] = S.diagonal();
    rsig[k] = sigma[k].cwiseSqrt();
  }

  // standard-normal parts per cluster: z_nu = (x_nu - mu_k) / sqrt(sigma_k)
  std::vector<std::vector<int>> idx(2);
  for (int i = 0; i < n; ++i) idx[data.cluster[i]].push_back(i);
  std::vector<Mat> Z(2);
  std::vector<Vec> ylab(2);
  for (int k = 0; k < 2; ++k) {
    const int nk = static_cast<int>(idx[k].size());
    Z[k].resize(nk, d);
    ylab[k].resize(nk);
    for (int j = 0; j < nk; ++j) {
      int i = idx[k][j];
      Z[k].row(j) =
          ((data.X.row(i).transpose() - model.means[k]).cwiseQuotient(rsig[k])).transpose();
      ylab[k](j) = data.Y(i, 0);
    }
  }

  // state
  std::vector<Vec> u(2, Vec::Zero(d));
  std::vector<Vec> v(2), f(2);
  for (int k = 0; k < 2; ++k) {
    v[k] = Vec::Zero(static_cast<int>(idx[k].size()));
    f[k] = Vec::Zero(static_cast<int>(idx[k].size()));
  }
  Vec vhat = Vec::Constant(2, 1.0);
  Vec mhat = Vec::Zero(2);
  const double gamma = opts.damping;

  AmpResult out;
  Vec w = Vec::Zero(d);

  for (int t = 0; t < opts.max_t; ++t) {
    // input denoiser: w = argmin r + 1/2 A w^2 - c w, coordinatewise
    Vec A = sigma[0] * vhat(0) + sigma[1] * vhat(1);
    Vec c = rsig[0].cwiseProduct(u[0]) + rsig[1].cwiseProduct(u[1]) +
            mhat(0) * model.means[0] + mhat(1) * model.means[1];
    Vec wp(d);
    if (opts.penalty == PenaltyKind::Ridge) {
      w = c.array() / (A.array() + opts.lambda);
      wp = (A.array() + opts.lambda).inverse();
    } else {
      for (int i = 0; i < d; ++i) {
        w(i) = soft_threshold(c(i), opts.lambda) / A(i);
        wp(i) = std::abs(c(i)) > opts.lambda ? 1.0 / A(i) : 0.0;
      }
    }

    Vec Vk(2), mk(2);
    for (int k = 0; k < 2; ++k) {
      Vk(k) = sigma[k].dot(wp) / d;
      mk(k) = model.means[k].dot(w) / sq;
    }

    AmpOverlap ov;
    ov.q1 = w.cwiseProduct(sigma[0].cwiseProduct(w)).sum() / d;
    ov.q2 = w.cwiseProduct(sigma[1].cwiseProduct(w)).sum() / d;
    ov.m1 = mk(0);
    ov.m2 = mk(1);
    out.trajectory.push_back(ov);

    // output side
    Vec vhat_new = Vec::Zero(2), mhat_new = Vec::Zero(2);
    for (int k = 0; k < 2; ++k) {
      Vec e = rsig[k].cwiseProduct(w);
      Vec v_new = Z[k] * e / sq;
      if (opts.onsager) v_new -= Vk(k) * f[k];
      v[k] = gamma * v_new + (1.0 - gamma) * v[k];

      for (int j = 0; j < v[k].size(); ++j) {
        double curve = 0.0;
        f[k](j) = scalar_prox_f(opts.loss, ylab[k](j), mk(k) + v[k](j), Vk(k), &curve);
        vhat_new(k) += curve;
        mhat_new(k) += f[k](j);
      }
      vhat_new(k) /= d;
      mhat_new(k) /= sq;
    }
    vhat = vhat_new;
    mhat = mhat_new;

    double shift = 0.0;
    for (int k = 0; k < 2; ++k) {
      Vec u_new = Z[k].transpose() * f[k] / sq;
      if (opts.onsager) u_new += vhat(k) * rsig[k].cwiseProduct(w);
      Vec u_next = gamma * u_new + (1.0 - gamma) * u[k];
      shift = std::max(shift, (u_next - u[k]).norm() / sq);
      u[k] = u_next;
      if (!u[k].allFinite() || u[k].norm() > 1e8)
        throw std::runtime_error("AMP diverged (damping too low)");
    }

    out.iterations = t + 1;
    if (t > 0 && shift <= opts.tol) {
      out.converged = true;
      break;
    }
  }

  // final penalty resolvent
  Vec A = sigma[0] * vhat(0) + sigma[1] * vhat(1);
  Vec c = rsig[0].cwiseProduct(u[0]) + rsig[1].cwiseProduct(u[1]) + mhat(0) * model.means[0] +
          mhat(1) * model.means[1];
  if (opts.penalty == PenaltyKind::Ridge) {
    out.W = c.array() / (A.array() + opts.lambda);
  } else {
    out.W.resize(d);
    for (int i = 0; i < d; ++i) out.W(i) = soft_threshold(c(i), opts.lambda) / A(i);
  }
  return out;
}

}  // namespace mixse
