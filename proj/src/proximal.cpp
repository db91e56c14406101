#include "mixse/proximal.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mixse {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Square: return "square";
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::Logistic: return "logistic";
  }
  return "?";
}

const char* to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::Ridge: return "ridge";
    case PenaltyKind::L1: return "l1";
  }
  return "?";
}

int loss_label_dim(LossKind kind, int K) {
  return kind == LossKind::Logistic ? 1 : K;
}

Vec softmax(const Vec& x) {
  Vec s = (x.array() - x.maxCoeff()).exp();
  return s / s.sum();
}

double loss_value(LossKind kind, const Vec& y, const Vec& x) {
  switch (kind) {
    case LossKind::Square:
      return 0.5 * (y - x).squaredNorm();
    case LossKind::CrossEntropy: {
      double lse = x.maxCoeff() + std::log((x.array() - x.maxCoeff()).exp().sum());
      return lse - y.dot(x);
    }
    case LossKind::Logistic: {
      // log(1 + exp(-y x)), overflow-safe
      double t = -y(0) * x(0);
      return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
  }
  return 0.0;
}

Vec loss_grad(LossKind kind, const Vec& y, const Vec& x) {
  switch (kind) {
    case LossKind::Square:
      return x - y;
    case LossKind::CrossEntropy:
      return softmax(x) - y;
    case LossKind::Logistic: {
      Vec g(1);
      double s = 1.0 / (1.0 + std::exp(y(0) * x(0)));  // sigma(-y x)
      g(0) = -y(0) * s;
      return g;
    }
  }
  return Vec();
}

Mat loss_hess(LossKind kind, const Vec& y, const Vec& x) {
  switch (kind) {
    case LossKind::Square:
      return Mat::Identity(x.size(), x.size());
    case LossKind::CrossEntropy: {
      Vec s = softmax(x);
      return Mat(s.asDiagonal()) - s * s.transpose();
    }
    case LossKind::Logistic: {
      Mat h(1, 1);
      double sp = 1.0 / (1.0 + std::exp(-y(0) * x(0)));
      h(0, 0) = sp * (1.0 - sp);
      return h;
    }
  }
  return Mat();
}

double soft_threshold(double x, double tau) {
  double a = std::abs(x) - tau;
  return a > 0 ? (x > 0 ? a : -a) : 0.0;
}

namespace {

[[noreturn]] void throw_prox_failure(double residual, int iters) {
  std::ostringstream msg;
  msg << "proximal Newton did not converge: residual " << residual << " after " << iters
      << " iterations";
  throw std::runtime_error(msg.str());
}

// one damped-Newton solve of g(x) = 1/2 x'Vx + lam * loss(y, (Vx + omega)/lam)
bool newton_once(LossKind kind, const Vec& y, const Vec& omega, const Mat& V, double lam,
                 const ProxOptions& opts, Vec* x_io, double* resnorm_out, int* iters_out) {
  const int L = static_cast<int>(omega.size());
  Vec x = *x_io;

  auto objective = [&](const Vec& xv) {
    Vec z = (V * xv + omega) / lam;
    return 0.5 * xv.dot(V * xv) + lam * loss_value(kind, y, z);
  };
  auto residual = [&](const Vec& xv) -> Vec {
    Vec z = (V * xv + omega) / lam;
    return xv + loss_grad(kind, y, z);  // V^{-1} grad g
  };

  double g = objective(x);
  Vec r = residual(x);
  double resnorm = r.norm();
  int it = 0;
  for (; it < opts.max_newton && resnorm > opts.tol; ++it) {
    Vec z = (V * x + omega) / lam;
    Mat J = Mat::Identity(L, L) + loss_hess(kind, y, z) * V / lam;
    Vec step = J.partialPivLu().solve(-r);
    double slope = r.dot(V * step);  // grad g = V r

    bool accepted = false;
    double t = 1.0;
    for (int bt = 0; bt < 60 && !accepted; ++bt, t *= 0.5) {
      Vec xc = x + t * step;
      double gnew = objective(xc);
      if (gnew <= g + opts.armijo * t * slope) {
        x = xc;
        g = gnew;
        accepted = true;
        break;
      }
      // near the solution the objective decrement falls below double
      // precision; accept on residual contraction instead
      if (resnorm < 1e-4) {
        Vec rc = residual(xc);
        if (rc.norm() <= 0.5 * resnorm) {
          x = xc;
          g = gnew;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;
    r = residual(x);
    resnorm = r.norm();
  }
  *x_io = x;
  *resnorm_out = resnorm;
  *iters_out = it;
  return resnorm <= opts.tol;
}

ProxResult prox_newton_scaled(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                              double lam, const Vec* warm, const ProxOptions& opts) {
  const int L = static_cast<int>(omega.size());
  Vec x = warm ? *warm : Vec::Zero(L);
  double resnorm = 0.0;
  int iters = 0;

  if (!newton_once(kind, y, omega, V, lam, opts, &x, &resnorm, &iters) && lam < 0.25) {
    // small-lam instability: anneal the loss scale, warm-starting each rung
    x.setZero();
    for (double rung = 0.25; rung > lam; rung *= 0.5)
      newton_once(kind, y, omega, V, rung, opts, &x, &resnorm, &iters);
    if (!newton_once(kind, y, omega, V, lam, opts, &x, &resnorm, &iters))
      throw_prox_failure(resnorm, iters);
  }
  if (resnorm > opts.tol) throw_prox_failure(resnorm, iters);

  ProxResult out;
  out.f = x;
  out.h = V * x + omega;
  out.residual = resnorm;
  out.iterations = iters;
  return out;
}

}  // namespace

ProxResult prox_loss_scaled(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                            double lam, const Vec* warm, const ProxOptions& opts) {
  if (kind == LossKind::Square) {
    const int L = static_cast<int>(omega.size());
    Mat A = lam * Mat::Identity(L, L) + V;
    ProxResult out;
    out.f = A.ldlt().solve(lam * y - omega);
    out.h = V * out.f + omega;
    out.residual = 0.0;
    out.iterations = 0;
    return out;
  }
  return prox_newton_scaled(kind, y, omega, V, lam, warm, opts);
}

ProxResult prox_loss(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                     const ProxOptions& opts) {
  return prox_loss_scaled(kind, y, omega, V, 1.0, nullptr, opts);
}

Vec prox_loss_limit_maxmargin(const Vec& y, const Vec& omega, const Mat& V) {
  const int K = static_cast<int>(omega.size());
  if (K > 20) throw std::invalid_argument("max-margin prox: K too large for enumeration");
  int k = 0;
  y.maxCoeff(&k);

  // Margins a_mu = e_mu - e_k for mu != k; the mu = k branch of the max is 0.
  // KKT: x = -sum_{mu in A} theta_mu a_mu with theta in the simplex over the
  // active branches (the weight on the zero branch is the implicit slack).
  // Enumerate active sets of the K-1 margin constraints, with and without the
  // zero branch active, and keep the KKT-feasible candidate of least objective.
  std::vector<int> others;
  for (int mu = 0; mu < K; ++mu)
    if (mu != k) others.push_back(mu);
  const int km1 = K - 1;

  auto a_col = [&](int mu) {
    Vec a = Vec::Zero(K);
    a(mu) = 1.0;
    a(k) = -1.0;
    return a;
  };
  auto margin = [&](const Vec& x, int mu) {
    Vec vx = V * x + omega;
    return vx(mu) - vx(k);
  };
  auto objective = [&](const Vec& x) {
    double best = 0.0;
    for (int mu : others) best = std::max(best, margin(x, mu));
    return 0.5 * x.dot(V * x) + best;
  };

  const double tol = 1e-9 * (1.0 + omega.cwiseAbs().maxCoeff()) * (1.0 + V.norm());
  Vec best_x = Vec::Zero(K);
  double best_obj = std::numeric_limits<double>::infinity();
  bool found = false;

  for (unsigned mask = 0; mask < (1u << km1); ++mask) {
    std::vector<int> active;
    for (int j = 0; j < km1; ++j)
      if (mask & (1u << j)) active.push_back(others[j]);
    const int p = static_cast<int>(active.size());

    for (int zero_active = 0; zero_active < 2; ++zero_active) {
      if (p == 0 && !zero_active) continue;
      Vec x = Vec::Zero(K);
      Vec theta = Vec::Zero(p);
      if (p > 0) {
        Mat A(p, p);
        Vec rhs(p);
        if (zero_active) {
          // all active margins equal 0
          for (int i = 0; i < p; ++i) {
            Vec ai = a_col(active[i]);
            for (int j = 0; j < p; ++j) A(i, j) = -ai.dot(V * a_col(active[j]));
            rhs(i) = -ai.dot(omega);
          }
        } else {
          // active margins mutually equal, weights sum to one
          for (int i = 0; i + 1 < p; ++i) {
            Vec d = a_col(active[0]) - a_col(active[i + 1]);
            for (int j = 0; j < p; ++j) A(i, j) = -d.dot(V * a_col(active[j]));
            rhs(i) = -d.dot(omega);
          }
          A.row(p - 1).setOnes();
          rhs(p - 1) = 1.0;
        }
        Eigen::FullPivLU<Mat> lu(A);
        if (!lu.isInvertible()) continue;
        theta = lu.solve(rhs);
        if ((theta.array() < -tol).any()) continue;
        if (zero_active && theta.sum() > 1.0 + tol) continue;
        for (int j = 0; j < p; ++j) x -= theta(j) * a_col(active[j]);
      }
      double common = zero_active ? 0.0 : margin(x, active[0]);
      if (!zero_active && common < -tol) continue;
      bool ok = true;
      for (int mu : others) {
        bool is_active = false;
        for (int a : active) is_active |= (a == mu);
        if (!is_active && margin(x, mu) > common + tol) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      double obj = objective(x);
      if (obj < best_obj) {
        best_obj = obj;
        best_x = x;
        found = true;
      }
    }
  }
  if (!found) throw std::runtime_error("max-margin prox: no KKT-feasible active set");
  return best_x;
}

double moreau_envelope(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                       const ProxOptions& opts) {
  ProxResult p = prox_loss(kind, y, omega, V, opts);
  return 0.5 * p.f.dot(V * p.f) + loss_value(kind, y, p.h);
}

}  // namespace mixse
