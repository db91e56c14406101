#pragma once

#include <Eigen/Dense>

namespace mixse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class LossKind { Square, CrossEntropy, Logistic };
enum class PenaltyKind { Ridge, L1 };

const char* to_string(LossKind kind);
const char* to_string(PenaltyKind kind);

/// Label dimension the loss operates on: K for Square/CrossEntropy
/// (one-hot codes), 1 for Logistic (labels in {-1,+1}).
int loss_label_dim(LossKind kind, int K);

double loss_value(LossKind kind, const Vec& y, const Vec& x);
Vec loss_grad(LossKind kind, const Vec& y, const Vec& x);
Mat loss_hess(LossKind kind, const Vec& y, const Vec& x);

Vec softmax(const Vec& x);

struct ProxOptions {
  double tol = 1e-10;  // stationarity residual norm
  int max_newton = 200;
  double armijo = 1e-4;
};

struct ProxResult {
  Vec h;  // proximal point
  Vec f;  // V^{-1} (h - omega)
  double residual = 0.0;
  int iterations = 0;
};

/// h = argmin_u 1/2 (u-omega)' V^{-1} (u-omega) + loss(y, u).
/// Square is closed form; the smooth losses use damped Newton.
ProxResult prox_loss(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                     const ProxOptions& opts = {});

/// The same minimisation in the f variable, with the loss scaled by lam:
///   f = argmin_x 1/2 x'Vx + lam * loss(y, (Vx + omega)/lam),   h = Vf + omega.
/// lam = 1 recovers prox_loss. On small-regularisation paths the rescaled
/// order parameters stay O(1) while the plain prox argument blows up, and
/// this form stays well conditioned. `warm` optionally seeds Newton on f.
ProxResult prox_loss_scaled(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                            double lam, const Vec* warm = nullptr,
                            const ProxOptions& opts = {});

/// lam -> 0 limit of the rescaled cross-entropy proximal:
///   f = argmin_x 1/2 x'Vx + max_mu (e_mu - e_k)'(Vx + omega),
/// the max-margin piecewise-quadratic program, solved exactly by
/// enumerating active sets of the margin constraints. y must be one-hot.
Vec prox_loss_limit_maxmargin(const Vec& y, const Vec& omega, const Mat& V);

double soft_threshold(double x, double tau);

/// Value 1/2 f'Vf + loss(y, h) at the computed proximal h.
double moreau_envelope(LossKind kind, const Vec& y, const Vec& omega, const Mat& V,
                       const ProxOptions& opts = {});

}  // namespace mixse
