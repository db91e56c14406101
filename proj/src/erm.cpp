#include "mixse/erm.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mixse {

namespace {

int argmax_index(const Vec& x) {
  int best = 0;
  for (int i = 1; i < x.size(); ++i)
    if (x(i) > x(best)) best = i;
  return best;
}

bool correct(const Vec& pred, const Vec& label) {
  if (label.size() == 1) return (pred(0) >= 0.0 ? 1.0 : -1.0) * label(0) > 0.0;
  return argmax_index(pred) == argmax_index(label);
}

// loss part of the objective and its gradient in (W, b)
struct SmoothEval {
  double value = 0.0;
  Mat gW;
  Vec gb;
};

SmoothEval eval_loss(const Dataset& data, LossKind loss, const Mat& W, const Vec& b,
                     bool with_grad) {
  const int n = data.n();
  const int L = static_cast<int>(W.rows());
  const double sq = std::sqrt(static_cast<double>(data.dim()));

  Mat Z = data.X * W.transpose() / sq;  // n x L
  Z.rowwise() += b.transpose();

  SmoothEval out;
  Mat G(n, L);
  for (int i = 0; i < n; ++i) {
    Vec z = Z.row(i).transpose();
    Vec y = data.Y.row(i).transpose();
    out.value += loss_value(loss, y, z);
    if (with_grad) G.row(i) = loss_grad(loss, y, z).transpose();
  }
  if (with_grad) {
    out.gW = G.transpose() * data.X / sq;
    out.gb = G.colwise().sum().transpose();
  }
  return out;
}

double l1_subgrad_residual(const Mat& gW, const Vec& gb, const Mat& W, double lambda,
                           bool fit_bias) {
  double s = 0.0;
  for (int i = 0; i < W.rows(); ++i)
    for (int j = 0; j < W.cols(); ++j) {
      double g = gW(i, j), w = W(i, j);
      double r = w != 0.0 ? g + lambda * (w > 0 ? 1.0 : -1.0)
                          : std::max(0.0, std::abs(g) - lambda);
      s += r * r;
    }
  if (fit_bias) s += gb.squaredNorm();
  return std::sqrt(s);
}

ErmSolution solve_square_ridge(const ErmProblem& pb) {
  const Dataset& data = *pb.data;
  const int d = data.dim();
  const int L = data.label_dim();
  const int n = data.n();
  const double sq = std::sqrt(static_cast<double>(d));

  Mat X = data.X;
  Mat Y = data.Y;
  Vec xbar = Vec::Zero(d), ybar = Vec::Zero(L);
  if (pb.fit_bias) {
    xbar = X.colwise().mean().transpose();
    ybar = Y.colwise().mean().transpose();
    X.rowwise() -= xbar.transpose();
    Y.rowwise() -= ybar.transpose();
  }

  Mat A = X.transpose() * X / d + pb.lambda * Mat::Identity(d, d);
  Mat rhs = X.transpose() * Y / sq;  // d x L
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) throw std::runtime_error("erm: normal equations failed");

  ErmSolution sol;
  sol.W = llt.solve(rhs).transpose();
  sol.b = pb.fit_bias ? Vec(ybar - sol.W * xbar / sq) : Vec::Zero(L);
  sol.iterations = 1;
  SmoothEval ev = eval_loss(data, LossKind::Square, sol.W, sol.b, true);
  sol.residual = std::sqrt((ev.gW + pb.lambda * sol.W).squaredNorm() +
                           (pb.fit_bias ? ev.gb.squaredNorm() : 0.0)) /
                 n;
  sol.converged = true;
  return sol;
}

// L-BFGS with backtracking Armijo line search on the ridge-regularised risk
ErmSolution solve_smooth_ridge(const ErmProblem& pb) {
  const Dataset& data = *pb.data;
  const int d = data.dim();
  const int L = data.label_dim();
  const int n = data.n();
  const int nw = L * d + (pb.fit_bias ? L : 0);

  auto unpack = [&](const Vec& th, Mat* W, Vec* b) {
    *W = Eigen::Map<const Mat>(th.data(), L, d);
    *b = pb.fit_bias ? Vec(th.tail(L)) : Vec::Zero(L);
  };
  auto eval = [&](const Vec& th, Vec* grad) {
    Mat W;
    Vec b;
    unpack(th, &W, &b);
    SmoothEval ev = eval_loss(data, pb.loss, W, b, grad != nullptr);
    double val = ev.value + 0.5 * pb.lambda * W.squaredNorm();
    if (grad) {
      Mat gW = ev.gW + pb.lambda * W;
      grad->resize(nw);
      grad->head(L * d) = Eigen::Map<const Vec>(gW.data(), L * d);
      if (pb.fit_bias) grad->tail(L) = ev.gb;
    }
    return val;
  };

  Vec th = Vec::Zero(nw);
  Vec g;
  double f = eval(th, &g);

  const int mem = 10;
  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;

  ErmSolution sol;
  int it = 0;
  for (; it < pb.max_iters; ++it) {
    double res = g.norm() / n;
    if (res <= pb.tol) {
      sol.converged = true;
      break;
    }
    // two-loop recursion
    Vec q = g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      a[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - beta) * s_hist[i];
    }
    Vec dir = -q;
    double slope = g.dot(dir);
    if (slope >= 0.0) {  // not a descent direction, reset memory
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }

    double t = 1.0;
    double fnew = f;
    Vec thnew, gnew;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      thnew = th + t * dir;
      fnew = eval(thnew, nullptr);
      if (fnew <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    gnew.resize(nw);
    eval(thnew, &gnew);

    Vec s = thnew - th, yv = gnew - g;
    double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > mem) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    th = thnew;
    g = gnew;
    f = fnew;
  }

  unpack(th, &sol.W, &sol.b);
  sol.iterations = it;
  sol.residual = g.norm() / n;
  if (sol.residual <= pb.tol) sol.converged = true;
  return sol;
}

// FISTA with backtracking and function-value restart; bias unpenalised
ErmSolution solve_smooth_l1(const ErmProblem& pb) {
  const Dataset& data = *pb.data;
  const int d = data.dim();
  const int L = data.label_dim();
  const int n = data.n();

  Mat W = Mat::Zero(L, d), Wy = W, Wprev = W;
  Vec b = Vec::Zero(L), by = b, bprev = b;
  double tk = 1.0, step = 1.0;
  double obj_prev = std::numeric_limits<double>::infinity();

  auto full_obj = [&](const Mat& Wv, const Vec& bv) {
    return eval_loss(data, pb.loss, Wv, bv, false).value +
           pb.lambda * Wv.cwiseAbs().sum();
  };

  ErmSolution sol;
  int it = 0;
  for (; it < pb.max_iters; ++it) {
    SmoothEval ev = eval_loss(data, pb.loss, Wy, by, true);

    // backtracking on the quadratic upper bound at (Wy, by)
    Mat Wn;
    Vec bn;
    for (int bt = 0; bt < 80; ++bt) {
      Wn = (Wy - step * ev.gW).unaryExpr(
          [&](double v) { return soft_threshold(v, step * pb.lambda); });
      bn = pb.fit_bias ? Vec(by - step * ev.gb) : Vec::Zero(L);
      double lhs = eval_loss(data, pb.loss, Wn, bn, false).value;
      double dd = (Wn - Wy).squaredNorm() + (bn - by).squaredNorm();
      double rhs = ev.value + (Wn - Wy).cwiseProduct(ev.gW).sum() +
                   (pb.fit_bias ? (bn - by).dot(ev.gb) : 0.0) + dd / (2.0 * step);
      if (lhs <= rhs + 1e-12 * std::abs(rhs)) break;
      step *= 0.5;
    }

    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    Wy = Wn + ((tk - 1.0) / tn) * (Wn - Wprev);
    by = bn + ((tk - 1.0) / tn) * (bn - bprev);
    Wprev = W;
    bprev = b;
    W = Wn;
    b = bn;
    tk = tn;

    if (it % 10 == 0) {
      double obj = full_obj(W, b);
      if (obj > obj_prev) {  // restart momentum
        Wy = W;
        by = b;
        tk = 1.0;
      }
      obj_prev = obj;
      SmoothEval evc = eval_loss(data, pb.loss, W, b, true);
      sol.residual = l1_subgrad_residual(evc.gW, evc.gb, W, pb.lambda, pb.fit_bias) / n;
      if (sol.residual <= pb.tol) {
        sol.converged = true;
        break;
      }
    }
  }
  sol.W = W;
  sol.b = b;
  sol.iterations = it;
  return sol;
}

}  // namespace

void evaluate(const Mat& W, const Vec& b, LossKind loss, const Dataset& data,
              double* error_rate, double* mean_loss) {
  const int n = data.n();
  const double sq = std::sqrt(static_cast<double>(data.dim()));
  Mat Z = data.X * W.transpose() / sq;
  Z.rowwise() += b.transpose();
  double errors = 0.0, lsum = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec z = Z.row(i).transpose();
    Vec y = data.Y.row(i).transpose();
    if (!correct(z, y)) errors += 1.0;
    lsum += loss_value(loss, y, z);
  }
  if (error_rate) *error_rate = errors / n;
  if (mean_loss) *mean_loss = lsum / n;
}

ErmSolution fit(const ErmProblem& pb, std::uint64_t /*seed*/) {
  if (!pb.data || pb.data->n() < 1) throw std::invalid_argument("erm: empty dataset");
  if (pb.lambda <= 0.0) throw std::invalid_argument("erm: lambda must be positive");
  if (pb.penalty == PenaltyKind::L1 && pb.loss == LossKind::CrossEntropy)
    throw std::invalid_argument("erm: l1 with cross-entropy is not supported");

  ErmSolution sol;
  if (pb.penalty == PenaltyKind::Ridge) {
    sol = pb.loss == LossKind::Square ? solve_square_ridge(pb) : solve_smooth_ridge(pb);
  } else {
    sol = solve_smooth_l1(pb);
  }

  evaluate(sol.W, sol.b, pb.loss, *pb.data, &sol.train.eps_t, &sol.train.eps_l);
  if (pb.test) evaluate(sol.W, sol.b, pb.loss, *pb.test, &sol.train.eps_g, nullptr);
  return sol;
}

EmpiricalOverlaps empirical_overlaps(const ErmSolution& sol, const MixtureModel& model) {
  const int d = model.dim();
  if (sol.W.cols() != d) throw std::invalid_argument("overlaps: dimension mismatch");
  const double sq = std::sqrt(static_cast<double>(d));
  EmpiricalOverlaps out;
  for (int k = 0; k < model.K; ++k) {
    out.q.push_back(sol.W * model.covariances[k] * sol.W.transpose() / d);
    out.m.push_back(sol.W * model.means[k] / sq);
  }
  return out;
}

double sparsity_profile(const ErmSolution& sol) {
  if (sol.W.rows() != 1) throw std::invalid_argument("sparsity_profile: requires L = 1");
  double nz = 0.0;
  for (int j = 0; j < sol.W.cols(); ++j)
    if (std::abs(sol.W(0, j)) > 1e-10) nz += 1.0;
  return nz / sol.W.cols();
}

}  // namespace mixse
