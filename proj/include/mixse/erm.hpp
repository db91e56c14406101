#pragma once

#include <cstdint>

#include "mixse/mixture.hpp"
#include "mixse/observables.hpp"

namespace mixse {

struct ErmProblem {
  const Dataset* data = nullptr;
  const Dataset* test = nullptr;  // optional held-out split
  LossKind loss = LossKind::Square;
  PenaltyKind penalty = PenaltyKind::Ridge;
  double lambda = 1e-2;
  bool fit_bias = true;
  double tol = 1e-8;      // first-order residual per sample
  int max_iters = 100000;
};

struct ErmSolution {
  Mat W;  // L x d
  Vec b;  // L
  int iterations = 0;
  double residual = 0.0;  // ||grad R|| / n (subgradient distance for l1)
  bool converged = false;
  ErrorTriple train;  // eps_t / eps_l filled; eps_g on the test split if given
};

/// Minimises sum_nu loss(y_nu, W x_nu / sqrt(d) + b) + lambda * r(W).
/// Square+Ridge solves the normal equations exactly; smooth losses with Ridge
/// use L-BFGS; smooth losses with L1 use FISTA with backtracking.
ErmSolution fit(const ErmProblem& problem, std::uint64_t seed);

/// Misclassification rate and mean loss of (W, b) on a dataset.
void evaluate(const Mat& W, const Vec& b, LossKind loss, const Dataset& data,
              double* error_rate, double* mean_loss);

struct EmpiricalOverlaps {
  std::vector<Mat> q;  // q_k = W Sigma_k W' / d
  std::vector<Vec> m;  // m_k = W mu_k / sqrt(d)
};

EmpiricalOverlaps empirical_overlaps(const ErmSolution& solution, const MixtureModel& model);

/// Fraction of coordinates with |w_i| > 1e-10 (scalar-label estimators).
double sparsity_profile(const ErmSolution& solution);

}  // namespace mixse
