#pragma once

#include <memory>

#include "mixse/mixture.hpp"
#include "mixse/order_params.hpp"

namespace mixse {

/// Penalty-side update: path-specific precomputations plus the parameter
/// convention the solver state lives in. Ridge paths driven by spectral atoms
/// or the uniform-covariance reduction run in the rescaled convention
/// (Q -> lambda^2 Q, m -> lambda m, V -> lambda V, b -> lambda b,
/// Vhat -> Vhat / lambda), which stays O(1) through the small-lambda regime;
/// the other paths use the plain convention with lambda annealing.
struct PriorPath {
  PriorPathKind kind = PriorPathKind::CorollaryRidge;
  PenaltyKind penalty = PenaltyKind::Ridge;
  bool rescaled = false;

  // CorollaryRidge / BinaryDiagonal
  SpectralMixture spectral;
  // UniformCov
  double delta = 0.0;
  Mat theta;  // Gram matrix of the means
  // BinaryGeneric
  std::vector<Mat> sigma;
  std::vector<Vec> mu;

  static PriorPath select(const MixtureModel& model, LossKind loss, PenaltyKind penalty,
                          const SolverConfig& cfg);
  static PriorPath from_spectral(const SpectralMixture& sm, int L, PenaltyKind penalty,
                                 const SolverConfig& cfg);
};

struct ChannelUpdate {
  std::vector<Mat> Qhat, Vhat;  // Vhat in the state convention of the path
  std::vector<Vec> mhat;
  Vec b_new;           // sum_k rho_k E[h_k - m_k]
  Vec bias_residual;   // sum_k rho_k E[V_k f_k]
};

/// Gaussian pool with per-cluster blocks and warm starts for the prox solves.
class ChannelPool {
 public:
  ChannelPool(int K, int L, int mc_samples, std::uint64_t seed);
  void resample();
  Mat& xi(int k) { return xi_[k]; }
  const Mat& xi(int k) const { return xi_[k]; }
  Mat& warm(int k) { return warm_[k]; }
  int samples() const { return mc_; }

 private:
  int mc_;
  std::uint64_t seed_;
  int draws_ = 0;
  std::vector<Mat> xi_;
  std::vector<Mat> warm_;
};

/// Loss-side half of the fixed point: Monte Carlo (or closed form for the
/// square loss) estimates of Qhat, mhat, Vhat and the bias update.
/// lam_prox is the loss scale of the state convention (lambda if rescaled,
/// 1 otherwise); lam_prox = 0 selects the max-margin limit proximal.
ChannelUpdate channel_update(const OrderParams& p, const ChannelSpec& spec,
                             const SolverConfig& cfg, double lam_prox, ChannelPool& pool);

/// Penalty-side half: (Q, m, V) per cluster from the hats.
void prior_update(const PriorPath& path, double lambda, const OrderParams& hats,
                  std::vector<Mat>* Q, std::vector<Vec>* m, std::vector<Mat>* V);

SolveReport solve(const MixtureModel& model, LossKind loss, PenaltyKind penalty,
                  const SolverConfig& cfg);
SolveReport solve(const SpectralMixture& sm, const ChannelSpec& spec, PenaltyKind penalty,
                  const SolverConfig& cfg);
SolveReport solve_with_path(const PriorPath& path, const ChannelSpec& spec,
                            const SolverConfig& cfg);

/// Exact Gaussian integrals behind the l1 prior update: for y ~ N(v, u),
/// p = P(|y| > lam), m1 = E[soft_threshold(y, lam)], m2 = E[soft_threshold(y, lam)^2].
struct SoftThresholdMoments {
  double p = 0.0, m1 = 0.0, m2 = 0.0;
};

SoftThresholdMoments soft_threshold_moments(double v, double u, double lam);

struct ScanPoint {
  double alpha = 0.0;
  double eps_t = 0.0;
  double eps_g = 0.0;
  bool converged = false;
};

struct ScanResult {
  std::vector<ScanPoint> points;
  std::optional<double> alpha_star;  // first grid alpha with eps_t > threshold
};

/// Solves along an increasing alpha grid with warm starts and reports the
/// detected separability transition.
ScanResult separability_scan(const MixtureModel& model, LossKind loss, SolverConfig cfg,
                             const std::vector<double>& alpha_grid,
                             double eps_t_threshold = 1e-4);

}  // namespace mixse
