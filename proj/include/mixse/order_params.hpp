#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mixse/proximal.hpp"

namespace mixse {

/// The 6K+1 order parameters of the self-consistent system. Per cluster k:
/// Q_k (L x L spd), m_k (L), V_k (L x L spd) and their hats; bias b (L).
struct OrderParams {
  std::vector<Mat> Q, V, Qhat, Vhat;
  std::vector<Vec> m, mhat;
  Vec b;

  int clusters() const { return static_cast<int>(Q.size()); }
  int label_dim() const { return static_cast<int>(b.size()); }

  static OrderParams identity_init(int K, int L);
};

enum class PriorPathKind { CorollaryRidge, UniformCov, BinaryDiagonal, BinaryGeneric };
const char* to_string(PriorPathKind kind);

struct SolverConfig {
  double alpha = 1.0;        // sample complexity n/d
  double lambda = 1e-2;      // penalty strength
  int mc_samples = 20000;    // channel Monte Carlo pool size per cluster
  double damping = 0.5;      // gamma in [0,1)
  int max_iters = 1000;
  double conv_tol = 1e-5;    // max Frobenius change across parameters
  double bias_tol = 1e-6;
  std::uint64_t seed = 0;
  bool anneal = false;       // solve a decreasing lambda ladder, warm-started
  bool resample = false;     // fresh xi pool each iteration instead of CRN
  bool stein_vhat = false;   // Stein form for Vhat instead of the Hessian form
  std::optional<PriorPathKind> path_override;
  std::optional<OrderParams> init;  // overrides the identity init (state convention)
  ProxOptions prox;
};

struct SolveReport {
  OrderParams params;  // plain (unrescaled) convention
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool hit_spurious = false;
  double wall_time_sec = 0.0;
  PriorPathKind path = PriorPathKind::CorollaryRidge;
  double alpha = 0.0;
  double lambda = 0.0;
};

/// Loss-side description of the mixture: loss, one label code per cluster,
/// cluster priors. Scalar labels may repeat across clusters.
struct ChannelSpec {
  LossKind loss = LossKind::Square;
  std::vector<Vec> label_codes;
  Vec priors;

  int clusters() const { return static_cast<int>(label_codes.size()); }
  int label_dim() const {
    return label_codes.empty() ? 0 : static_cast<int>(label_codes[0].size());
  }
};

}  // namespace mixse
