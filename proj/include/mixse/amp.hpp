#pragma once

#include <cstdint>

#include "mixse/mixture.hpp"

namespace mixse {

struct AmpOptions {
  LossKind loss = LossKind::Square;
  PenaltyKind penalty = PenaltyKind::Ridge;
  double lambda = 1e-2;
  int max_t = 2000;
  double damping = 0.7;  // weight of the fresh update on u and v
  double tol = 1e-7;     // ||u_{t+1} - u_t|| / sqrt(d)
  bool onsager = true;   // disable only as a negative control
};

struct AmpOverlap {
  double q1 = 0.0, q2 = 0.0, m1 = 0.0, m2 = 0.0;
};

struct AmpResult {
  Vec W;  // penalty resolvent of the final iterate
  std::vector<AmpOverlap> trajectory;
  int iterations = 0;
  bool converged = false;
};

/// Matrix AMP iteration reduced to binary scalar labels with diagonal
/// covariances and ridge or l1 penalty. The dataset must carry cluster
/// indices and be sampled from (or consistent with) the given model.
AmpResult amp_run(const Dataset& data, const MixtureModel& model, const AmpOptions& opts,
                  std::uint64_t seed);

}  // namespace mixse
