#pragma once

#include <cstdint>

#include "mixse/order_params.hpp"

namespace mixse {

struct ErrorTriple {
  double eps_g = 0.0, eps_t = 0.0, eps_l = 0.0;
  double se_g = 0.0, se_t = 0.0, se_l = 0.0;  // MC standard errors (0 if exact)
};

/// Error metrics from converged order parameters (plain convention).
/// For K=2 scalar labels eps_g uses the exact erfc formula; everything else
/// is a Monte Carlo average over the channel pool, with standard errors.
ErrorTriple errors_from_params(const OrderParams& params, const ChannelSpec& spec,
                               int mc_samples, std::uint64_t seed,
                               const ProxOptions& prox = {});

/// Shared-isotropic-covariance Bayes baseline: K, Delta, mean Gram Theta,
/// priors, sample complexity alpha.
struct BayesSpec {
  int K = 2;
  double delta = 0.5;
  Mat theta;
  Vec priors;
  double alpha = 1.0;

  Vec eta() const;  // eta_k = sqrt(Delta (1 + Delta / (alpha rho_k)))
};

struct BayesEstimate {
  double value = 0.0;
  double stderr_mc = 0.0;  // 0 for the closed form
};

BayesEstimate bayes_error(const BayesSpec& spec, int mc_samples, std::uint64_t seed);

/// Closed form for K=2, balanced, Theta = I: 1/2 erfc(1 / (2 eta)).
double bayes_error_binary_balanced(const BayesSpec& spec);

/// eps_g of a converged solve minus the Bayes baseline.
double bayes_gap(const SolveReport& report, const ChannelSpec& spec, const BayesSpec& bayes,
                 int mc_samples, std::uint64_t seed);

}  // namespace mixse
