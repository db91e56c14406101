#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "mixse/proximal.hpp"

namespace mixse {

/// K-cluster Gaussian mixture. Means are stored at the ambient scale of the
/// joint density; the sqrt(d) rescaling of the spectral representation is
/// applied only when constructing a SpectralMixture.
struct MixtureModel {
  int K = 0;
  int L = 0;  // label dimension: K for one-hot, 1 for scalar +-1 labels
  std::vector<Vec> means;        // K vectors of dimension d
  std::vector<Mat> covariances;  // K spd d x d matrices
  Vec priors;                    // K probabilities, sum 1
  std::vector<Vec> label_codes;  // K vectors in R^L, pairwise distinct

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }

  /// Validates all construction invariants; throws std::invalid_argument.
  static MixtureModel make(std::vector<Vec> means, std::vector<Mat> covariances, Vec priors,
                           std::vector<Vec> label_codes);

  /// One-hot label codes e_1..e_K.
  static std::vector<Vec> onehot_codes(int K);
  /// Scalar codes {+1, -1} (K must be 2).
  static std::vector<Vec> pm1_codes();

  /// Gram matrix of the means, Theta_{kk'} = mu_k' mu_{k'}.
  Mat mean_gram() const;
};

/// Joint eigenbasis representation p(sigma, mu): one atom per eigendirection,
/// sigma the K eigenvalues, mu the sqrt(d)-rescaled mean projections.
struct SpectralMixture {
  struct Atom {
    Vec sigma;      // K eigenvalues, all > 0
    Vec mu;         // K rescaled mean projections sqrt(d) mu_k' v_i
    double weight;  // nominally 1/d; weights sum to 1
  };
  int d = 0;
  std::vector<Atom> atoms;

  /// Builds the spectral representation of a mixture whose covariances share
  /// an eigenbasis. Throws if the covariances do not commute (relative
  /// Frobenius tolerance 1e-8).
  static SpectralMixture from_model(const MixtureModel& model);
};

struct Dataset {
  Mat X;  // n x d samples
  Mat Y;  // n x L labels: one-hot rows, or a single +-1 column
  std::vector<int> cluster;  // optional per-sample cluster index (empty if unknown)

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
  int label_dim() const { return static_cast<int>(Y.cols()); }
};

/// Sparse-mean scenario: fraction rho_sparse of coordinates carry the signal
/// with variance delta1, the rest are noise directions with variance delta2.
struct ScenarioSparse {
  double rho_sparse = 0.1;
  double delta1 = 0.1;
  double delta2 = 1.0;
  int d = 1000;
};

Dataset sample(const MixtureModel& model, int n, std::uint64_t seed);

/// Per-class empirical means/covariances/fractions. Classes are read off the
/// label rows (argmax for one-hot, sign for scalar labels). Covariances are
/// normalised by the class count, symmetrised, and floored so the smallest
/// eigenvalue is >= 1e-8 * trace/d.
MixtureModel estimate_from_data(const Dataset& data, int K);

/// v = erf(F x) rowwise, F a p x d i.i.d. N(0,1)/sqrt(d) projection.
Dataset random_feature_map(const Dataset& data, int p, std::uint64_t seed);

struct SparseScenario {
  MixtureModel model;       // K=2, scalar labels, opposite means
  SpectralMixture spectral;
};

SparseScenario build_sparse_scenario(const ScenarioSparse& s, std::uint64_t seed);

struct XorScenario {
  MixtureModel four_cluster;  // means +-e1 +-e2, scalar labels per the flag
  MixtureModel two_cluster;   // matched class-wise means and covariances
};

/// realisable: clusters at e1+-e2 labelled +1, clusters at -e1+-e2 labelled -1.
/// Otherwise the XOR assignment (opposite corners share a label).
XorScenario build_xor_scenario(double delta, bool realisable, int d);

/// Isotropic K-cluster model with uniform covariance delta*I and unit-norm
/// orthogonal means (the d -> infinity surrogate of Gaussian means, Theta = I).
MixtureModel build_isotropic_model(int K, double delta, int d, const Vec& priors);

}  // namespace mixse
