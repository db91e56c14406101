#include "mixse/mixture.hpp"

#include <cmath>
#include <stdexcept>

#include "mixse/random.hpp"

namespace mixse {

std::vector<Vec> MixtureModel::onehot_codes(int K) {
  std::vector<Vec> codes(K);
  for (int k = 0; k < K; ++k) {
    codes[k] = Vec::Zero(K);
    codes[k](k) = 1.0;
  }
  return codes;
}

std::vector<Vec> MixtureModel::pm1_codes() {
  Vec plus(1), minus(1);
  plus(0) = 1.0;
  minus(0) = -1.0;
  return {plus, minus};
}

MixtureModel MixtureModel::make(std::vector<Vec> means, std::vector<Mat> covariances, Vec priors,
                                std::vector<Vec> label_codes) {
  const int K = static_cast<int>(means.size());
  if (K < 1) throw std::invalid_argument("mixture: need at least one cluster");
  if (static_cast<int>(covariances.size()) != K || priors.size() != K ||
      static_cast<int>(label_codes.size()) != K)
    throw std::invalid_argument("mixture: K mismatch across fields");
  const int d = static_cast<int>(means[0].size());
  const int L = static_cast<int>(label_codes[0].size());

  if (priors.minCoeff() < 0.0 || std::abs(priors.sum() - 1.0) > 1e-10)
    throw std::invalid_argument("mixture: priors must be nonnegative and sum to 1");

  for (int k = 0; k < K; ++k) {
    if (means[k].size() != d || label_codes[k].size() != L)
      throw std::invalid_argument("mixture: inconsistent dimensions");
    const Mat& S = covariances[k];
    if (S.rows() != d || S.cols() != d)
      throw std::invalid_argument("mixture: covariance dimension mismatch");
    if ((S - S.transpose()).norm() > 1e-10 * (1.0 + S.norm()))
      throw std::invalid_argument("mixture: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0)
      throw std::invalid_argument("mixture: covariance not positive definite");
    // one-hot codes must be pairwise distinct; scalar labels may repeat
    // across clusters (several clusters can share a class)
    if (L > 1)
      for (int j = 0; j < k; ++j)
        if ((label_codes[k] - label_codes[j]).norm() == 0.0)
          throw std::invalid_argument("mixture: label codes must be pairwise distinct");
  }

  MixtureModel m;
  m.K = K;
  m.L = L;
  m.means = std::move(means);
  m.covariances = std::move(covariances);
  m.priors = std::move(priors);
  m.label_codes = std::move(label_codes);
  return m;
}

Mat MixtureModel::mean_gram() const {
  Mat theta(K, K);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) theta(a, b) = means[a].dot(means[b]);
  return theta;
}

SpectralMixture SpectralMixture::from_model(const MixtureModel& model) {
  const int d = model.dim();
  const int K = model.K;

  for (int a = 0; a < K; ++a)
    for (int b = 0; b < a; ++b) {
      const Mat &A = model.covariances[a], &B = model.covariances[b];
      double comm = (A * B - B * A).norm();
      if (comm > 1e-8 * A.norm() * B.norm())
        throw std::invalid_argument("spectral mixture: covariances do not commute");
    }

  // eigenbasis of a generic positive combination is common to all covariances
  Mat ref = Mat::Zero(d, d);
  for (int k = 0; k < K; ++k) ref += (1.0 + 0.37 * k) * model.covariances[k];
  Eigen::SelfAdjointEigenSolver<Mat> es(ref);
  const Mat& basis = es.eigenvectors();

  SpectralMixture sm;
  sm.d = d;
  sm.atoms.resize(d);
  const double sqd = std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) {
    Atom& atom = sm.atoms[i];
    atom.sigma.resize(K);
    atom.mu.resize(K);
    atom.weight = 1.0 / d;
    Vec v = basis.col(i);
    for (int k = 0; k < K; ++k) {
      atom.sigma(k) = v.dot(model.covariances[k] * v);
      atom.mu(k) = sqd * model.means[k].dot(v);
    }
  }
  return sm;
}

Dataset sample(const MixtureModel& model, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const int d = model.dim();
  Rng rng(seed);

  std::vector<Mat> chol(model.K);
  for (int k = 0; k < model.K; ++k) {
    Eigen::LLT<Mat> llt(model.covariances[k]);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("sample: covariance Cholesky failed");
    chol[k] = llt.matrixL();
  }

  Dataset out;
  out.X.resize(n, d);
  out.Y.resize(n, model.L);
  out.cluster.resize(n);
  for (int i = 0; i < n; ++i) {
    int k = rng.discrete(model.priors);
    out.cluster[i] = k;
    Vec z = rng.gaussian_vector(d);
    out.X.row(i) = (model.means[k] + chol[k] * z).transpose();
    out.Y.row(i) = model.label_codes[k].transpose();
  }
  return out;
}

namespace {

int class_of_row(const Eigen::RowVectorXd& y) {
  if (y.size() == 1) return y(0) > 0 ? 0 : 1;  // +1 -> class 0, -1 -> class 1
  int k = 0;
  y.maxCoeff(&k);
  return k;
}

}  // namespace

MixtureModel estimate_from_data(const Dataset& data, int K) {
  const int n = data.n();
  const int d = data.dim();
  const int L = data.label_dim();

  std::vector<int> count(K, 0);
  std::vector<Vec> mean(K, Vec::Zero(d));
  for (int i = 0; i < n; ++i) {
    int k = class_of_row(data.Y.row(i));
    if (k < 0 || k >= K) throw std::invalid_argument("estimate: label out of range");
    ++count[k];
    mean[k] += data.X.row(i).transpose();
  }
  for (int k = 0; k < K; ++k) {
    if (count[k] < 2) throw std::invalid_argument("degenerate class");
    mean[k] /= count[k];
  }

  std::vector<Mat> cov(K, Mat::Zero(d, d));
  for (int i = 0; i < n; ++i) {
    int k = class_of_row(data.Y.row(i));
    Vec c = data.X.row(i).transpose() - mean[k];
    cov[k] += c * c.transpose();
  }
  Vec priors(K);
  for (int k = 0; k < K; ++k) {
    cov[k] /= count[k];  // class-count normalisation
    cov[k] = 0.5 * (cov[k] + cov[k].transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(cov[k], Eigen::EigenvaluesOnly);
    double floor = 1e-8 * cov[k].trace() / d;
    if (floor <= 0.0) floor = 1e-12;
    double lo = es.eigenvalues().minCoeff();
    if (lo < floor) cov[k] += (floor - lo) * Mat::Identity(d, d);
    priors(k) = static_cast<double>(count[k]) / n;
  }

  std::vector<Vec> codes =
      (L == 1) ? MixtureModel::pm1_codes() : MixtureModel::onehot_codes(K);
  return MixtureModel::make(std::move(mean), std::move(cov), std::move(priors), std::move(codes));
}

Dataset random_feature_map(const Dataset& data, int p, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("random_feature_map: p must be >= 1");
  const int d = data.dim();
  Rng rng(seed);
  Mat F = rng.gaussian_matrix(p, d) / std::sqrt(static_cast<double>(d));

  Dataset out;
  out.X = (data.X * F.transpose()).unaryExpr([](double v) { return std::erf(v); });
  out.Y = data.Y;
  out.cluster = data.cluster;
  return out;
}

SparseScenario build_sparse_scenario(const ScenarioSparse& s, std::uint64_t seed) {
  if (!(s.rho_sparse > 0.0 && s.rho_sparse <= 1.0))
    throw std::invalid_argument("sparse scenario: rho_sparse must be in (0,1]");
  if (s.delta1 <= 0.0 || s.delta2 <= 0.0)
    throw std::invalid_argument("sparse scenario: variances must be positive");
  const int d = s.d;
  const int ni = static_cast<int>(std::lround(s.rho_sparse * d));
  if (ni < 1) throw std::invalid_argument("sparse scenario: d * rho_sparse must be >= 1");

  Rng rng(seed);
  Vec mu = Vec::Zero(d);
  Vec diag(d);
  const double sqd = std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) {
    if (i < ni) {
      mu(i) = rng.gaussian() / sqd;  // ambient scale; atom scale is N(0,1)
      diag(i) = s.delta1;
    } else {
      diag(i) = s.delta2;
    }
  }

  Mat sigma = diag.asDiagonal();
  Vec priors(2);
  priors << 0.5, 0.5;
  SparseScenario out;
  out.model = MixtureModel::make({mu, -mu}, {sigma, sigma}, priors, MixtureModel::pm1_codes());

  out.spectral.d = d;
  out.spectral.atoms.resize(d);
  for (int i = 0; i < d; ++i) {
    auto& atom = out.spectral.atoms[i];
    atom.sigma = Vec::Constant(2, diag(i));
    atom.mu.resize(2);
    atom.mu(0) = sqd * mu(i);
    atom.mu(1) = -sqd * mu(i);
    atom.weight = 1.0 / d;
  }
  return out;
}

XorScenario build_xor_scenario(double delta, bool realisable, int d) {
  if (delta <= 0.0) throw std::invalid_argument("xor scenario: delta must be positive");
  if (d < 2) throw std::invalid_argument("xor scenario: need d >= 2");

  Vec e1 = Vec::Zero(d), e2 = Vec::Zero(d);
  e1(0) = 1.0;
  e2(1) = 1.0;
  std::vector<Vec> means = {e1 + e2, e1 - e2, -e1 + e2, -e1 - e2};
  Mat iso = delta * Mat::Identity(d, d);

  // scalar labels: clusters 1..4 in the order above
  std::vector<int> sign = realisable ? std::vector<int>{1, 1, -1, -1}
                                     : std::vector<int>{1, -1, -1, 1};
  std::vector<Vec> codes(4, Vec(1));
  for (int k = 0; k < 4; ++k) codes[k](0) = sign[k];

  XorScenario out;
  Vec priors4 = Vec::Constant(4, 0.25);
  out.four_cluster = MixtureModel::make(means, {iso, iso, iso, iso}, priors4, codes);

  // matched two-cluster reduction: class-wise mean and covariance
  std::vector<Vec> cls_means(2, Vec::Zero(d));
  std::vector<std::vector<int>> members(2);
  for (int k = 0; k < 4; ++k) members[sign[k] > 0 ? 0 : 1].push_back(k);
  for (int c = 0; c < 2; ++c) {
    for (int k : members[c]) cls_means[c] += means[k];
    cls_means[c] /= static_cast<double>(members[c].size());
  }
  std::vector<Mat> cls_cov(2, Mat::Zero(d, d));
  for (int c = 0; c < 2; ++c) {
    cls_cov[c] = iso;
    for (int k : members[c]) {
      Vec dm = means[k] - cls_means[c];
      cls_cov[c] += dm * dm.transpose() / static_cast<double>(members[c].size());
    }
  }
  Vec priors2 = Vec::Constant(2, 0.5);
  out.two_cluster =
      MixtureModel::make(cls_means, cls_cov, priors2, MixtureModel::pm1_codes());
  return out;
}

MixtureModel build_isotropic_model(int K, double delta, int d, const Vec& priors) {
  if (d < K) throw std::invalid_argument("isotropic model: need d >= K");
  std::vector<Vec> means(K);
  for (int k = 0; k < K; ++k) {
    means[k] = Vec::Zero(d);
    means[k](k) = 1.0;
  }
  std::vector<Mat> covs(K, delta * Mat::Identity(d, d));
  return MixtureModel::make(std::move(means), std::move(covs), priors,
                            MixtureModel::onehot_codes(K));
}

}  // namespace mixse
