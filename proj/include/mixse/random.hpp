#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace mixse {

/// Seeded RNG wrapper. Deterministic per platform for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double gaussian() { return normal_(gen_); }
  double uniform() { return unif_(gen_); }

  Eigen::VectorXd gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gaussian();
    return v;
  }

  Eigen::MatrixXd gaussian_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = gaussian();
    return m;
  }

  /// Index in [0, p.size()) with probability proportional to p.
  int discrete(const Eigen::VectorXd& p) {
    double u = uniform() * p.sum();
    double acc = 0.0;
    for (int i = 0; i + 1 < p.size(); ++i) {
      acc += p(i);
      if (u < acc) return i;
    }
    return static_cast<int>(p.size()) - 1;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace mixse
