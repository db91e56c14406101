#include <doctest.h>

#include <cmath>
#include <random>

#include "mixse/proximal.hpp"

using namespace mixse;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat random_spd(std::mt19937_64& gen, int n, double base = 0.3) {
  std::normal_distribution<double> normal;
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = normal(gen);
  return A * A.transpose() / n + base * Mat::Identity(n, n);
}

Vec random_vec(std::mt19937_64& gen, int n, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * normal(gen);
  return v;
}

// scalar stationarity h = 1/(1+e^h) solved by bisection, independent of the
// Newton path under test
double logistic_prox_bisection(double y, double omega, double V) {
  auto g = [&](double h) { return (h - omega) / V + (-y / (1.0 + std::exp(y * h))); };
  double lo = omega - std::abs(V) - 2.0, hi = omega + std::abs(V) + 2.0;
  while (g(lo) > 0) lo -= 1.0;
  while (g(hi) < 0) hi += 1.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (g(mid) > 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double maxmargin_objective(int k, const Vec& x, const Vec& omega, const Mat& V) {
  Vec vx = V * x + omega;
  double best = 0.0;
  for (int mu = 0; mu < vx.size(); ++mu)
    if (mu != k) best = std::max(best, vx(mu) - vx(k));
  return 0.5 * x.dot(V * x) + best;
}

}  // namespace

TEST_SUITE("proximal") {

TEST_CASE("square prox closed form") {
  Vec y = vec2(1, 0), omega = vec2(0, 0);
  Mat V = Mat::Identity(2, 2);
  ProxResult p = prox_loss(LossKind::Square, y, omega, V);
  CHECK(p.f(0) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(p.f(1) == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(p.h(0) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(p.h(1) == doctest::Approx(0.0).epsilon(1e-13));

  // stationarity of the closed form on random instances
  std::mt19937_64 gen(7);
  for (int t = 0; t < 50; ++t) {
    Mat Vr = random_spd(gen, 3);
    Vec yr = random_vec(gen, 3), om = random_vec(gen, 3);
    ProxResult pr = prox_loss(LossKind::Square, yr, om, Vr);
    Vec resid = Vr.ldlt().solve(pr.h - om) + loss_grad(LossKind::Square, yr, pr.h);
    CHECK(resid.norm() <= 1e-13 * (1.0 + om.norm()));
  }
}

TEST_CASE("logistic prox matches bisection oracle") {
  Vec y(1), omega(1);
  y << 1.0;
  omega << 0.0;
  Mat V(1, 1);
  V << 1.0;
  double expected = logistic_prox_bisection(1.0, 0.0, 1.0);
  CHECK(expected == doctest::Approx(0.4013).epsilon(1e-3));  // frozen from the oracle
  ProxResult p = prox_loss(LossKind::Logistic, y, omega, V);
  CHECK(p.h(0) == doctest::Approx(expected).epsilon(1e-9));

  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 200; ++t) {
    double yy = t % 2 ? 1.0 : -1.0;
    double om = 3.0 * normal(gen);
    double vv = 0.05 + std::abs(normal(gen));
    y(0) = yy;
    omega(0) = om;
    V(0, 0) = vv;
    ProxResult pr = prox_loss(LossKind::Logistic, y, omega, V);
    CHECK(pr.h(0) == doctest::Approx(logistic_prox_bisection(yy, om, vv)).epsilon(1e-8));
    CHECK(pr.residual <= 1e-10);
  }
}

TEST_CASE("cross-entropy prox: components of f sum to zero") {
  Vec y = vec2(1, 0), omega = vec2(0, 0);
  for (double v : {0.3, 1.0, 4.0}) {
    Mat V = v * Mat::Identity(2, 2);
    ProxResult p = prox_loss(LossKind::CrossEntropy, y, omega, V);
    CHECK(p.f(0) + p.f(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.f(0) > 0.0);
    CHECK(p.residual <= 1e-10);
  }
}

TEST_CASE("cross-entropy prox stationarity on random instances") {
  std::mt19937_64 gen(23);
  for (int t = 0; t < 100; ++t) {
    int K = 2 + static_cast<int>(gen() % 4);
    Mat V = random_spd(gen, K);
    Vec omega = random_vec(gen, K, 2.0);
    Vec y = Vec::Zero(K);
    y(static_cast<int>(gen() % K)) = 1.0;
    ProxResult p = prox_loss(LossKind::CrossEntropy, y, omega, V);
    Vec resid = V.ldlt().solve(p.h - omega) + loss_grad(LossKind::CrossEntropy, y, p.h);
    CHECK(resid.norm() <= 1e-9);
  }
}

TEST_CASE("logistic prox equals K=2 cross-entropy under the one-hot embedding") {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 100; ++t) {
    double om = 2.0 * normal(gen);
    double v = 0.1 + std::abs(normal(gen));
    int cls = t % 2;

    Vec yl(1), ol(1);
    yl << (cls == 0 ? 1.0 : -1.0);
    ol << om;
    Mat Vl(1, 1);
    Vl << 2.0 * v;
    double margin_logistic = prox_loss(LossKind::Logistic, yl, ol, Vl).h(0);

    Vec yc = Vec::Zero(2);
    yc(cls) = 1.0;
    ProxResult pc =
        prox_loss(LossKind::CrossEntropy, yc, vec2(om / 2, -om / 2), v * Mat::Identity(2, 2));
    CHECK(margin_logistic == doctest::Approx(pc.h(0) - pc.h(1)).epsilon(1e-8));
  }
}

TEST_CASE("firm nonexpansiveness in the V metric") {
  std::mt19937_64 gen(101);
  int trials_per_loss = 334;
  for (LossKind loss : {LossKind::Square, LossKind::CrossEntropy, LossKind::Logistic}) {
    int K = loss == LossKind::Logistic ? 1 : 3;
    for (int t = 0; t < trials_per_loss; ++t) {
      Mat V = random_spd(gen, K);
      Vec y;
      if (loss == LossKind::Logistic) {
        y = Vec(1);
        y(0) = t % 2 ? 1.0 : -1.0;
      } else {
        y = Vec::Zero(K);
        y(static_cast<int>(gen() % K)) = 1.0;
      }
      Vec o1 = random_vec(gen, K, 2.0), o2 = random_vec(gen, K, 2.0);
      Vec h1 = prox_loss(loss, y, o1, V).h;
      Vec h2 = prox_loss(loss, y, o2, V).h;
      Vec dh = h1 - h2;
      Vec Vinv_dh = V.ldlt().solve(dh);
      CHECK(dh.dot(Vinv_dh) <= Vinv_dh.dot(o1 - o2) + 1e-9);
    }
  }
}

TEST_CASE("max-margin prox: interior point gives zero") {
  Vec omega(3);
  omega << 5.0, 0.0, -1.0;  // class 0 already dominant
  Vec y = Vec::Zero(3);
  y(0) = 1.0;
  std::mt19937_64 gen(3);
  Mat V = random_spd(gen, 3);
  Vec f = prox_loss_limit_maxmargin(y, omega, V);
  CHECK(f.norm() <= 1e-12);
}

TEST_CASE("max-margin prox matches grid-search oracle at K=2") {
  auto grid_oracle = [](const Vec& omega, const Mat& V, Vec* argmin) {
    double best = 1e300;
    double c0 = 0.0, c1 = 0.0, span = 3.0;
    for (int level = 0; level < 7; ++level) {
      double step = span / 40.0;
      double nb0 = c0, nb1 = c1;
      for (int i = -40; i <= 40; ++i)
        for (int j = -40; j <= 40; ++j) {
          Vec x = vec2(c0 + i * step, c1 + j * step);
          double obj = maxmargin_objective(0, x, omega, V);
          if (obj < best) {
            best = obj;
            *argmin = x;
            nb0 = x(0);
            nb1 = x(1);
          }
        }
      c0 = nb0;
      c1 = nb1;
      span = 4.0 * step;
    }
    return best;
  };

  Vec y = vec2(1, 0);
  Mat V = Mat::Identity(2, 2);

  // tied margins: the boundary solution is the origin
  Vec f0 = prox_loss_limit_maxmargin(y, vec2(0, 0), V);
  Vec bx = vec2(0, 0);
  double best = grid_oracle(vec2(0, 0), V, &bx);
  CHECK(f0(0) == doctest::Approx(-f0(1)).epsilon(1e-10));
  CHECK(maxmargin_objective(0, f0, vec2(0, 0), V) <= best + 1e-9);
  CHECK((f0 - bx).norm() <= 2e-3);

  // misclassified omega: the margin constraint is genuinely active
  Vec omega = vec2(-1.0, 1.0);
  Vec f1 = prox_loss_limit_maxmargin(y, omega, V);
  best = grid_oracle(omega, V, &bx);
  CHECK(maxmargin_objective(0, f1, omega, V) <= best + 1e-9);
  CHECK((f1 - bx).norm() <= 2e-3);
  CHECK(f1(0) == doctest::Approx(-f1(1)).epsilon(1e-10));
  CHECK(std::abs(f1(0)) > 0.1);
}

TEST_CASE("max-margin prox agrees with annealed cross-entropy prox") {
  std::mt19937_64 gen(57);
  for (int t = 0; t < 100; ++t) {
    int K = 2 + static_cast<int>(gen() % 3);
    Mat V = random_spd(gen, K);
    Vec omega = random_vec(gen, K, 1.5);
    Vec y = Vec::Zero(K);
    int k = static_cast<int>(gen() % K);
    y(k) = 1.0;

    Vec f_limit = prox_loss_limit_maxmargin(y, omega, V);

    Vec warm = Vec::Zero(K);
    ProxResult pr;
    for (double lam = 0.25; lam >= 1e-6; lam *= 0.5) {
      double l = std::max(lam, 1e-6);
      pr = prox_loss_scaled(LossKind::CrossEntropy, y, omega, V, l, &warm);
      warm = pr.f;
      if (l == 1e-6) break;
    }
    CHECK((f_limit - pr.f).norm() <= 1e-3);
  }
}

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(2.0, 0.5) == doctest::Approx(1.5));
  CHECK(soft_threshold(0.3, 0.5) == 0.0);
  CHECK(soft_threshold(-1.0, 0.25) == doctest::Approx(-0.75));

  // scaling identity Prox_{a tau}(a x) = a Prox_tau(x), a > 0
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 1000; ++t) {
    double x = 3.0 * normal(gen), tau = std::abs(normal(gen)), a = 0.01 + std::abs(normal(gen));
    CHECK(soft_threshold(a * x, a * tau) == doctest::Approx(a * soft_threshold(x, tau)).epsilon(1e-12));
  }
}

TEST_CASE("moreau envelope: value, upper bound, vanishing smoothing") {
  Vec y = vec2(1, 0), omega = vec2(0.7, -0.3);
  Mat tiny = 1e-8 * Mat::Identity(2, 2);
  double env = moreau_envelope(LossKind::Square, y, omega, tiny);
  CHECK(env == doctest::Approx(loss_value(LossKind::Square, y, omega)).epsilon(1e-6));

  std::mt19937_64 gen(77);
  for (int t = 0; t < 100; ++t) {
    Mat V = random_spd(gen, 2);
    Vec om = random_vec(gen, 2, 2.0);
    CHECK(moreau_envelope(LossKind::CrossEntropy, y, om, V) <=
          loss_value(LossKind::CrossEntropy, y, om) + 1e-12);
  }
}

TEST_CASE("moreau envelope gradient equals -f (finite differences)") {
  std::mt19937_64 gen(123);
  const double step = 1e-5;
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    LossKind loss = t % 2 ? LossKind::CrossEntropy : LossKind::Square;
    int K = 3;
    Mat V = random_spd(gen, K);
    Vec omega = random_vec(gen, K, 1.5);
    Vec y = Vec::Zero(K);
    y(static_cast<int>(gen() % K)) = 1.0;
    Vec f = prox_loss(loss, y, omega, V).f;
    for (int i = 0; i < K; ++i) {
      Vec e = Vec::Zero(K);
      e(i) = step;
      double plus = moreau_envelope(loss, y, omega + e, V);
      double minus = moreau_envelope(loss, y, omega - e, V);
      CHECK((plus - minus) / (2 * step) == doctest::Approx(-f(i)).epsilon(1e-6));
    }
    ++checked;
  }
  CHECK(checked == 100);
}

}  // TEST_SUITE
