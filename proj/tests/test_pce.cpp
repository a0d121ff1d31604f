#include "snmpc/pce.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace snmpc;

namespace {

// Independent CDF inversion by bisection on erfc; oracle for the
// rational-approximation path.
double inverse_cdf_oracle(double u) {
  if (u > 0.5) return -inverse_cdf_oracle(1.0 - u);  // erfc cancels near 1
  double lo = -12.0, hi = 12.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
    (cdf < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double radical_inverse_oracle(int base, int k) {
  double f = 1.0 / base, r = 0.0;
  while (k > 0) {
    r += (k % base) * f;
    k /= base;
    f /= base;
  }
  return r;
}

}  // namespace

TEST_CASE("multi-index generation") {
  const auto set = pce::generate_multi_indices(3, 2);
  CHECK(set.size() == 10);  // (3+2)!/(3!2!)
  CHECK(set.indices[0] == std::vector<int>{0, 0, 0});
  // graded lexicographic order
  CHECK(set.indices[1] == std::vector<int>{1, 0, 0});
  CHECK(set.indices[2] == std::vector<int>{0, 1, 0});
  CHECK(set.indices[3] == std::vector<int>{0, 0, 1});
  CHECK(set.indices[4] == std::vector<int>{2, 0, 0});
  CHECK(set.indices[9] == std::vector<int>{0, 0, 2});
  for (const auto& alpha : set.indices) {
    int total = 0;
    for (int d : alpha) total += d;
    CHECK(total <= 2);
  }

  const auto constant = pce::generate_multi_indices(1, 0);
  CHECK(constant.size() == 1);
  CHECK(constant.indices[0] == std::vector<int>{0});

  CHECK(pce::generate_multi_indices(2, 3).size() == 10);  // (2+3)!/(2!3!)

  CHECK_THROWS_AS(pce::generate_multi_indices(0, 2), std::invalid_argument);
  CHECK_THROWS_AS(pce::generate_multi_indices(40, 40), std::invalid_argument);
}

TEST_CASE("orthonormal Hermite values") {
  CHECK(pce::hermite_orthonormal(0, 7.3) == 1.0);
  // (x^2 - 1)/sqrt(2) at x = 1
  CHECK(pce::hermite_orthonormal(2, 1.0) == doctest::Approx(0.0));
  CHECK(pce::hermite_orthonormal(3, 0.0) == doctest::Approx(0.0));
  CHECK(pce::hermite_orthonormal(1, 2.5) == doctest::Approx(2.5));
  CHECK(pce::hermite_orthonormal(2, 2.0) ==
        doctest::Approx(3.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("Hermite orthonormality by Monte Carlo") {
  // Stratified standard-normal draws; plain sampling would need ~60M
  // draws for the degree-4 moment to settle inside the +-1% band.
  std::mt19937_64 rng(20240901);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  constexpr int kDraws = 1'000'000;
  Eigen::Matrix<double, 5, 5> second_moments = Eigen::Matrix<double, 5, 5>::Zero();
  for (int i = 0; i < kDraws; ++i) {
    const double u = (i + jitter(rng)) / kDraws;
    const double w = pce::inverse_normal_cdf(std::clamp(u, 1e-15, 1.0 - 1e-15));
    Eigen::Matrix<double, 5, 1> psi;
    for (int d = 0; d <= 4; ++d) psi(d) = pce::hermite_orthonormal(d, w);
    second_moments += psi * psi.transpose();
  }
  second_moments /= kDraws;
  for (int d = 0; d <= 4; ++d) {
    CHECK(second_moments(d, d) > 0.99);
    CHECK(second_moments(d, d) < 1.01);
    for (int e = 0; e <= 4; ++e) {
      if (d != e) CHECK(std::abs(second_moments(d, e)) < 0.01);
    }
  }
}

TEST_CASE("multivariate basis evaluation") {
  const auto set = pce::generate_multi_indices(2, 2);
  const Eigen::VectorXd at_zero = pce::eval_multivariate_basis(set, Eigen::Vector2d(0, 0));
  CHECK(at_zero(0) == 1.0);
  for (int k = 0; k < set.size(); ++k) {
    int total = 0;
    bool odd = false;
    for (int d : set.indices[k]) {
      total += d;
      odd = odd || (d % 2 == 1);
    }
    if (odd) CHECK(at_zero(k) == doctest::Approx(0.0));
  }

  const auto uni = pce::generate_multi_indices(1, 2);
  Eigen::VectorXd w1(1);
  w1 << 1.0;
  const Eigen::VectorXd vals = pce::eval_multivariate_basis(uni, w1);
  CHECK(vals(0) == doctest::Approx(1.0));
  CHECK(vals(1) == doctest::Approx(1.0));
  CHECK(vals(2) == doctest::Approx(0.0));

  const auto lin = pce::generate_multi_indices(2, 1);
  const Eigen::VectorXd ab = pce::eval_multivariate_basis(lin, Eigen::Vector2d(0.3, -0.7));
  CHECK(ab(0) == doctest::Approx(1.0));
  CHECK(ab(1) == doctest::Approx(0.3));
  CHECK(ab(2) == doctest::Approx(-0.7));

  CHECK_THROWS_AS(pce::eval_multivariate_basis(lin, w1), std::invalid_argument);
}

TEST_CASE("inverse normal CDF accuracy") {
  for (double u : {1e-9, 1e-6, 0.02, 0.2, 0.5, 0.77, 0.999, 1.0 - 1e-7, 1.0 - 1e-9}) {
    const double z = pce::inverse_normal_cdf(u);
    CHECK(std::abs(z - inverse_cdf_oracle(u)) < 1e-9);
    const double back = 0.5 * std::erfc(-z / std::sqrt(2.0));
    CHECK(std::abs(back - u) < 1e-12);
  }
  CHECK_THROWS_AS(pce::inverse_normal_cdf(0.0), std::invalid_argument);
  CHECK_THROWS_AS(pce::inverse_normal_cdf(1.0), std::invalid_argument);
}

TEST_CASE("Hammersley Gaussian samples") {
  Eigen::VectorXd sigma1(1);
  sigma1 << 1.0;
  // n_s = 1: the midpoint u = 0.5 maps to the origin.
  const Eigen::MatrixXd single = pce::hammersley_gaussian_samples(1, 1, sigma1);
  CHECK(single(0, 0) == doctest::Approx(0.0));

  // Symmetric midpoints: the empirical mean vanishes (well inside 0.2 sigma).
  const Eigen::MatrixXd ten = pce::hammersley_gaussian_samples(10, 1, sigma1);
  CHECK(std::abs(ten.col(0).mean()) < 1e-12);

  // Against the independent construction oracle.
  const int primes[] = {2, 3};
  Eigen::Vector3d sigma(0.8, 0.35, 0.035);
  const Eigen::MatrixXd samples = pce::hammersley_gaussian_samples(10, 3, sigma);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 3; ++j) {
      double u = j == 0 ? (i + 0.5) / 10.0 : radical_inverse_oracle(primes[j - 1], i + 1);
      u = std::clamp(u, 1e-9, 1.0 - 1e-9);
      CHECK(samples(i, j) == doctest::Approx(sigma(j) * inverse_cdf_oracle(u)).epsilon(1e-9));
    }
  }

  // Column standard deviations stay within 35% of sigma.
  for (int j = 0; j < 3; ++j) {
    const double mean = samples.col(j).mean();
    const double var = (samples.col(j).array() - mean).square().mean();
    const double ratio = std::sqrt(var) / sigma(j);
    CHECK(ratio > 0.65);
    CHECK(ratio < 1.35);
  }

  // Scaling sigma scales every coordinate exactly.
  const Eigen::MatrixXd doubled = pce::hammersley_gaussian_samples(10, 3, 2.0 * sigma);
  CHECK((doubled - 2.0 * samples).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  Eigen::Vector3d bad(0.8, 0.0, 0.035);
  CHECK_THROWS_AS(pce::hammersley_gaussian_samples(10, 3, bad), std::invalid_argument);
}

TEST_CASE("collocation regression matrix") {
  const auto indices = pce::generate_multi_indices(3, 2);
  const Eigen::Vector3d sigma(0.8, 0.35, 0.035);
  const auto colloc = pce::build_collocation(sigma, 10, indices);

  // n_s = L = 10: A is the exact inverse of Phi.
  const Eigen::MatrixXd identity_err =
      colloc.regression_A * colloc.basis_Phi - Eigen::MatrixXd::Identity(10, 10);
  CHECK(identity_err.cwiseAbs().maxCoeff() < 1e-8);

  // Constant-only basis: regression is the sample mean.
  Eigen::VectorXd s1(1);
  s1 << 0.5;
  const auto constant = pce::build_collocation(s1, 6, pce::generate_multi_indices(1, 0));
  for (int i = 0; i < 6; ++i) {
    CHECK(constant.regression_A(0, i) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(pce::build_collocation(sigma, 9, indices), std::invalid_argument);
}

TEST_CASE("duplicated samples leave the regression unchanged") {
  const auto indices = pce::generate_multi_indices(2, 2);
  const Eigen::Vector2d sigma(0.5, 0.25);
  const Eigen::MatrixXd base = pce::hammersley_gaussian_samples(8, 2, sigma);
  Eigen::MatrixXd doubled(16, 2);
  doubled << base, base;

  const auto c1 = pce::build_collocation(sigma, base, indices);
  const auto c2 = pce::build_collocation(sigma, doubled, indices);

  Eigen::MatrixXd values1(8, 1), values2(16, 1);
  for (int i = 0; i < 8; ++i) {
    const double g = std::sin(base(i, 0)) + base(i, 1) * base(i, 1);
    values1(i, 0) = g;
    values2(i, 0) = g;
    values2(i + 8, 0) = g;
  }
  const auto m1 = pce::regress_moments(c1, values1);
  const auto m2 = pce::regress_moments(c2, values2);
  CHECK((m1.coefficients.C - m2.coefficients.C).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("moment regression") {
  const auto indices = pce::generate_multi_indices(3, 2);
  const Eigen::Vector3d sigma(0.8, 0.35, 0.035);
  const auto colloc = pce::build_collocation(sigma, 10, indices);

  SUBCASE("constant map") {
    const Eigen::MatrixXd values = Eigen::MatrixXd::Constant(10, 2, 3.25);
    const auto m = pce::regress_moments(colloc, values);
    CHECK(m.expectation(0) == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(m.expectation(1) == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(m.variance(0) == doctest::Approx(0.0));
    CHECK(m.variance(1) == doctest::Approx(0.0));
  }

  SUBCASE("quadratic map: E[w^2] = sigma^2, Var[w^2] = 2 sigma^4") {
    const Eigen::MatrixXd values = colloc.samples_W.col(0).array().square().matrix();
    const auto m = pce::regress_moments(colloc, values);
    CHECK(m.expectation(0) == doctest::Approx(0.64).epsilon(1e-9));
    CHECK(m.variance(0) == doctest::Approx(0.8192).epsilon(1e-9));
  }

  SUBCASE("identity map") {
    Eigen::VectorXd s1(1);
    s1 << 1.0;
    const auto c = pce::build_collocation(s1, 10, pce::generate_multi_indices(1, 2));
    const auto m = pce::regress_moments(c, c.samples_W.col(0));
    CHECK(std::abs(m.expectation(0)) < 1e-9);
    CHECK(m.variance(0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(pce::regress_moments(colloc, Eigen::MatrixXd::Zero(9, 1)),
                    std::invalid_argument);
  }
}

TEST_CASE("polynomial exactness for quadratic maps") {
  const auto indices = pce::generate_multi_indices(3, 2);
  const Eigen::Vector3d sigma(0.8, 0.35, 0.035);
  const auto colloc = pce::build_collocation(sigma, 10, indices);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double c0 = coeff(rng);
    Eigen::Vector3d lin, quad;
    Eigen::Vector3d cross;  // w0w1, w0w2, w1w2
    for (int i = 0; i < 3; ++i) {
      lin(i) = coeff(rng);
      quad(i) = coeff(rng);
      cross(i) = coeff(rng);
    }
    Eigen::VectorXd values(10);
    for (int s = 0; s < 10; ++s) {
      const Eigen::Vector3d w = colloc.samples_W.row(s).transpose();
      values(s) = c0 + lin.dot(w) + quad(0) * w(0) * w(0) + quad(1) * w(1) * w(1) +
                  quad(2) * w(2) * w(2) + cross(0) * w(0) * w(1) +
                  cross(1) * w(0) * w(2) + cross(2) * w(1) * w(2);
    }
    const auto m = pce::regress_moments(colloc, values);

    double mean = c0;
    double var = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double s2 = sigma(i) * sigma(i);
      mean += quad(i) * s2;
      var += lin(i) * lin(i) * s2 + 2.0 * quad(i) * quad(i) * s2 * s2;
    }
    var += cross(0) * cross(0) * sigma(0) * sigma(0) * sigma(1) * sigma(1);
    var += cross(1) * cross(1) * sigma(0) * sigma(0) * sigma(2) * sigma(2);
    var += cross(2) * cross(2) * sigma(1) * sigma(1) * sigma(2) * sigma(2);

    CHECK(m.expectation(0) == doctest::Approx(mean).epsilon(1e-8));
    CHECK(m.variance(0) == doctest::Approx(var).epsilon(1e-8));
  }
}

TEST_CASE("regression commutes with linear maps") {
  const auto indices = pce::generate_multi_indices(3, 2);
  const Eigen::Vector3d sigma(0.8, 0.35, 0.035);
  const auto colloc = pce::build_collocation(sigma, 10, indices);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  Eigen::Matrix3d map;
  for (int i = 0; i < 9; ++i) map(i / 3, i % 3) = coeff(rng);

  const auto direct = pce::regress_moments(colloc, colloc.samples_W * map.transpose());
  const auto plain = pce::regress_moments(colloc, colloc.samples_W);
  const Eigen::Vector3d mapped = map * plain.expectation;
  CHECK((direct.expectation - mapped).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("determinism of the collocation build") {
  const auto indices = pce::generate_multi_indices(3, 2);
  const Eigen::Vector3d sigma(0.8, 0.35, 0.035);
  const auto a = pce::build_collocation(sigma, 12, indices);
  const auto b = pce::build_collocation(sigma, 12, indices);
  CHECK((a.samples_W - b.samples_W).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.basis_Phi - b.basis_Phi).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.regression_A - b.regression_A).cwiseAbs().maxCoeff() == 0.0);
}
