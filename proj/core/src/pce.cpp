#include "snmpc/pce.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>

namespace snmpc::pce {

namespace {

// Number of multi-indices with total degree <= d in n variables,
// C(n + d, n), with an early bail-out above the sizing limit.
std::int64_t truncated_basis_size(int n_w, int d_max) {
  std::int64_t l = 1;
  for (int i = 1; i <= d_max; ++i) {
    l = l * (n_w + i) / i;  // exact: product of consecutive binomials
    if (l > 2'000'000) return l;
  }
  return l;
}

void emit_indices(int dim, int remaining, std::vector<int>& current,
                  std::vector<std::vector<int>>& out) {
  if (dim == static_cast<int>(current.size()) - 1) {
    current[dim] = remaining;
    out.push_back(current);
    return;
  }
  for (int d = remaining; d >= 0; --d) {
    current[dim] = d;
    emit_indices(dim + 1, remaining - d, current, out);
  }
}

double radical_inverse(int base, int k) {
  const double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (k > 0) {
    r += (k % base) * f;
    k /= base;
    f *= inv;
  }
  return r;
}

int nth_prime(int n) {
  static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                               31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  if (n < 20) return primes[n];
  int candidate = 73;
  int found = 20;
  while (true) {
    bool prime = true;
    for (int p = 2; p * p <= candidate; ++p) {
      if (candidate % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) {
      if (found == n) return candidate;
      ++found;
    }
    candidate += 2;
  }
}

}  // namespace

MultiIndexSet generate_multi_indices(int n_w, int d_max) {
  if (n_w < 1) throw std::invalid_argument("generate_multi_indices: n_w must be >= 1");
  if (d_max < 0) throw std::invalid_argument("generate_multi_indices: d_max must be >= 0");
  const std::int64_t l = truncated_basis_size(n_w, d_max);
  if (l > 1'000'000) {
    std::ostringstream msg;
    msg << "generate_multi_indices: basis size " << l << " exceeds the 1e6 limit"
        << " (n_w=" << n_w << ", d_max=" << d_max << ")";
    throw std::invalid_argument(msg.str());
  }

  MultiIndexSet set;
  set.n_w = n_w;
  set.d_max = d_max;
  set.indices.reserve(static_cast<std::size_t>(l));
  std::vector<int> current(static_cast<std::size_t>(n_w), 0);
  // Graded order: degree class by class; within a class the recursion
  // assigns leading coordinates first, i.e. lexicographically descending.
  for (int degree = 0; degree <= d_max; ++degree) {
    emit_indices(0, degree, current, set.indices);
  }
  return set;
}

double hermite_orthonormal(int degree, double x) {
  if (degree < 0) throw std::invalid_argument("hermite_orthonormal: negative degree");
  if (degree == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < degree; ++k) {
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                        std::sqrt(static_cast<double>(k + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

double inverse_normal_cdf(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("inverse_normal_cdf: u must lie in (0, 1)");
  }
  // Work in the lower tail; erfc cancels catastrophically near 1.
  // (1 - u is exact for u >= 0.5.)
  if (u > 0.5) return -inverse_normal_cdf(1.0 - u);
  // Acklam's rational approximation, |relative error| < 1.2e-9.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (u < p_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - p_low) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the exact CDF expressed via erfc.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - u;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double delta = e / pdf;
  x -= delta / (1.0 + 0.5 * x * delta);
  return x;
}

Eigen::VectorXd eval_multivariate_basis(const MultiIndexSet& indices,
                                        const Eigen::VectorXd& w) {
  if (w.size() != indices.n_w) {
    throw std::invalid_argument("eval_multivariate_basis: dimension mismatch");
  }
  // Univariate values per (dimension, degree) once, products per index.
  Eigen::MatrixXd uni(indices.n_w, indices.d_max + 1);
  for (int i = 0; i < indices.n_w; ++i) {
    for (int d = 0; d <= indices.d_max; ++d) {
      uni(i, d) = hermite_orthonormal(d, w(i));
    }
  }
  Eigen::VectorXd out(indices.size());
  for (int k = 0; k < indices.size(); ++k) {
    double prod = 1.0;
    for (int i = 0; i < indices.n_w; ++i) {
      prod *= uni(i, indices.indices[k][i]);
    }
    out(k) = prod;
  }
  return out;
}

Eigen::MatrixXd hammersley_gaussian_samples(int n_s, int n_w,
                                            const Eigen::VectorXd& sigma_w) {
  if (n_s < 1) throw std::invalid_argument("hammersley_gaussian_samples: n_s must be >= 1");
  if (n_w < 1) throw std::invalid_argument("hammersley_gaussian_samples: n_w must be >= 1");
  if (sigma_w.size() != n_w) {
    throw std::invalid_argument("hammersley_gaussian_samples: sigma_w size mismatch");
  }
  for (int j = 0; j < n_w; ++j) {
    if (!(sigma_w(j) > 0.0)) {
      throw std::invalid_argument("hammersley_gaussian_samples: sigma_w must be positive");
    }
  }
  constexpr double kEps = 1e-9;
  Eigen::MatrixXd samples(n_s, n_w);
  for (int i = 0; i < n_s; ++i) {
    for (int j = 0; j < n_w; ++j) {
      double u = (j == 0) ? (i + 0.5) / n_s : radical_inverse(nth_prime(j - 1), i + 1);
      u = std::clamp(u, kEps, 1.0 - kEps);
      samples(i, j) = sigma_w(j) * inverse_normal_cdf(u);
    }
  }
  return samples;
}

CollocationSet build_collocation(const Eigen::VectorXd& sigma_w, int n_s,
                                 const MultiIndexSet& indices) {
  return build_collocation(
      sigma_w, hammersley_gaussian_samples(n_s, indices.n_w, sigma_w), indices);
}

CollocationSet build_collocation(const Eigen::VectorXd& sigma_w,
                                 const Eigen::MatrixXd& samples,
                                 const MultiIndexSet& indices) {
  const int l = indices.size();
  const int n_s = static_cast<int>(samples.rows());
  if (samples.cols() != indices.n_w) {
    throw std::invalid_argument("build_collocation: samples/index dimension mismatch");
  }
  if (n_s < l) {
    std::ostringstream msg;
    msg << "build_collocation: n_s=" << n_s << " < L=" << l
        << "; the regression would be under-determined";
    throw std::invalid_argument(msg.str());
  }

  CollocationSet colloc;
  colloc.indices = indices;
  colloc.sigma_w = sigma_w;
  colloc.samples_W = samples;
  colloc.basis_Phi.resize(n_s, l);
  for (int i = 0; i < n_s; ++i) {
    const Eigen::VectorXd w_std =
        samples.row(i).transpose().cwiseQuotient(sigma_w);
    colloc.basis_Phi.row(i) = eval_multivariate_basis(indices, w_std).transpose();
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(colloc.basis_Phi);
  if (qr.rank() < l) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(colloc.basis_Phi);
    std::ostringstream msg;
    msg << "build_collocation: basis matrix is rank-deficient (rank " << qr.rank()
        << " of " << l << ", condition number "
        << svd.singularValues()(0) / svd.singularValues()(l - 1) << ")";
    throw std::runtime_error(msg.str());
  }
  colloc.regression_A = qr.solve(Eigen::MatrixXd::Identity(n_s, n_s));
  return colloc;
}

Moments regress_moments(const CollocationSet& colloc,
                        const Eigen::MatrixXd& values) {
  if (values.rows() != colloc.n_samples()) {
    throw std::invalid_argument("regress_moments: values row count must equal n_s");
  }
  Moments m;
  m.coefficients.C = colloc.regression_A * values;
  m.expectation = m.coefficients.C.row(0).transpose();
  const int l = colloc.n_terms();
  m.variance = m.coefficients.C.bottomRows(l - 1).colwise().squaredNorm().transpose();
  return m;
}

}  // namespace snmpc::pce
