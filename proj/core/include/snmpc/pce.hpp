#pragma once

#include <Eigen/Dense>

#include <vector>

namespace snmpc::pce {

/// Set of multi-indices alpha_k in N^{n_w} with total degree <= d_max,
/// ordered graded-lexicographically. Index 0 is the constant term.
struct MultiIndexSet {
  int n_w = 0;
  int d_max = 0;
  std::vector<std::vector<int>> indices;

  int size() const { return static_cast<int>(indices.size()); }
};

/// All multi-indices with total degree <= d_max. The count equals
/// (n_w + d_max)! / (n_w! d_max!). Throws if n_w < 1 or the count
/// would exceed 1e6.
MultiIndexSet generate_multi_indices(int n_w, int d_max);

/// Probabilists' Hermite polynomial of the given degree, normalized by
/// 1/sqrt(degree!) so that E[psi_d(w)^2] = 1 for standard-normal w.
double hermite_orthonormal(int degree, double x);

/// Inverse CDF of the standard normal distribution, u in (0, 1).
/// Rational approximation followed by one Halley refinement step.
double inverse_normal_cdf(double u);

/// Component k is the product of univariate orthonormal Hermite
/// polynomials of degrees alpha_{i,k} at w_i. `w` must already be
/// standardized (divided by its per-dimension sigma).
Eigen::VectorXd eval_multivariate_basis(const MultiIndexSet& indices,
                                        const Eigen::VectorXd& w);

/// Deterministic Gaussian low-discrepancy samples: Hammersley points in
/// [0,1)^{n_w} (midpoint rule (i+0.5)/n_s in the first coordinate,
/// radical inverse of i+1 in successive prime bases for the rest),
/// clamped into [1e-9, 1-1e-9], mapped through the inverse normal CDF
/// and scaled per coordinate by sigma_w.
Eigen::MatrixXd hammersley_gaussian_samples(int n_s, int n_w,
                                            const Eigen::VectorXd& sigma_w);

/// Collocation data for least-squares PCE regression: disturbance
/// samples, the basis matrix evaluated at the standardized samples, and
/// the regression matrix A = (Phi^T Phi)^{-1} Phi^T.
struct CollocationSet {
  MultiIndexSet indices;
  Eigen::VectorXd sigma_w;
  Eigen::MatrixXd samples_W;     // n_s x n_w
  Eigen::MatrixXd basis_Phi;     // n_s x L
  Eigen::MatrixXd regression_A;  // L x n_s

  int n_samples() const { return static_cast<int>(samples_W.rows()); }
  int n_terms() const { return indices.size(); }
};

/// Builds the collocation set from Hammersley samples. Requires
/// n_s >= L; the regression matrix comes from a column-pivoted QR of
/// Phi, and rank deficiency is reported with condition diagnostics.
CollocationSet build_collocation(const Eigen::VectorXd& sigma_w, int n_s,
                                 const MultiIndexSet& indices);

/// Same, but with caller-provided samples (rows are disturbance
/// realizations in physical units).
CollocationSet build_collocation(const Eigen::VectorXd& sigma_w,
                                 const Eigen::MatrixXd& samples,
                                 const MultiIndexSet& indices);

struct PceCoefficients {
  Eigen::MatrixXd C;  // L x n_dim, row 0 = expectation per dimension
};

struct Moments {
  Eigen::VectorXd expectation;
  Eigen::VectorXd variance;
  PceCoefficients coefficients;
};

/// Regresses per-sample map outputs (row i = output at sample i) onto
/// the basis. Expectation is coefficient row 0; with the orthonormal
/// basis the variance is the sum of squared higher coefficients.
Moments regress_moments(const CollocationSet& colloc,
                        const Eigen::MatrixXd& values);

}  // namespace snmpc::pce
