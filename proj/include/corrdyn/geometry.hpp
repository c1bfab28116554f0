#pragma once

#include <span>

#include <Eigen/Dense>

#include "corrdyn/corrwin.hpp"
#include "corrdyn/csv_io.hpp"

namespace corrdyn {

/// Eigen-system of a symmetric matrix. Eigenvalues descend; column a of
/// `eigenvectors` is the unit eigenvector for eigenvalues(a), signed so its
/// largest-magnitude component is positive.
struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;

  Eigen::MatrixXd reconstruct() const;
};

SpectralDecomposition spectral_decompose(const Eigen::MatrixXd& c, double symmetry_tolerance = 1e-10);

/// Largest eigenvalue of every window matrix.
DatedSeries largest_eigenvalues(const CorrelationWindowSeries& cw);

/// Relation between the largest eigenvalue and the mean correlation.
/// `ratio` is the least-squares slope of lambda_max against cbar through
/// the origin, of order K for a market-dominated spectrum.
struct KappaEstimate {
  double ratio = 0.0;
  double pearson = 0.0;
};

KappaEstimate kappa_estimate(std::span<const double> lambda_max, std::span<const double> cbar);

/// Sample Pearson correlation; throws NumericalError for a constant input.
double pearson(std::span<const double> x, std::span<const double> y);

struct PcaOptions {
  bool centered = true;   // subtract the sample mean before forming W = A A^T
  Eigen::Index components = 10;
};

/// Principal components of correlation vectors (columns of the input).
/// `variances` holds all min(d, N) eigenvalues of W / N in descending order;
/// only the leading `components` directions are materialized.
struct PcaResult {
  Eigen::MatrixXd components;   // d x m, unit columns
  Eigen::VectorXd variances;    // descending
  Eigen::MatrixXd projections;  // N x m, <c(t), v_k> on the raw vectors
  Eigen::VectorXd mean;         // zero when uncentered
  double total_variance = 0.0;  // trace of W / N
  bool centered = true;
};

PcaResult pca(const Eigen::MatrixXd& vectors, const PcaOptions& options = {});

/// Scalar product with a unit-norm direction.
double project(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::VectorXd>& component);

/// The unit vector (1, ..., 1) / sqrt(d).
Eigen::VectorXd uniform_direction(Eigen::Index d);

}  // namespace corrdyn
