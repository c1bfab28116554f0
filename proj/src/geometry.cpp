#include "corrdyn/geometry.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "corrdyn/error.hpp"

namespace corrdyn {

namespace {

// Flip each column so that its largest-magnitude entry is positive.
void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index a = 0; a < vectors.cols(); ++a) {
    Eigen::Index arg = 0;
    vectors.col(a).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, a) < 0.0) vectors.col(a) *= -1.0;
  }
}

void check_symmetric(const Eigen::MatrixXd& c, double tolerance) {
  if (c.rows() != c.cols() || c.rows() == 0) {
    throw ValidationError(fmt::format("matrix is {}x{}, not square", c.rows(), c.cols()));
  }
  const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
  if (asym > tolerance) throw ValidationError(fmt::format("matrix asymmetric by {}", asym));
}

}  // namespace

Eigen::MatrixXd SpectralDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

SpectralDecomposition spectral_decompose(const Eigen::MatrixXd& c, double symmetry_tolerance) {
  check_symmetric(c, symmetry_tolerance);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c);
  if (solver.info() != Eigen::Success) throw NumericalError("eigen-decomposition did not converge");
  SpectralDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  fix_signs(out.eigenvectors);
  return out;
}

DatedSeries largest_eigenvalues(const CorrelationWindowSeries& cw) {
  DatedSeries out;
  out.dates = cw.dates;
  out.values.resize(static_cast<std::size_t>(cw.size()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cw.instruments);
  for (Eigen::Index w = 0; w < cw.size(); ++w) {
    solver.compute(cw.matrix(w), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      throw NumericalError(fmt::format("eigenvalues of window {} did not converge", cw.dates[static_cast<std::size_t>(w)]));
    }
    out.values[static_cast<std::size_t>(w)] = solver.eigenvalues()(cw.instruments - 1);
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError(fmt::format("series lengths {} and {}", x.size(), y.size()));
  if (x.size() < 2) throw InsufficientDataError("correlation needs at least 2 points");
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::VectorXd xc = xv.array() - xv.mean();
  const Eigen::VectorXd yc = yv.array() - yv.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericalError("correlation undefined for a constant series");
  return xc.dot(yc) / std::sqrt(sxx * syy);
}

KappaEstimate kappa_estimate(std::span<const double> lambda_max, std::span<const double> cbar) {
  KappaEstimate out;
  out.pearson = pearson(lambda_max, cbar);
  const auto n = static_cast<Eigen::Index>(cbar.size());
  const Eigen::Map<const Eigen::VectorXd> l(lambda_max.data(), n);
  const Eigen::Map<const Eigen::VectorXd> c(cbar.data(), n);
  out.ratio = l.dot(c) / c.squaredNorm();
  return out;
}

PcaResult pca(const Eigen::MatrixXd& vectors, const PcaOptions& options) {
  const Eigen::Index d = vectors.rows();
  const Eigen::Index n = vectors.cols();
  if (n < 2) throw InsufficientDataError(fmt::format("PCA needs at least 2 samples, got {}", n));
  if (d < 1) throw DimensionError("PCA on zero-dimensional vectors");
  if (options.components < 1) throw ConfigError("PCA needs at least one component");

  PcaResult out;
  out.centered = options.centered;
  out.mean = options.centered ? Eigen::VectorXd(vectors.rowwise().mean()) : Eigen::VectorXd::Zero(d);
  const Eigen::MatrixXd a = vectors.colwise() - out.mean;
  const double scale = 1.0 / static_cast<double>(n);
  const Eigen::Index rank = std::min(d, n);
  const Eigen::Index m = std::min(options.components, rank);

  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd leading(d, m);
  if (d <= n) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
    w.selfadjointView<Eigen::Lower>().rankUpdate(a, scale);
    w.triangularView<Eigen::StrictlyUpper>() = w.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w);
    if (solver.info() != Eigen::Success) throw NumericalError("PCA eigen-decomposition did not converge");
    eigenvalues = solver.eigenvalues().reverse();
    leading = solver.eigenvectors().rightCols(m).rowwise().reverse();
  } else {
    // d > N: diagonalize the N x N Gram matrix and map eigenvectors back.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    g.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), scale);
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g);
    if (solver.info() != Eigen::Success) throw NumericalError("PCA eigen-decomposition did not converge");
    eigenvalues = solver.eigenvalues().reverse();
    const Eigen::MatrixXd u = solver.eigenvectors().rightCols(m).rowwise().reverse();
    leading = a * u;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double norm = leading.col(k).norm();
      if (norm > 0.0) leading.col(k) /= norm;
    }
  }
  out.variances = eigenvalues.cwiseMax(0.0);
  fix_signs(leading);
  out.components = std::move(leading);
  out.total_variance = a.squaredNorm() * scale;
  out.projections = vectors.transpose() * out.components;
  return out;
}

double project(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::VectorXd>& component) {
  if (v.size() != component.size()) {
    throw DimensionError(fmt::format("vector length {} vs component length {}", v.size(), component.size()));
  }
  if (std::abs(component.norm() - 1.0) > 1e-8) {
    throw ValidationError(fmt::format("component norm {} is not 1", component.norm()));
  }
  return v.dot(component);
}

Eigen::VectorXd uniform_direction(Eigen::Index d) {
  return Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
}

}  // namespace corrdyn
