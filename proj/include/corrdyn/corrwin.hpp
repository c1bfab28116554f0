#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/csv_io.hpp"
#include "corrdyn/ingest.hpp"

namespace corrdyn {

/// Number of independent off-diagonal coefficients of a k x k matrix.
constexpr Eigen::Index correlation_dimension(Eigen::Index k) noexcept { return k * (k - 1) / 2; }

/// Position of entry (i, j), i < j, in the row-major upper-triangle packing.
constexpr Eigen::Index packed_index(Eigen::Index k, Eigen::Index i, Eigen::Index j) noexcept {
  return i * k - i * (i + 1) / 2 + (j - i - 1);
}

/// Rolling Pearson correlation matrices. Only the strictly upper triangle is
/// stored: column w of `vectors` is the correlation vector of `dates[w]`, the
/// last day of its window. A full matrix is rebuilt on demand by matrix().
struct CorrelationWindowSeries {
  int window = 0;
  int step = 1;
  Eigen::Index instruments = 0;
  std::vector<std::string> dates;
  Eigen::MatrixXd vectors;  // d x N
  /// Per window, instruments whose returns were constant over the window.
  std::vector<std::vector<Eigen::Index>> degenerate;

  Eigen::Index size() const noexcept { return vectors.cols(); }
  Eigen::Index dimension() const noexcept { return vectors.rows(); }
  Eigen::MatrixXd matrix(Eigen::Index w) const;
};

/// Pearson matrices over windows of `window` days ending every `step` days.
/// Yields floor((M - window) / step) + 1 windows.
CorrelationWindowSeries rolling_correlations(const NormalizedReturns& nr, int window, int step = 1);

/// Average of the off-diagonal coefficients of every window.
DatedSeries mean_correlation(const CorrelationWindowSeries& cw);
double mean_correlation(const Eigen::MatrixXd& c);

/// Strict upper triangle in row-major order. Throws ValidationError if `c`
/// is not square, symmetric to `tolerance`, with unit diagonal.
Eigen::VectorXd flatten(const Eigen::MatrixXd& c, double tolerance = 1e-12);

/// Inverse of flatten() for a k x k matrix.
Eigen::MatrixXd unflatten(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index k);

/// Euclidean distance normalized by sqrt(d).
double distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

/// Long-format export `date,i,j,c_ij` (0-based indices, i < j).
void write_matrices(const std::filesystem::path& path, const CorrelationWindowSeries& cw);

/// Correlation vectors restricted to a subset of instruments.
Eigen::MatrixXd select_instruments(const CorrelationWindowSeries& cw,
                                   const std::vector<Eigen::Index>& subset);

}  // namespace corrdyn
