#include "corrdyn/corrwin.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "corrdyn/error.hpp"

namespace corrdyn {

namespace {

constexpr double kFlatWindowTolerance = 1e-12;

}  // namespace

Eigen::MatrixXd CorrelationWindowSeries::matrix(Eigen::Index w) const {
  return unflatten(vectors.col(w), instruments);
}

CorrelationWindowSeries rolling_correlations(const NormalizedReturns& nr, int window, int step) {
  if (window < 2) throw ConfigError(fmt::format("correlation window must be >= 2, got {}", window));
  if (step < 1) throw ConfigError(fmt::format("window step must be >= 1, got {}", step));
  const Eigen::Index m = nr.values.cols();
  const Eigen::Index k = nr.values.rows();
  if (m < window) {
    throw InsufficientDataError(
        fmt::format("correlation window {} exceeds {} normalized return days", window, m));
  }
  if (k < 2) throw InsufficientDataError("correlations need at least 2 instruments");

  const Eigen::Index count = (m - window) / step + 1;
  const Eigen::Index d = correlation_dimension(k);

  CorrelationWindowSeries cw;
  cw.window = window;
  cw.step = step;
  cw.instruments = k;
  cw.vectors.resize(d, count);
  cw.dates.reserve(static_cast<std::size_t>(count));
  cw.degenerate.resize(static_cast<std::size_t>(count));

  Eigen::MatrixXd z(k, window);
  Eigen::MatrixXd gram(k, k);
  for (Eigen::Index w = 0; w < count; ++w) {
    const Eigen::Index start = w * step;
    const Eigen::Index end = start + window - 1;
    cw.dates.push_back(nr.dates[static_cast<std::size_t>(end)]);

    z = nr.values.middleCols(start, window);
    z.colwise() -= z.rowwise().mean();
    for (Eigen::Index i = 0; i < k; ++i) {
      const double norm = z.row(i).norm();
      const double scale = nr.values.row(i).segment(start, window).cwiseAbs().maxCoeff();
      // norm / sqrt(T) is sigma_i, so the threshold matches the ingest rule.
      if (!(norm > kFlatWindowTolerance * scale * std::sqrt(static_cast<double>(window)))) {
        z.row(i).setZero();
        cw.degenerate[static_cast<std::size_t>(w)].push_back(i);
      } else {
        z.row(i) /= norm;
      }
    }
    gram.setZero();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(z);

    auto out = cw.vectors.col(w);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i + 1; j < k; ++j) {
        out(packed_index(k, i, j)) = std::clamp(gram(j, i), -1.0, 1.0);
      }
    }
  }
  return cw;
}

DatedSeries mean_correlation(const CorrelationWindowSeries& cw) {
  if (cw.size() == 0) throw InsufficientDataError("mean correlation of an empty series");
  DatedSeries out;
  out.dates = cw.dates;
  out.values.resize(static_cast<std::size_t>(cw.size()));
  for (Eigen::Index w = 0; w < cw.size(); ++w) {
    out.values[static_cast<std::size_t>(w)] = cw.vectors.col(w).mean();
  }
  return out;
}

double mean_correlation(const Eigen::MatrixXd& c) { return flatten(c).mean(); }

Eigen::VectorXd flatten(const Eigen::MatrixXd& c, double tolerance) {
  const Eigen::Index k = c.rows();
  if (c.cols() != k) throw ValidationError(fmt::format("matrix is {}x{}, not square", c.rows(), c.cols()));
  if (k < 2) throw ValidationError("correlation matrix needs at least 2 rows");
  Eigen::VectorXd v(correlation_dimension(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(c(i, i) - 1.0) > tolerance) {
      throw ValidationError(fmt::format("diagonal entry ({0},{0}) = {1} is not 1", i, c(i, i)));
    }
    for (Eigen::Index j = i + 1; j < k; ++j) {
      if (std::abs(c(i, j) - c(j, i)) > tolerance) {
        throw ValidationError(fmt::format("asymmetric entries ({0},{1})={2} and ({1},{0})={3}", i, j,
                                          c(i, j), c(j, i)));
      }
      v(packed_index(k, i, j)) = c(i, j);
    }
  }
  return v;
}

Eigen::MatrixXd unflatten(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index k) {
  if (v.size() != correlation_dimension(k)) {
    throw DimensionError(fmt::format("vector of length {} does not pack a {}x{} matrix", v.size(), k, k));
  }
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      c(i, j) = c(j, i) = v(packed_index(k, i, j));
    }
  }
  return c;
}

double distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw DimensionError(fmt::format("lengths {} and {}", a.size(), b.size()));
  if (a.size() == 0) throw DimensionError("empty vectors");
  return (a - b).norm() / std::sqrt(static_cast<double>(a.size()));
}

void write_matrices(const std::filesystem::path& path, const CorrelationWindowSeries& cw) {
  csv::Writer w(path);
  w.line("date,i,j,c_ij");
  const Eigen::Index k = cw.instruments;
  for (Eigen::Index t = 0; t < cw.size(); ++t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i + 1; j < k; ++j) {
        w.row("{},{},{},{}", cw.dates[static_cast<std::size_t>(t)], i, j,
              cw.vectors(packed_index(k, i, j), t));
      }
    }
  }
}

Eigen::MatrixXd select_instruments(const CorrelationWindowSeries& cw,
                                   const std::vector<Eigen::Index>& subset) {
  std::vector<Eigen::Index> sorted = subset;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.size() < 2 ||
      sorted.front() < 0 || sorted.back() >= cw.instruments) {
    throw ConfigError("instrument subset must hold at least 2 distinct valid indices");
  }
  const auto sub_k = static_cast<Eigen::Index>(sorted.size());
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(correlation_dimension(sub_k)));
  for (Eigen::Index a = 0; a < sub_k; ++a) {
    for (Eigen::Index b = a + 1; b < sub_k; ++b) {
      rows.push_back(packed_index(cw.instruments, sorted[static_cast<std::size_t>(a)],
                                  sorted[static_cast<std::size_t>(b)]));
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), cw.size());
  for (Eigen::Index t = 0; t < cw.size(); ++t) {
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r), t) = cw.vectors(rows[r], t);
  }
  return out;
}

}  // namespace corrdyn
