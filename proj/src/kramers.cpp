#include "corrdyn/kramers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace corrdyn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Binning {
  std::vector<std::vector<std::size_t>> members;
  std::vector<double> centers;
  std::vector<double> lower;
  std::vector<double> upper;
};

void check_options(std::span<const double> series, const MomentOptions& options) {
  if (options.bins < 1) throw ConfigError(fmt::format("bin count must be >= 1, got {}", options.bins));
  if (options.taus.empty()) throw ConfigError("tau list is empty");
  for (std::size_t i = 0; i < options.taus.size(); ++i) {
    if (options.taus[i] < 1 || (i > 0 && options.taus[i] <= options.taus[i - 1])) {
      throw ConfigError("taus must be strictly ascending integers >= 1");
    }
  }
  if (options.mask && options.mask->size() != series.size()) {
    throw DimensionError(fmt::format("mask covers {} days, series {}", options.mask->size(), series.size()));
  }
}

bool admitted(const MomentOptions& options, std::size_t n, std::size_t t, std::size_t tau) {
  if (options.mask) return options.mask->admits(t, tau);
  return t + tau < n;
}

Binning make_bins(std::span<const double> series, const MomentOptions& options) {
  const std::size_t n = series.size();
  const auto tau0 = static_cast<std::size_t>(options.taus.front());
  std::vector<std::size_t> points;
  for (std::size_t t = 0; t < n; ++t) {
    if (admitted(options, n, t, tau0)) points.push_back(t);
  }
  const auto bins = static_cast<std::size_t>(options.bins);
  const std::size_t needed = bins * static_cast<std::size_t>(std::max(1, options.min_occupancy));
  if (points.size() < needed) {
    throw InsufficientDataError(fmt::format("{} conditioning points for {} bins (need {})", points.size(), bins, needed));
  }
  std::stable_sort(points.begin(), points.end(), [&](std::size_t a, std::size_t b) { return series[a] < series[b]; });

  Binning out;
  const std::size_t base = points.size() / bins;
  const std::size_t extra = points.size() % bins;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    std::vector<std::size_t> members(points.begin() + static_cast<std::ptrdiff_t>(pos),
                                     points.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
    double sum = 0.0;
    for (const auto t : members) sum += series[t];
    out.centers.push_back(sum / static_cast<double>(size));
    out.lower.push_back(series[members.front()]);
    out.upper.push_back(series[members.back()]);
    out.members.push_back(std::move(members));
  }
  return out;
}

MomentTable moments(std::span<const double> series, const Binning& binning, int order, const MomentOptions& options) {
  const std::size_t n = series.size();
  const auto bins = static_cast<Eigen::Index>(binning.centers.size());
  const auto ntau = static_cast<Eigen::Index>(options.taus.size());
  MomentTable table;
  table.order = order;
  table.taus = options.taus;
  table.centers = binning.centers;
  table.lower = binning.lower;
  table.upper = binning.upper;
  table.values.setConstant(bins, ntau, kNaN);
  table.standard_errors.setConstant(bins, ntau, kNaN);
  table.counts.setZero(bins, ntau);
  for (Eigen::Index b = 0; b < bins; ++b) {
    const auto& members = binning.members[static_cast<std::size_t>(b)];
    table.occupancy.push_back(members.size());
    for (Eigen::Index k = 0; k < ntau; ++k) {
      const auto tau = static_cast<std::size_t>(options.taus[static_cast<std::size_t>(k)]);
      double sum = 0.0;
      double sum_sq = 0.0;
      int count = 0;
      for (const auto t : members) {
        if (!admitted(options, n, t, tau)) continue;
        const double delta = series[t + tau] - series[t];
        const double v = order == 1 ? delta : delta * delta;
        sum += v;
        sum_sq += v * v;
        ++count;
      }
      table.counts(b, k) = count;
      if (count == 0) continue;
      const double mean = sum / count;
      const double var = count > 1 ? std::max(0.0, (sum_sq - count * mean * mean) / (count - 1)) : 0.0;
      table.values(b, k) = mean / static_cast<double>(tau);
      table.standard_errors(b, k) = std::sqrt(var / count) / static_cast<double>(tau);
    }
  }
  return table;
}

}  // namespace

int default_bin_count(std::size_t conditioning_points, bool conditioned, int bins_full) {
  const int scaled = static_cast<int>(std::floor(std::sqrt(static_cast<double>(conditioning_points)) / 5.0));
  if (!conditioned && conditioning_points >= static_cast<std::size_t>(bins_full) * 10) return bins_full;
  return std::clamp(scaled, std::min(10, bins_full), bins_full);
}

MomentTable conditional_moment(std::span<const double> series, int order, const MomentOptions& options) {
  if (order != 1 && order != 2) throw ConfigError(fmt::format("moment order must be 1 or 2, got {}", order));
  check_options(series, options);
  return moments(series, make_bins(series, options), order, options);
}

TauFit extrapolate_tau0(std::span<const double> taus, std::span<const double> values) {
  if (taus.size() != values.size()) throw DimensionError(fmt::format("{} taus, {} values", taus.size(), values.size()));
  std::vector<double> distinct(taus.begin(), taus.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    throw InsufficientDataError(fmt::format("insufficient taus: quadratic fit needs 3 distinct values, got {}", distinct.size()));
  }
  const auto n = static_cast<Eigen::Index>(taus.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tau = taus[static_cast<std::size_t>(i)];
    design.row(i) << 1.0, tau, tau * tau;
    rhs(i) = values[static_cast<std::size_t>(i)];
  }
  TauFit fit;
  fit.coefficients = design.colPivHouseholderQr().solve(rhs);
  fit.limit = fit.coefficients(0);
  fit.residual = std::sqrt((design * fit.coefficients - rhs).squaredNorm() / static_cast<double>(n));
  return fit;
}

KmEstimate estimate_drift_diffusion(std::span<const double> series, const MomentOptions& options) {
  check_options(series, options);
  const Binning binning = make_bins(series, options);
  const MomentTable first = moments(series, binning, 1, options);
  const MomentTable second = moments(series, binning, 2, options);

  KmEstimate est;
  est.taus = options.taus;
  for (std::size_t b = 0; b < binning.centers.size(); ++b) {
    std::vector<double> taus;
    std::vector<double> m1;
    std::vector<double> m2;
    for (std::size_t k = 0; k < options.taus.size(); ++k) {
      const auto bi = static_cast<Eigen::Index>(b);
      const auto ki = static_cast<Eigen::Index>(k);
      if (first.counts(bi, ki) == 0) continue;
      taus.push_back(options.taus[k]);
      m1.push_back(first.values(bi, ki));
      m2.push_back(second.values(bi, ki));
    }
    if (taus.size() < 3) {
      est.diagnostics.push_back(fmt::format("bin {} (c={}) dropped: admitted pairs for only {} taus", b,
                                            binning.centers[b], taus.size()));
      continue;
    }
    const TauFit fd = extrapolate_tau0(taus, m1);
    const TauFit fg = extrapolate_tau0(taus, m2);
    est.centers.push_back(binning.centers[b]);
    est.counts.push_back(static_cast<std::size_t>(first.counts(static_cast<Eigen::Index>(b), 0)));
    est.drift.push_back(fd.limit);
    est.clamped.push_back(fg.limit < 0.0);
    est.diffusion_sq.push_back(std::max(0.0, fg.limit));
    if (fg.limit < 0.0) {
      est.diagnostics.push_back(fmt::format("bin {} (c={}): g^2 extrapolated to {}, clamped to 0", b,
                                            binning.centers[b], fg.limit));
    }
    est.drift_fits.push_back(fd);
    est.diffusion_fits.push_back(fg);
  }
  return est;
}

void write_km(const std::filesystem::path& path, const KmEstimate& est) {
  csv::Writer w(path);
  w.line("c,f,g2,count");
  for (std::size_t i = 0; i < est.bins(); ++i) {
    w.row("{},{},{},{}", est.centers[i], est.drift[i], est.diffusion_sq[i], est.counts[i]);
  }
}

PotentialCurve integrate_potential(const KmEstimate& est) {
  const std::size_t n = est.bins();
  if (n < 2) throw InsufficientDataError(fmt::format("cannot integrate a potential over {} bin(s)", n));
  PotentialCurve curve;
  curve.grid = est.centers;
  curve.values.assign(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    const double h = curve.grid[k] - curve.grid[k - 1];
    curve.values[k] = curve.values[k - 1] - 0.5 * (est.drift[k - 1] + est.drift[k]) * h;
  }
  const std::size_t half = (n + 1) / 2;
  curve.anchor_index = static_cast<std::size_t>(
      std::min_element(curve.values.begin(), curve.values.begin() + static_cast<std::ptrdiff_t>(half)) -
      curve.values.begin());
  curve.anchor = curve.grid[curve.anchor_index];
  const double offset = curve.values[curve.anchor_index];
  for (double& v : curve.values) v -= offset;
  return curve;
}

std::vector<double> differentiate_potential(const PotentialCurve& curve) {
  std::vector<double> slopes;
  for (std::size_t k = 0; k + 1 < curve.grid.size(); ++k) {
    slopes.push_back((curve.values[k + 1] - curve.values[k]) / (curve.grid[k + 1] - curve.grid[k]));
  }
  return slopes;
}

std::vector<std::size_t> local_minima(const PotentialCurve& curve) {
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k + 1 < curve.values.size(); ++k) {
    if (curve.values[k] < curve.values[k - 1] && curve.values[k] < curve.values[k + 1]) out.push_back(k);
  }
  return out;
}

std::vector<WindowPotential> sliding_window_potentials(const DatedSeries& series, std::size_t window,
                                                       std::size_t step, const MomentOptions& options) {
  if (window < 2 || step < 1) throw ConfigError(fmt::format("bad sliding window {} / step {}", window, step));
  if (series.size() < window) {
    throw InsufficientDataError(fmt::format("sliding window {} exceeds series length {}", window, series.size()));
  }
  const std::size_t count = (series.size() - window) / step + 1;
  std::vector<WindowPotential> out;
  out.reserve(count);
  const std::span<const double> all(series.values);
  for (std::size_t w = 0; w < count; ++w) {
    WindowPotential wp;
    wp.start = w * step;
    wp.end = wp.start + window;
    wp.mid_date = series.dates[wp.start + window / 2];
    wp.estimate = estimate_drift_diffusion(all.subspan(wp.start, window), options);
    wp.potential = integrate_potential(wp.estimate);
    out.push_back(std::move(wp));
  }
  return out;
}

DiffusionPoints pool_diffusion(const std::vector<WindowPotential>& windows) {
  DiffusionPoints pts;
  for (const auto& w : windows) {
    for (std::size_t i = 0; i < w.estimate.bins(); ++i) {
      pts.c.push_back(w.estimate.centers[i]);
      pts.g.push_back(w.estimate.diffusion(i));
    }
  }
  return pts;
}

double bounded_diffusion(const BoundedDiffusionFit& fit, double c) {
  return fit.lambda * std::sqrt(std::max(0.0, (c - fit.c_min) * (fit.c_max - c)));
}

BoundedDiffusionFit fit_bounded_diffusion(std::span<const double> c, std::span<const double> g) {
  if (c.size() != g.size()) throw DimensionError(fmt::format("{} c values, {} g values", c.size(), g.size()));
  if (c.size() < 4) throw InsufficientDataError(fmt::format("bounded diffusion fit needs 4 points, got {}", c.size()));
  const auto [lo_it, hi_it] = std::minmax_element(c.begin(), c.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DataError("degenerate range: all c values are equal");
  const auto n = static_cast<Eigen::Index>(c.size());
  const Eigen::Map<const Eigen::VectorXd> cv(c.data(), n);
  const Eigen::Map<const Eigen::VectorXd> gv(g.data(), n);

  // Start: g^2 = lambda^2 (c - c_min)(c_max - c) is quadratic in c.
  Eigen::MatrixXd design(n, 3);
  design.col(0).setOnes();
  design.col(1) = cv;
  design.col(2) = cv.array().square();
  const Eigen::Vector3d quad = design.colPivHouseholderQr().solve(gv.array().square().matrix());
  Eigen::Vector3d p;  // lambda, c_min, c_max
  const double disc = quad(1) * quad(1) - 4.0 * quad(2) * quad(0);
  if (quad(2) < 0.0 && disc > 0.0) {
    const double root = std::sqrt(disc);
    const double r1 = (-quad(1) + root) / (2.0 * quad(2));
    const double r2 = (-quad(1) - root) / (2.0 * quad(2));
    p << std::sqrt(-quad(2)), std::min(r1, r2), std::max(r1, r2);
  } else {
    const double pad = 0.05 * (hi - lo);
    const double half = 0.5 * (hi - lo) + pad;
    p << gv.maxCoeff() / std::max(half, 1e-12), lo - pad, hi + pad;
  }

  const double floor_q = 1e-12;
  auto evaluate = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    r.resize(n);
    if (jac) jac->resize(n, 3);
    const double width_sq = std::max((q(2) - q(1)) * (q(2) - q(1)), floor_q);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lower = cv(i) - q(1);
      const double upper = q(2) - cv(i);
      const double prod = lower * upper;
      const double s = std::sqrt(std::max(0.0, prod));
      r(i) = q(0) * s - gv(i);
      if (jac) {
        // Outside the support the derivative is taken at a small positive
        // product so the boundaries can move outward.
        const double s_eff = std::sqrt(std::max(prod, 1e-6 * width_sq));
        (*jac)(i, 0) = s;
        (*jac)(i, 1) = -q(0) * upper / (2.0 * s_eff);
        (*jac)(i, 2) = q(0) * lower / (2.0 * s_eff);
      }
    }
    return r.squaredNorm();
  };

  BoundedDiffusionFit fit;
  fit.points = c.size();
  Eigen::VectorXd r;
  Eigen::VectorXd r_try;
  Eigen::MatrixXd jac;
  double cost = evaluate(p, r, &jac);
  double mu = 1e-3;
  bool converged = false;
  constexpr int kMaxIterations = 500;
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, cost) || cost == 0.0) {
      converged = true;
      break;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      Eigen::Matrix3d a = jtj;
      a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Vector3d delta = a.ldlt().solve(-grad);
      const Eigen::Vector3d trial = p + delta;
      if (trial(0) > 0.0 && trial(1) < trial(2)) {
        const double trial_cost = evaluate(trial, r_try, nullptr);
        if (trial_cost <= cost) {
          const double change = delta.cwiseAbs().maxCoeff() / std::max(1e-12, p.cwiseAbs().maxCoeff());
          const double drop = cost - trial_cost;
          p = trial;
          cost = evaluate(p, r, &jac);
          mu = std::max(mu / 3.0, 1e-15);
          accepted = true;
          if (change < 1e-13 || drop <= 1e-16 * std::max(cost, 1e-300)) converged = true;
        }
      }
      if (!accepted) mu *= 4.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: a stationary point.
      converged = true;
    }
    if (converged) break;
  }
  fit.lambda = p(0);
  fit.c_min = p(1);
  fit.c_max = p(2);
  fit.t0 = 1.0 / (fit.lambda * fit.lambda);
  fit.residual = std::sqrt(cost / static_cast<double>(n));
  fit.iterations = it;
  if (!converged || !std::isfinite(cost) || !(fit.lambda > 0.0) || !(fit.c_min < fit.c_max)) {
    throw FitError(fmt::format("bounded diffusion fit did not converge after {} iterations (lambda={}, c_min={}, "
                               "c_max={}, rms residual={})",
                               it, fit.lambda, fit.c_min, fit.c_max, fit.residual),
                   fit);
  }
  return fit;
}

}  // namespace corrdyn
