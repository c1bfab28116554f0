#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/csv_io.hpp"
#include "corrdyn/error.hpp"
#include "corrdyn/states.hpp"

namespace corrdyn {

struct MomentOptions {
  int bins = 50;
  std::vector<int> taus = {1, 2, 3, 4, 5};
  const PairMask* mask = nullptr;  // all pairs when null
  int min_occupancy = 10;          // required conditioning points per bin
};

/// Bin count for a run: `bins_full` for unconditioned runs with enough
/// points, otherwise floor(sqrt(points) / 5) clamped to [10, bins_full].
int default_bin_count(std::size_t conditioning_points, bool conditioned, int bins_full = 50);

/// Conditional moments M_I(tau) per equal-count bin I.
///
/// The conditioning set is every t whose pair (t, t + tau_min) is admitted.
/// It is sorted by value and cut into `bins` contiguous chunks whose sizes
/// differ by at most one. For order 1 a bin's M(tau) is the mean of
/// x(t+tau) - x(t) over admitted pairs divided by tau; order 2 uses the raw
/// squared displacement.
struct MomentTable {
  int order = 1;
  std::vector<int> taus;
  std::vector<double> centers;  // mean conditioning value per bin
  std::vector<double> lower;    // smallest value in bin
  std::vector<double> upper;    // largest value in bin
  std::vector<std::size_t> occupancy;
  Eigen::MatrixXd values;           // bins x taus, NaN where no pair was admitted
  Eigen::MatrixXd standard_errors;  // same shape
  Eigen::MatrixXi counts;           // admitted pairs per bin and tau

  std::size_t bins() const noexcept { return centers.size(); }
};

MomentTable conditional_moment(std::span<const double> series, int order, const MomentOptions& options);

/// Least-squares quadratic a + b tau + c tau^2; `limit` is a.
struct TauFit {
  double limit = 0.0;
  Eigen::Vector3d coefficients = Eigen::Vector3d::Zero();
  double residual = 0.0;  // root mean square
};

/// Throws InsufficientDataError with fewer than 3 distinct taus.
TauFit extrapolate_tau0(std::span<const double> taus, std::span<const double> values);

/// Drift f and squared diffusion g^2 per bin, extrapolated to tau -> 0.
struct KmEstimate {
  std::vector<int> taus;
  std::vector<double> centers;
  std::vector<double> drift;
  std::vector<double> diffusion_sq;
  std::vector<std::size_t> counts;  // admitted pairs at the smallest tau
  std::vector<bool> clamped;        // g^2 fit fell below zero and was set to 0
  std::vector<TauFit> drift_fits;
  std::vector<TauFit> diffusion_fits;
  std::vector<std::string> diagnostics;

  std::size_t bins() const noexcept { return centers.size(); }
  double diffusion(std::size_t i) const { return std::sqrt(diffusion_sq[i]); }
};

/// Bins that lose every pair for some tau, or keep fewer than three taus,
/// are dropped with a diagnostic.
KmEstimate estimate_drift_diffusion(std::span<const double> series, const MomentOptions& options);

void write_km(const std::filesystem::path& path, const KmEstimate& est);

/// V(c) = -integral of f, by the trapezoidal rule over the bin centers,
/// shifted so that V is zero at its minimum over the first half of the grid.
struct PotentialCurve {
  std::vector<double> grid;
  std::vector<double> values;
  std::size_t anchor_index = 0;
  double anchor = 0.0;  // grid[anchor_index]
};

PotentialCurve integrate_potential(const KmEstimate& est);

/// Slopes (V[k+1] - V[k]) / (c[k+1] - c[k]) at the cell midpoints; for a
/// trapezoidal potential this equals -(f[k] + f[k+1]) / 2.
std::vector<double> differentiate_potential(const PotentialCurve& curve);

/// Indices of strict interior local minima of V.
std::vector<std::size_t> local_minima(const PotentialCurve& curve);

struct WindowPotential {
  std::size_t start = 0;  // first sample of the window
  std::size_t end = 0;    // one past the last sample
  std::string mid_date;   // date of sample start + window / 2
  KmEstimate estimate;
  PotentialCurve potential;
};

/// One estimate per window of `window` samples moved by `step`; yields
/// floor((N - window) / step) + 1 windows.
std::vector<WindowPotential> sliding_window_potentials(const DatedSeries& series, std::size_t window,
                                                       std::size_t step, const MomentOptions& options);

struct DiffusionPoints {
  std::vector<double> c;
  std::vector<double> g;
};

/// Pools every (bin center, g) pair of all windows.
DiffusionPoints pool_diffusion(const std::vector<WindowPotential>& windows);

/// g(c) = lambda sqrt((c - c_min)(c_max - c)), t0 = 1 / lambda^2.
struct BoundedDiffusionFit {
  double lambda = 0.0;
  double c_min = 0.0;
  double c_max = 0.0;
  double t0 = 0.0;
  double residual = 0.0;  // root mean square of g residuals
  int iterations = 0;
  std::size_t points = 0;
};

/// Thrown when Levenberg-Marquardt fails; carries the last iterate.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, BoundedDiffusionFit last) : NumericalError(what), last_(last) {}
  const BoundedDiffusionFit& last_iterate() const noexcept { return last_; }

 private:
  BoundedDiffusionFit last_;
};

/// Nonlinear least squares on g, started from the quadratic least-squares
/// fit of g^2 in c. Needs at least 4 points with distinct c.
BoundedDiffusionFit fit_bounded_diffusion(std::span<const double> c, std::span<const double> g);

double bounded_diffusion(const BoundedDiffusionFit& fit, double c);

}  // namespace corrdyn
