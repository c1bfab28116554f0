#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "corrdyn/csv_io.hpp"

namespace corrdyn {

/// Standard normal variates from std::mt19937_64 via the Marsaglia polar
/// method. Uniforms take the top 53 bits of each 64-bit draw, so a seed
/// reproduces the same stream on every conforming platform.
class NormalGenerator {
 public:
  explicit NormalGenerator(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double operator()();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Interval {
  double lower;
  double upper;
};

/// Time-homogeneous Ito model dc = f(c) dt + g(c) dW.
struct SdeModel {
  std::string name;
  std::function<double(double)> drift;
  std::function<double(double)> diffusion;
  std::optional<Interval> bounds;  // paths are reflected back inside

  bool in_domain(double x) const;
};

/// Simulated path; values[0] is the start point and values are spaced by
/// `spacing` = dt * record_every.
struct SimPath {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::string model;
  double spacing = 1.0;
};

/// Euler-Maruyama: x_{k+1} = x_k + f(x_k) dt + g(x_k) sqrt(dt) z_k. With
/// `record_every` > 1 only every record_every-th state is kept, so dt = 0.1
/// and record_every = 10 gives a unit-spaced path with sub-stepping.
/// Throws NumericalError naming the step if the path stops being finite.
SimPath euler_maruyama(const SdeModel& model, double x0, double dt, std::size_t n_steps,
                       std::uint64_t seed, std::size_t record_every = 1);

/// Folds x back into [lower, upper] by mirror reflection at the ends.
double reflect(double x, const Interval& bounds);

/// f(c) = -theta (c - mu), g(c) = sigma.
SdeModel ou_model(double theta, double mu, double sigma);

/// g(c) = lambda sqrt((c - cmin)(cmax - c)) on [cmin, cmax] with the
/// mean-reverting drift -theta (c - mu). theta = 0 gives pure diffusion.
SdeModel bounded_corr_model(double lambda, double c_min, double c_max, double theta, double mu);

/// f(c) = -4 a c^3 + 2 b c, the negative slope of V(c) = a c^4 - b c^2;
/// g(c) = sigma.
SdeModel double_well_model(double a, double b, double sigma);

/// Named preset with parameters from `params`; missing keys take defaults.
///   ou:           theta=0.05 mu=0.3 sigma=0.02
///   bounded_corr: lambda=0.0245 c_min=0.042 c_max=0.918 theta=0.002 mu=(c_min+c_max)/2
///   double_well:  a=1 b=1 sigma=0.5
/// Throws ConfigError for unknown names, unknown keys or invalid values.
SdeModel preset_model(const std::string& name, const std::map<std::string, double>& params = {});

/// `count` consecutive weekdays starting at (or after) the ISO date `start`.
std::vector<std::string> business_days(const std::string& start, std::size_t count);

/// Path as a dated series with synthetic business-day dates.
DatedSeries to_series(const SimPath& path, const std::string& start_date = "2000-01-03");

}  // namespace corrdyn
