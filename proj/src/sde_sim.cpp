#include "corrdyn/sde_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "corrdyn/error.hpp"

namespace corrdyn {

double NormalGenerator::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

bool SdeModel::in_domain(double x) const {
  if (!std::isfinite(x)) return false;
  return !bounds || (x >= bounds->lower && x <= bounds->upper);
}

double reflect(double x, const Interval& bounds) {
  if (x >= bounds.lower && x <= bounds.upper) return x;
  const double width = bounds.upper - bounds.lower;
  double y = std::fmod(x - bounds.lower, 2.0 * width);
  if (y < 0.0) y += 2.0 * width;
  if (y > width) y = 2.0 * width - y;
  return std::clamp(bounds.lower + y, bounds.lower, bounds.upper);
}

SimPath euler_maruyama(const SdeModel& model, double x0, double dt, std::size_t n_steps,
                       std::uint64_t seed, std::size_t record_every) {
  if (!(dt > 0.0)) throw ConfigError(fmt::format("time step must be positive, got {}", dt));
  if (record_every == 0) throw ConfigError("record_every must be >= 1");
  if (!model.in_domain(x0)) throw ConfigError(fmt::format("start point {} outside the model domain", x0));

  SimPath path;
  path.seed = seed;
  path.model = model.name;
  path.spacing = dt * static_cast<double>(record_every);
  path.values.reserve(n_steps / record_every + 1);
  path.values.push_back(x0);

  NormalGenerator normal(seed);
  const double sqrt_dt = std::sqrt(dt);
  double x = x0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    x += model.drift(x) * dt + model.diffusion(x) * sqrt_dt * normal();
    if (!std::isfinite(x)) {
      throw NumericalError(fmt::format("path of model '{}' diverged at step {}", model.name, k + 1));
    }
    if (model.bounds) x = reflect(x, *model.bounds);
    if ((k + 1) % record_every == 0) path.values.push_back(x);
  }
  return path;
}

SdeModel ou_model(double theta, double mu, double sigma) {
  if (!(theta > 0.0) || !(sigma > 0.0) || !std::isfinite(mu)) {
    throw ConfigError(fmt::format("ou needs theta > 0 and sigma > 0 (theta={}, sigma={})", theta, sigma));
  }
  SdeModel m;
  m.name = fmt::format("ou(theta={},mu={},sigma={})", theta, mu, sigma);
  m.drift = [theta, mu](double c) { return -theta * (c - mu); };
  m.diffusion = [sigma](double) { return sigma; };
  return m;
}

SdeModel bounded_corr_model(double lambda, double c_min, double c_max, double theta, double mu) {
  if (!(lambda > 0.0) || !(c_min < c_max) || !(theta >= 0.0) || !(mu >= c_min && mu <= c_max)) {
    throw ConfigError(fmt::format(
        "bounded_corr needs lambda > 0, c_min < c_max, theta >= 0 and mu in [c_min, c_max] "
        "(lambda={}, c_min={}, c_max={}, theta={}, mu={})",
        lambda, c_min, c_max, theta, mu));
  }
  SdeModel m;
  m.name = fmt::format("bounded_corr(lambda={},c_min={},c_max={},theta={},mu={})", lambda, c_min, c_max,
                       theta, mu);
  m.drift = [theta, mu](double c) { return -theta * (c - mu); };
  m.diffusion = [lambda, c_min, c_max](double c) {
    return lambda * std::sqrt(std::max(0.0, (c - c_min) * (c_max - c)));
  };
  m.bounds = Interval{c_min, c_max};
  return m;
}

SdeModel double_well_model(double a, double b, double sigma) {
  if (!(a > 0.0) || !(b > 0.0) || !(sigma > 0.0)) {
    throw ConfigError(fmt::format("double_well needs a, b, sigma > 0 (a={}, b={}, sigma={})", a, b, sigma));
  }
  SdeModel m;
  m.name = fmt::format("double_well(a={},b={},sigma={})", a, b, sigma);
  m.drift = [a, b](double c) { return -4.0 * a * c * c * c + 2.0 * b * c; };
  m.diffusion = [sigma](double) { return sigma; };
  return m;
}

SdeModel preset_model(const std::string& name, const std::map<std::string, double>& params) {
  auto take = [&](std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : params) {
      if (!allowed.count(key)) throw ConfigError(fmt::format("unknown parameter '{}' for model '{}'", key, name));
    }
  };
  auto get = [&](const char* key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  if (name == "ou") {
    take({"theta", "mu", "sigma"});
    return ou_model(get("theta", 0.05), get("mu", 0.3), get("sigma", 0.02));
  }
  if (name == "bounded_corr") {
    take({"lambda", "c_min", "c_max", "theta", "mu"});
    const double c_min = get("c_min", 0.042);
    const double c_max = get("c_max", 0.918);
    return bounded_corr_model(get("lambda", 0.0245), c_min, c_max, get("theta", 0.002),
                              get("mu", 0.5 * (c_min + c_max)));
  }
  if (name == "double_well") {
    take({"a", "b", "sigma"});
    return double_well_model(get("a", 1.0), get("b", 1.0), get("sigma", 0.5));
  }
  throw ConfigError(fmt::format("unknown model '{}' (ou|bounded_corr|double_well)", name));
}

std::vector<std::string> business_days(const std::string& start, std::size_t count) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (std::sscanf(start.c_str(), "%d-%u-%u", &y, &m, &d) != 3) {
    throw ConfigError(fmt::format("start date '{}' is not YYYY-MM-DD", start));
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw ConfigError(fmt::format("start date '{}' is not a valid date", start));
  std::chrono::sys_days day{ymd};
  std::vector<std::string> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::chrono::weekday wd{day};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) {
      const std::chrono::year_month_day cur{day};
      out.push_back(fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(cur.year()),
                                static_cast<unsigned>(cur.month()), static_cast<unsigned>(cur.day())));
    }
    day += std::chrono::days{1};
  }
  return out;
}

DatedSeries to_series(const SimPath& path, const std::string& start_date) {
  DatedSeries s;
  s.dates = business_days(start_date, path.values.size());
  s.values = path.values;
  return s;
}

}  // namespace corrdyn
