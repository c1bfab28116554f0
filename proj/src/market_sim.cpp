#include "corrdyn/market_sim.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "corrdyn/error.hpp"
#include "corrdyn/sde_sim.hpp"

namespace corrdyn {

PricePanel simulate_factor_market(std::span<const double> loadings, const FactorMarketOptions& options) {
  if (options.instruments < 2) throw ConfigError("a market needs at least 2 instruments");
  if (!(options.volatility > 0.0)) throw ConfigError("market volatility must be positive");
  for (const double beta : loadings) {
    if (!(std::abs(beta) <= 1.0)) throw ConfigError(fmt::format("factor loading {} outside [-1, 1]", beta));
  }
  const Eigen::Index k = options.instruments;
  const auto days = static_cast<Eigen::Index>(loadings.size());

  PricePanel panel;
  panel.dates = business_days(options.start_date, loadings.size() + 1);
  panel.tickers.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) panel.tickers.push_back(fmt::format("S{:04d}", i));
  panel.prices.resize(k, days + 1);
  panel.prices.col(0).setConstant(100.0);

  NormalGenerator normal(options.seed);
  for (Eigen::Index t = 0; t < days; ++t) {
    const double beta = loadings[static_cast<std::size_t>(t)];
    const double idio = std::sqrt(1.0 - beta * beta);
    const double factor = normal();
    for (Eigen::Index i = 0; i < k; ++i) {
      const double r = options.volatility * (beta * factor + idio * normal());
      panel.prices(i, t + 1) = panel.prices(i, t) * (1.0 + r);
    }
  }
  return panel;
}

PricePanel simulate_correlation_market(std::span<const double> correlation, const FactorMarketOptions& options) {
  std::vector<double> loadings;
  loadings.reserve(correlation.size());
  for (const double c : correlation) {
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError(fmt::format("target correlation {} outside [0, 1]", c));
    loadings.push_back(std::sqrt(c));
  }
  return simulate_factor_market(loadings, options);
}

}  // namespace corrdyn
