#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "corrdyn/ingest.hpp"

namespace corrdyn {

struct FactorMarketOptions {
  Eigen::Index instruments = 100;
  std::uint64_t seed = 1;
  double volatility = 0.01;  // daily return scale
  std::string start_date = "2000-01-03";
};

/// Synthetic one-factor market. On day t every instrument returns
///   r_i(t) = volatility * (beta_t f_t + sqrt(1 - beta_t^2) e_i(t))
/// with independent standard normal f and e, so the true pairwise
/// correlation is beta_t^2. Prices start at 100; the panel has
/// loadings.size() + 1 dates.
PricePanel simulate_factor_market(std::span<const double> loadings, const FactorMarketOptions& options);

/// Same market driven by a target correlation path (beta_t = sqrt(c_t)).
PricePanel simulate_correlation_market(std::span<const double> correlation, const FactorMarketOptions& options);

}  // namespace corrdyn
