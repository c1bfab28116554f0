#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace corrdyn {

/// Date-aligned adjusted closing prices, one row per instrument.
struct PricePanel {
  std::vector<std::string> dates;    // strictly increasing
  std::vector<std::string> tickers;  // K instruments
  Eigen::MatrixXd prices;            // K x dates.size(), strictly positive

  Eigen::Index instruments() const noexcept { return prices.rows(); }
};

/// Daily returns r_i(t) = (S_i(t+1) - S_i(t)) / S_i(t), labelled with the
/// date of the later close.
struct ReturnMatrix {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Eigen::MatrixXd returns;  // K x N
};

/// Causally standardized returns. Cells whose window had zero spread are 0
/// and flagged in `degenerate`.
struct NormalizedReturns {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Eigen::MatrixXd values;  // K x M, M = N - window_n + 1
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;
  int window_n = 0;

  Eigen::Index columns() const noexcept { return values.cols(); }
};

enum class PriceFormat {
  kAuto,  // long if the header is exactly date,ticker,adj_close
  kLong,  // date,ticker,adj_close
  kWide,  // date,<ticker1>,<ticker2>,...
};

PriceFormat parse_price_format(const std::string& name);

/// Loads a price panel. Instruments without a price on every date are
/// dropped. Throws FormatError on malformed cells and DataError when no
/// instrument survives.
PricePanel load_prices(const std::filesystem::path& path, PriceFormat format = PriceFormat::kAuto);

/// Writes a panel in long format.
void write_prices(const std::filesystem::path& path, const PricePanel& panel);

ReturnMatrix compute_returns(const PricePanel& panel);

/// Standardizes each return by the mean and (population) standard deviation
/// of the `window` most recent returns, the current one included.
NormalizedReturns locally_normalize(const ReturnMatrix& ret, int window);

/// Wide CSV round-trip used between CLI stages.
void write_normalized(const std::filesystem::path& path, const NormalizedReturns& nr);
NormalizedReturns read_normalized(const std::filesystem::path& path, int window_n);

}  // namespace corrdyn
