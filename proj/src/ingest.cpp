#include "corrdyn/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include <fmt/format.h>

#include "corrdyn/csv_io.hpp"
#include "corrdyn/error.hpp"

namespace corrdyn {

namespace {

// Relative spread below which a normalization window counts as constant.
constexpr double kFlatWindowTolerance = 1e-12;

PricePanel assemble(const std::string& file,
                    const std::map<std::string, std::map<std::string, double>>& by_ticker,
                    std::vector<std::string> dates) {
  std::sort(dates.begin(), dates.end());
  dates.erase(std::unique(dates.begin(), dates.end()), dates.end());

  PricePanel panel;
  panel.dates = dates;
  for (const auto& [ticker, series] : by_ticker) {
    if (series.size() == dates.size()) panel.tickers.push_back(ticker);
  }
  if (panel.tickers.empty() || dates.empty()) {
    throw DataError(fmt::format("empty panel: no instrument in '{}' covers all {} dates", file,
                                dates.size()));
  }
  panel.prices.resize(static_cast<Eigen::Index>(panel.tickers.size()),
                      static_cast<Eigen::Index>(dates.size()));
  for (std::size_t i = 0; i < panel.tickers.size(); ++i) {
    const auto& series = by_ticker.at(panel.tickers[i]);
    std::size_t t = 0;
    for (const auto& [date, price] : series) {
      panel.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t++)) = price;
    }
  }
  return panel;
}

double checked_price(std::string_view cell, const std::string& file, std::size_t line,
                     std::string_view where) {
  const double price = csv::parse_double(cell, file, line, fmt::format("price for {}", where));
  if (!(price > 0.0)) {
    throw FormatError(file, line, fmt::format("non-positive price {} for {}", price, where));
  }
  return price;
}

PricePanel load_long(const std::string& file, const std::vector<std::string>& lines) {
  std::map<std::string, std::map<std::string, double>> by_ticker;
  std::vector<std::string> dates;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = csv::split(lines[i]);
    if (cells.size() != 3) {
      throw FormatError(file, i + 1, fmt::format("expected 3 columns, found {}", cells.size()));
    }
    const auto& date = cells[0];
    const auto& ticker = cells[1];
    if (date.empty() || ticker.empty()) throw FormatError(file, i + 1, "empty date or ticker");
    const double price = checked_price(cells[2], file, i + 1, ticker);
    if (!by_ticker[ticker].emplace(date, price).second) {
      throw FormatError(file, i + 1, fmt::format("duplicate row for ({}, {})", date, ticker));
    }
    dates.push_back(date);
  }
  return assemble(file, by_ticker, std::move(dates));
}

PricePanel load_wide(const std::string& file, const std::vector<std::string>& lines) {
  const auto header = csv::split(lines[0]);
  if (header.size() < 2 || header[0] != "date") {
    throw FormatError(file, 1, "wide format header must start with 'date'");
  }
  std::map<std::string, std::map<std::string, double>> by_ticker;
  std::vector<std::string> dates;
  std::optional<std::string> previous;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size()) {
      throw FormatError(file, i + 1,
                        fmt::format("expected {} columns, found {}", header.size(), cells.size()));
    }
    if (previous && !(*previous < cells[0])) {
      throw FormatError(file, i + 1, fmt::format("date '{}' not after '{}'", cells[0], *previous));
    }
    previous = cells[0];
    dates.push_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) {
      auto& series = by_ticker[header[j]];
      if (cells[j].empty()) continue;  // gap: the instrument will be dropped
      series.emplace(cells[0], checked_price(cells[j], file, i + 1, header[j]));
    }
  }
  return assemble(file, by_ticker, std::move(dates));
}

}  // namespace

PriceFormat parse_price_format(const std::string& name) {
  if (name == "auto") return PriceFormat::kAuto;
  if (name == "long") return PriceFormat::kLong;
  if (name == "wide") return PriceFormat::kWide;
  throw ConfigError(fmt::format("unknown price format '{}' (auto|long|wide)", name));
}

PricePanel load_prices(const std::filesystem::path& path, PriceFormat format) {
  const auto lines = csv::read_lines(path);
  const std::string file = path.string();
  if (lines.empty()) throw FormatError(file, 1, "missing header");
  const auto header = csv::split(lines[0]);
  const bool long_header =
      header.size() == 3 && header[0] == "date" && header[1] == "ticker" && header[2] == "adj_close";
  if (format == PriceFormat::kAuto) format = long_header ? PriceFormat::kLong : PriceFormat::kWide;
  if (format == PriceFormat::kLong) {
    if (!long_header) throw FormatError(file, 1, "long format header must be date,ticker,adj_close");
    return load_long(file, lines);
  }
  return load_wide(file, lines);
}

void write_prices(const std::filesystem::path& path, const PricePanel& panel) {
  csv::Writer w(path);
  w.line("date,ticker,adj_close");
  for (std::size_t t = 0; t < panel.dates.size(); ++t) {
    for (std::size_t i = 0; i < panel.tickers.size(); ++i) {
      w.row("{},{},{}", panel.dates[t], panel.tickers[i],
            panel.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
    }
  }
}

ReturnMatrix compute_returns(const PricePanel& panel) {
  const Eigen::Index n_dates = panel.prices.cols();
  if (n_dates < 2) {
    throw InsufficientDataError(fmt::format("returns need at least 2 dates, panel has {}", n_dates));
  }
  ReturnMatrix out;
  out.tickers = panel.tickers;
  out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  const auto& s = panel.prices;
  out.returns = (s.rightCols(n_dates - 1) - s.leftCols(n_dates - 1)).cwiseQuotient(s.leftCols(n_dates - 1));
  return out;
}

NormalizedReturns locally_normalize(const ReturnMatrix& ret, int window) {
  if (window < 2) throw ConfigError(fmt::format("normalization window must be >= 2, got {}", window));
  const Eigen::Index n = window;
  const Eigen::Index columns = ret.returns.cols();
  if (columns < n) {
    throw InsufficientDataError(
        fmt::format("normalization window {} exceeds {} return days", window, columns));
  }
  const Eigen::Index k = ret.returns.rows();
  const Eigen::Index m = columns - n + 1;

  NormalizedReturns out;
  out.tickers = ret.tickers;
  out.dates.assign(ret.dates.begin() + (n - 1), ret.dates.end());
  out.window_n = window;
  out.values.resize(k, m);
  out.degenerate.setConstant(k, m, false);

  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index t = 0; t < m; ++t) {
      const auto win = ret.returns.row(i).segment(t, n);
      const double mean = win.mean();
      const double var = (win.array() - mean).square().mean();
      const double scale = win.cwiseAbs().maxCoeff();
      const double sd = std::sqrt(var);
      if (!(sd > kFlatWindowTolerance * scale)) {
        out.values(i, t) = 0.0;
        out.degenerate(i, t) = true;
      } else {
        out.values(i, t) = (ret.returns(i, t + n - 1) - mean) / sd;
      }
    }
  }
  return out;
}

void write_normalized(const std::filesystem::path& path, const NormalizedReturns& nr) {
  csv::Writer w(path);
  std::string header = "date";
  for (const auto& t : nr.tickers) header += "," + t;
  w.line(header);
  std::string row;
  for (Eigen::Index t = 0; t < nr.values.cols(); ++t) {
    row = nr.dates[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < nr.values.rows(); ++i) {
      row += ',';
      row += csv::format_double(nr.values(i, t));
    }
    w.line(row);
  }
}

NormalizedReturns read_normalized(const std::filesystem::path& path, int window_n) {
  const auto lines = csv::read_lines(path);
  const std::string file = path.string();
  if (lines.empty()) throw FormatError(file, 1, "missing header");
  const auto header = csv::split(lines[0]);
  if (header.size() < 2 || header[0] != "date") throw FormatError(file, 1, "header must start with 'date'");

  NormalizedReturns nr;
  nr.window_n = window_n;
  nr.tickers.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> columns;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (lines[l].empty()) continue;
    const auto cells = csv::split(lines[l]);
    if (cells.size() != header.size()) throw FormatError(file, l + 1, "column count differs from header");
    nr.dates.push_back(cells[0]);
    auto& col = columns.emplace_back();
    for (std::size_t j = 1; j < cells.size(); ++j) {
      col.push_back(csv::parse_double(cells[j], file, l + 1, header[j]));
    }
  }
  const auto k = static_cast<Eigen::Index>(nr.tickers.size());
  const auto m = static_cast<Eigen::Index>(columns.size());
  nr.values.resize(k, m);
  for (Eigen::Index t = 0; t < m; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) nr.values(i, t) = columns[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
  }
  nr.degenerate.setConstant(k, m, false);
  return nr;
}

}  // namespace corrdyn
