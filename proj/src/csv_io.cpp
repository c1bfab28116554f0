#include "corrdyn/csv_io.hpp"

#include <charconv>
#include <cmath>

#include "corrdyn/error.hpp"

namespace corrdyn::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.emplace_back(trim(line.substr(start)));
      break;
    }
    cells.emplace_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

double parse_double(std::string_view cell, const std::string& file, std::size_t line,
                    std::string_view what) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw FormatError(file, line, fmt::format("non-numeric {} '{}'", what, cell));
  }
  return value;
}

long long parse_int(std::string_view cell, const std::string& file, std::size_t line,
                    std::string_view what) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw FormatError(file, line, fmt::format("non-integer {} '{}'", what, cell));
  }
  return value;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

DatedSeries read_series(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  const std::string name = path.string();
  DatedSeries series;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split(lines[i]);
    if (i == 0 && cells.size() >= 1 && cells[0] == "date") continue;
    if (cells.size() != 2) throw FormatError(name, i + 1, "expected 2 columns 'date,value'");
    series.dates.push_back(cells[0]);
    series.values.push_back(parse_double(cells[1], name, i + 1, "value"));
  }
  if (series.values.empty()) throw DataError(fmt::format("'{}' holds no data rows", name));
  return series;
}

void write_series(const std::filesystem::path& path, const DatedSeries& series,
                  std::string_view value_column) {
  Writer w(path);
  w.row("date,{}", value_column);
  for (std::size_t i = 0; i < series.size(); ++i) {
    w.row("{},{}", series.dates[i], series.values[i]);
  }
}

Writer::Writer(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw DataError(fmt::format("cannot write '{}'", path.string()));
}

}  // namespace corrdyn::csv
