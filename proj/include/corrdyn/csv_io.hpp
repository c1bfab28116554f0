#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

namespace corrdyn {

/// A dated scalar series, the `date,value` CSV shape shared by the mean
/// correlation, the largest eigenvalue and simulated paths.
struct DatedSeries {
  std::vector<std::string> dates;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

namespace csv {

/// Splits one line on commas, trimming blanks and surrounding double quotes.
std::vector<std::string> split(std::string_view line);

/// Parses a finite double; throws FormatError naming `what` otherwise.
double parse_double(std::string_view cell, const std::string& file, std::size_t line,
                    std::string_view what);

long long parse_int(std::string_view cell, const std::string& file, std::size_t line,
                    std::string_view what);

/// Reads all non-empty lines; throws DataError when the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) { return fmt::format("{}", v); }

DatedSeries read_series(const std::filesystem::path& path);
void write_series(const std::filesystem::path& path, const DatedSeries& series,
                  std::string_view value_column = "value");

/// Thin wrapper over an output file that throws on open failure.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);

  template <typename... Args>
  void row(fmt::format_string<Args...> f, Args&&... args) {
    out_ << fmt::format(f, std::forward<Args>(args)...) << '\n';
  }
  void line(std::string_view text) { out_ << text << '\n'; }
  std::ofstream& stream() { return out_; }

 private:
  std::ofstream out_;
};

}  // namespace csv
}  // namespace corrdyn
