#include "corrdyn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "corrdyn/error.hpp"
#include "corrdyn/states.hpp"

namespace corrdyn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(fmt::format("'{}' expects a number, got '{}'", key, value));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(fmt::format("'{}' expects true or false, got '{}'", key, value));
}

}  // namespace

void set_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "input") c.input = value;
  else if (key == "input_format") c.input_format = value;
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "normalization_window") c.normalization_window = parse_number<int>(key, value);
  else if (key == "correlation_window") c.correlation_window = parse_number<int>(key, value);
  else if (key == "correlation_step") c.correlation_step = parse_number<int>(key, value);
  else if (key == "cluster_threshold") c.cluster_threshold = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "cluster_restarts") c.cluster_restarts = parse_number<int>(key, value);
  else if (key == "km_bins") c.km_bins = parse_number<int>(key, value);
  else if (key == "taus") {
    c.taus.clear();
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) c.taus.push_back(parse_number<int>(key, trim(part)));
  }
  else if (key == "slide_window") c.slide_window = parse_number<int>(key, value);
  else if (key == "slide_step") c.slide_step = parse_number<int>(key, value);
  else if (key == "merges") {
    parse_merges(value);  // validates
    c.merges = value;
  }
  else if (key == "min_state_days") c.min_state_days = parse_number<int>(key, value);
  else if (key == "pca_components") c.pca_components = parse_number<int>(key, value);
  else if (key == "pca_assets") c.pca_assets = parse_number<int>(key, value);
  else if (key == "pca_centered") c.pca_centered = parse_bool(key, value);
  else if (key == "export_matrices") c.export_matrices = parse_bool(key, value);
  else if (key == "histogram_bins") c.histogram_bins = parse_number<int>(key, value);
  else throw ConfigError(fmt::format("unknown config key '{}'", key));
}

void RunConfig::validate() const {
  auto positive = [](const char* name, long long v) {
    if (v <= 0) throw ConfigError(fmt::format("'{}' must be positive, got {}", name, v));
  };
  if (normalization_window < 2) throw ConfigError("'normalization_window' must be >= 2");
  if (correlation_window < 2) throw ConfigError("'correlation_window' must be >= 2");
  positive("correlation_step", correlation_step);
  if (!(cluster_threshold > 0.0)) throw ConfigError("'cluster_threshold' must be positive");
  positive("cluster_restarts", cluster_restarts);
  positive("km_bins", km_bins);
  if (slide_window < 2) throw ConfigError("'slide_window' must be >= 2");
  positive("slide_step", slide_step);
  positive("pca_components", pca_components);
  positive("histogram_bins", histogram_bins);
  if (min_state_days < 0) throw ConfigError("'min_state_days' must be >= 0");
  if (pca_assets < 0 || pca_assets == 1) throw ConfigError("'pca_assets' must be 0 or >= 2");
  if (taus.size() < 3) throw ConfigError("'taus' needs at least 3 values for the quadratic fit");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (taus[i] < 1 || (i > 0 && taus[i] <= taus[i - 1])) {
      throw ConfigError("'taus' must be strictly ascending integers >= 1");
    }
  }
  if (input_format != "auto" && input_format != "long" && input_format != "wide") {
    throw ConfigError(fmt::format("'input_format' must be auto, long or wide, got '{}'", input_format));
  }
  if (output_dir.empty()) throw ConfigError("'output_dir' is empty");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::stringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, number));
    }
    try {
      set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", origin, number, e.what()));
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

std::string format_config(const RunConfig& c) {
  std::string out = "# corrdyn run configuration\n";
  auto put = [&](const char* key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };
  put("input", c.input);
  put("input_format", c.input_format);
  put("output_dir", c.output_dir);
  put("normalization_window", c.normalization_window);
  put("correlation_window", c.correlation_window);
  put("correlation_step", c.correlation_step);
  put("cluster_threshold", c.cluster_threshold);
  put("seed", c.seed);
  put("cluster_restarts", c.cluster_restarts);
  put("km_bins", c.km_bins);
  put("taus", fmt::format("{}", fmt::join(c.taus, ",")));
  put("slide_window", c.slide_window);
  put("slide_step", c.slide_step);
  put("merges", c.merges);
  put("min_state_days", c.min_state_days);
  put("pca_components", c.pca_components);
  put("pca_assets", c.pca_assets);
  put("pca_centered", c.pca_centered ? "true" : "false");
  put("export_matrices", c.export_matrices ? "true" : "false");
  put("histogram_bins", c.histogram_bins);
  return out;
}

}  // namespace corrdyn
