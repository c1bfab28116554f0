#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace corrdyn {

/// Pipeline parameters. The file format is one `key = value` per line;
/// `#` starts a comment. Keys match the field names below, lists are comma
/// separated and merge groups are written `2+3;4+5`.
struct RunConfig {
  std::string input;                   // price panel CSV
  std::string input_format = "auto";   // auto | long | wide
  std::string output_dir = "corrdyn_out";
  int normalization_window = 13;
  int correlation_window = 42;
  int correlation_step = 1;
  double cluster_threshold = 0.164;
  std::uint64_t seed = 1;
  int cluster_restarts = 10;
  int km_bins = 50;
  std::vector<int> taus = {1, 2, 3, 4, 5};
  int slide_window = 1008;
  int slide_step = 42;
  std::string merges;          // explicit merge groups; empty means automatic
  int min_state_days = 200;    // automatic merge below this many days
  int pca_components = 10;
  int pca_assets = 100;        // random instrument subset for PCA, 0 = all
  bool pca_centered = true;
  bool export_matrices = false;
  int histogram_bins = 40;

  bool operator==(const RunConfig&) const = default;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& config);

/// Applies one `key`/`value` setting; used by the parser and CLI overrides.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace corrdyn
