#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "corrdyn/config.hpp"
#include "corrdyn/error.hpp"

namespace corrdyn {

/// One emitted file, relative to the output directory.
struct Artifact {
  std::string group;
  std::string file;
};

/// Error raised by a stage, tagged with the stage name and the category of
/// the underlying failure.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorKind kind, const std::string& what)
      : Error(kind, "stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Artifact groups in manifest order.
const std::vector<std::string>& artifact_groups();

// Each stage reads the previous stages' files from config.output_dir, writes
// its own and returns what it wrote. A missing upstream file raises a
// DataError naming it.
std::vector<Artifact> stage_ingest(const RunConfig& config);
std::vector<Artifact> stage_correlate(const RunConfig& config);
std::vector<Artifact> stage_pca(const RunConfig& config);
std::vector<Artifact> stage_cluster(const RunConfig& config);
/// `series` overrides the mean correlation input (e.g. a simulated path);
/// state-conditioned potentials are then skipped.
std::vector<Artifact> stage_estimate(const RunConfig& config,
                                     const std::optional<std::filesystem::path>& series = std::nullopt);
std::vector<Artifact> stage_fitdiff(const RunConfig& config);
std::vector<Artifact> stage_report(const RunConfig& config);

struct ManifestEntry {
  std::string group;
  std::string file;
  std::string sha256;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string failed_stage;  // empty on success
  std::string error;
};

/// Runs every stage in order and writes manifest.json. On failure the
/// partial manifest is still written and a StageError is thrown.
Manifest run_pipeline(const RunConfig& config);

/// Builds, writes and returns the manifest for the given artifacts.
Manifest write_manifest(const RunConfig& config, const std::vector<Artifact>& artifacts,
                        const std::string& failed_stage = {}, const std::string& error = {});

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Runs `body` and rethrows any corrdyn::Error as a StageError for `stage`.
template <typename F>
auto run_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  }
}

}  // namespace corrdyn
