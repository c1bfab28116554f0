#include "corrdyn/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "corrdyn/corrwin.hpp"
#include "corrdyn/csv_io.hpp"
#include "corrdyn/geometry.hpp"
#include "corrdyn/ingest.hpp"
#include "corrdyn/kramers.hpp"
#include "corrdyn/states.hpp"

namespace corrdyn {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kNormalized = "normalized_returns.csv";
constexpr const char* kMeanCorrelation = "mean_correlation.csv";
constexpr const char* kLambdaMax = "lambda_max.csv";
constexpr const char* kCorrelationSummary = "correlation_summary.json";
constexpr const char* kMatrices = "correlation_matrices.csv";
constexpr const char* kPcaVariances = "pca_variances.csv";
constexpr const char* kPcaComponents = "pca_components.csv";
constexpr const char* kPcaProjections = "pca_projections.csv";
constexpr const char* kStates = "states.csv";
constexpr const char* kStateSummary = "state_summary.csv";
constexpr const char* kDendrogram = "dendrogram.json";
constexpr const char* kSteps = "steps.csv";
constexpr const char* kStepHistograms = "step_histograms.csv";
constexpr const char* kKmFull = "km_full.csv";
constexpr const char* kPotentialFull = "potential_full.csv";
constexpr const char* kKmWindowed = "km_windowed.csv";
constexpr const char* kPotentialsWindowed = "potentials_windowed.csv";
constexpr const char* kDiffusionPoints = "diffusion_points.csv";
constexpr const char* kPotentialsStates = "potentials_states.csv";
constexpr const char* kPotentialsClasses = "potentials_classes.csv";
constexpr const char* kEstimateNotes = "estimate_diagnostics.txt";
constexpr const char* kDiffusionFit = "diffusion_fit.json";
constexpr const char* kReport = "report.json";
constexpr const char* kManifest = "manifest.json";

fs::path out_path(const RunConfig& c, const char* name) { return fs::path(c.output_dir) / name; }

fs::path require(const RunConfig& c, const char* name, const char* producer) {
  const fs::path p = out_path(c, name);
  if (!fs::exists(p)) {
    throw DataError(fmt::format("dependency missing: '{}' not found (run '{}' first)", p.string(), producer));
  }
  return p;
}

void ensure_output_dir(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw ConfigError(fmt::format("cannot create output directory '{}': {}", c.output_dir, ec.message()));
}

void write_text(const fs::path& path, const std::string& text) {
  csv::Writer w(path);
  w.stream() << text;
  if (text.empty() || text.back() != '\n') w.stream() << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

CorrelationWindowSeries correlate_from_disk(const RunConfig& c) {
  const auto nr = read_normalized(require(c, kNormalized, "ingest"), c.normalization_window);
  return rolling_correlations(nr, c.correlation_window, c.correlation_step);
}

MomentOptions moment_options(const RunConfig& c, std::size_t points, bool conditioned, const PairMask* mask) {
  MomentOptions o;
  o.taus = c.taus;
  o.mask = mask;
  o.bins = default_bin_count(points, conditioned, c.km_bins);
  return o;
}

void write_potential_rows(csv::Writer& w, const std::string& key, const PotentialCurve& curve) {
  for (std::size_t i = 0; i < curve.grid.size(); ++i) w.row("{},{},{}", key, curve.grid[i], curve.values[i]);
}

// Deterministic Fisher-Yates pick of `count` indices out of `n`.
std::vector<Eigen::Index> random_subset(Eigen::Index n, Eigen::Index count, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

const std::vector<std::string>& artifact_groups() {
  static const std::vector<std::string> groups = {
      "ingest",      "mean_correlation",    "pca",         "states",           "diffusion",
      "windowed_potentials", "state_potentials", "step_histograms", "report"};
  return groups;
}

std::vector<Artifact> stage_ingest(const RunConfig& c) {
  return run_stage("ingest", [&] {
    c.validate();
    if (c.input.empty()) throw ConfigError("no input price file given");
    ensure_output_dir(c);
    const auto panel = load_prices(c.input, parse_price_format(c.input_format));
    const auto nr = locally_normalize(compute_returns(panel), c.normalization_window);
    write_normalized(out_path(c, kNormalized), nr);
    return std::vector<Artifact>{{"ingest", kNormalized}};
  });
}

std::vector<Artifact> stage_correlate(const RunConfig& c) {
  return run_stage("correlate", [&] {
    c.validate();
    const auto cw = correlate_from_disk(c);
    const auto cbar = mean_correlation(cw);
    const auto lmax = largest_eigenvalues(cw);
    csv::write_series(out_path(c, kMeanCorrelation), cbar);
    csv::write_series(out_path(c, kLambdaMax), lmax);
    std::size_t flagged = 0;
    for (const auto& d : cw.degenerate) flagged += d.empty() ? 0 : 1;
    json summary;
    summary["instruments"] = cw.instruments;
    summary["dimension"] = cw.dimension();
    summary["windows"] = cw.size();
    summary["window"] = cw.window;
    summary["step"] = cw.step;
    summary["windows_with_degenerate_instruments"] = flagged;
    write_text(out_path(c, kCorrelationSummary), summary.dump(2));
    std::vector<Artifact> out = {{"mean_correlation", kMeanCorrelation},
                                 {"mean_correlation", kLambdaMax},
                                 {"mean_correlation", kCorrelationSummary}};
    if (c.export_matrices) {
      write_matrices(out_path(c, kMatrices), cw);
      out.push_back({"mean_correlation", kMatrices});
    }
    return out;
  });
}

std::vector<Artifact> stage_pca(const RunConfig& c) {
  return run_stage("pca", [&] {
    c.validate();
    const auto cw = correlate_from_disk(c);
    Eigen::MatrixXd vectors;
    if (c.pca_assets > 0 && cw.instruments > c.pca_assets) {
      vectors = select_instruments(cw, random_subset(cw.instruments, c.pca_assets, c.seed));
    } else {
      vectors = cw.vectors;
    }
    const auto result = pca(vectors, PcaOptions{c.pca_centered, c.pca_components});
    const double total = result.variances.sum();
    const double norm = std::sqrt(static_cast<double>(vectors.rows()));
    {
      csv::Writer w(out_path(c, kPcaVariances));
      w.line("component,variance,fraction");
      for (Eigen::Index k = 0; k < result.variances.size(); ++k) {
        w.row("{},{},{}", k + 1, result.variances(k), total > 0.0 ? result.variances(k) / total : 0.0);
      }
    }
    {
      csv::Writer w(out_path(c, kPcaComponents));
      std::string header = "index";
      for (Eigen::Index k = 0; k < result.components.cols(); ++k) header += fmt::format(",pc{}", k + 1);
      w.line(header);
      for (Eigen::Index i = 0; i < result.components.rows(); ++i) {
        std::string row = std::to_string(i);
        for (Eigen::Index k = 0; k < result.components.cols(); ++k) row += "," + csv::format_double(result.components(i, k));
        w.line(row);
      }
    }
    {
      // Projections normalized by sqrt(d); the first one tracks the mean correlation.
      csv::Writer w(out_path(c, kPcaProjections));
      std::string header = "date";
      for (Eigen::Index k = 0; k < result.projections.cols(); ++k) header += fmt::format(",pc{}", k + 1);
      w.line(header);
      for (Eigen::Index t = 0; t < result.projections.rows(); ++t) {
        std::string row = cw.dates[static_cast<std::size_t>(t)];
        for (Eigen::Index k = 0; k < result.projections.cols(); ++k) {
          row += "," + csv::format_double(result.projections(t, k) / norm);
        }
        w.line(row);
      }
    }
    return std::vector<Artifact>{{"pca", kPcaVariances}, {"pca", kPcaComponents}, {"pca", kPcaProjections}};
  });
}

std::vector<Artifact> stage_cluster(const RunConfig& c) {
  return run_stage("cluster", [&] {
    c.validate();
    const auto cw = correlate_from_disk(c);
    const auto cbar = mean_correlation(cw);
    BisectOptions opts;
    opts.threshold = c.cluster_threshold;
    opts.seed = c.seed;
    opts.restarts = c.cluster_restarts;
    const auto tree = bisect_kmeans(cw.vectors, cw.dates, opts);
    const auto assign = label_states(tree, cbar);
    write_states(out_path(c, kStates), assign);
    {
      csv::Writer w(out_path(c, kStateSummary));
      w.line("state,class,days,mean_cbar,radius");
      for (const auto& s : assign.states) {
        w.row("{},{},{},{},{}", s.label, to_string(s.state_class), s.days, s.mean_cbar,
              tree.nodes[static_cast<std::size_t>(s.node)].radius);
      }
    }
    write_text(out_path(c, kDendrogram), dendrogram_json(tree, assign));
    const auto steps = steps_and_increments(cw.vectors, cbar, assign);
    write_steps(out_path(c, kSteps), steps);
    write_step_histograms(out_path(c, kStepHistograms), steps, c.histogram_bins);
    return std::vector<Artifact>{{"states", kStates},
                                 {"states", kStateSummary},
                                 {"states", kDendrogram},
                                 {"step_histograms", kSteps},
                                 {"step_histograms", kStepHistograms}};
  });
}

std::vector<Artifact> stage_estimate(const RunConfig& c, const std::optional<fs::path>& series_path) {
  return run_stage("estimate", [&] {
    c.validate();
    ensure_output_dir(c);
    const DatedSeries series =
        csv::read_series(series_path ? *series_path : require(c, kMeanCorrelation, "correlate"));
    std::vector<std::string> notes;
    std::vector<Artifact> out;
    const std::span<const double> values(series.values);

    const auto full_opts = moment_options(c, series.size() > 0 ? series.size() - 1 : 0, false, nullptr);
    const auto full = estimate_drift_diffusion(values, full_opts);
    for (const auto& d : full.diagnostics) notes.push_back("full series: " + d);
    write_km(out_path(c, kKmFull), full);
    {
      csv::Writer w(out_path(c, kPotentialFull));
      w.line("c,V");
      const auto curve = integrate_potential(full);
      for (std::size_t i = 0; i < curve.grid.size(); ++i) w.row("{},{}", curve.grid[i], curve.values[i]);
    }

    const auto window_opts = moment_options(c, static_cast<std::size_t>(c.slide_window) - 1, false, nullptr);
    const auto windows = sliding_window_potentials(series, static_cast<std::size_t>(c.slide_window),
                                                   static_cast<std::size_t>(c.slide_step), window_opts);
    {
      csv::Writer km(out_path(c, kKmWindowed));
      csv::Writer pot(out_path(c, kPotentialsWindowed));
      km.line("window_mid_date,c,f,g2,count");
      pot.line("window_mid_date,c,V");
      for (const auto& w : windows) {
        for (std::size_t i = 0; i < w.estimate.bins(); ++i) {
          km.row("{},{},{},{},{}", w.mid_date, w.estimate.centers[i], w.estimate.drift[i], w.estimate.diffusion_sq[i],
                 w.estimate.counts[i]);
        }
        write_potential_rows(pot, w.mid_date, w.potential);
        for (const auto& d : w.estimate.diagnostics) notes.push_back("window " + w.mid_date + ": " + d);
      }
    }
    {
      const auto pts = pool_diffusion(windows);
      csv::Writer w(out_path(c, kDiffusionPoints));
      w.line("c,g");
      for (std::size_t i = 0; i < pts.c.size(); ++i) w.row("{},{}", pts.c[i], pts.g[i]);
    }
    out.push_back({"state_potentials", kKmFull});
    out.push_back({"state_potentials", kPotentialFull});
    out.push_back({"windowed_potentials", kKmWindowed});
    out.push_back({"windowed_potentials", kPotentialsWindowed});
    out.push_back({"diffusion", kDiffusionPoints});

    const fs::path states_path = out_path(c, kStates);
    if (!series_path && fs::exists(states_path)) {
      const auto assign = read_states(states_path, series);
      const MergeList merges =
          c.merges.empty() ? auto_merge(assign, static_cast<std::size_t>(c.min_state_days)) : parse_merges(c.merges);
      auto group_name = [&](int g) {
        for (const auto& m : merges) {
          if (std::find(m.begin(), m.end(), g) != m.end() && *std::min_element(m.begin(), m.end()) == g) {
            return format_merges({m});
          }
        }
        return std::to_string(g);
      };
      auto conditioned = [&](const PairMask& mask, const char* file, const char* column, auto&& name_of) {
        csv::Writer w(out_path(c, file));
        w.row("{},c,V", column);
        for (const int g : mask.group_ids()) {
          const PairMask only = mask.only(g);
          const std::size_t points = only.count(static_cast<std::size_t>(c.taus.front()));
          const auto opts = moment_options(c, points, true, &only);
          const std::string name = name_of(g);
          if (points < static_cast<std::size_t>(opts.bins * opts.min_occupancy)) {
            notes.push_back(fmt::format("{} {}: skipped, {} admitted pairs", column, name, points));
            continue;
          }
          const auto est = estimate_drift_diffusion(values, opts);
          for (const auto& d : est.diagnostics) notes.push_back(fmt::format("{} {}: {}", column, name, d));
          if (est.bins() < 2) {
            notes.push_back(fmt::format("{} {}: skipped, fewer than 2 usable bins", column, name));
            continue;
          }
          write_potential_rows(w, name, integrate_potential(est));
        }
      };
      conditioned(condition_masks(assign, ConditionMode::kPerState, merges), kPotentialsStates, "state", group_name);
      conditioned(condition_masks(assign, ConditionMode::kPerClass), kPotentialsClasses, "class",
                  [](int g) { return std::string(to_string(static_cast<StateClass>(g))); });
      out.push_back({"state_potentials", kPotentialsStates});
      out.push_back({"state_potentials", kPotentialsClasses});
    }
    {
      csv::Writer w(out_path(c, kEstimateNotes));
      for (const auto& n : notes) w.line(n);
    }
    out.push_back({"windowed_potentials", kEstimateNotes});
    return out;
  });
}

std::vector<Artifact> stage_fitdiff(const RunConfig& c) {
  return run_stage("fitdiff", [&] {
    const auto path = require(c, kDiffusionPoints, "estimate");
    const auto lines = csv::read_lines(path);
    std::vector<double> cs;
    std::vector<double> gs;
    for (std::size_t l = 1; l < lines.size(); ++l) {
      if (lines[l].empty()) continue;
      const auto cells = csv::split(lines[l]);
      if (cells.size() != 2) throw FormatError(path.string(), l + 1, "expected c,g");
      cs.push_back(csv::parse_double(cells[0], path.string(), l + 1, "c"));
      gs.push_back(csv::parse_double(cells[1], path.string(), l + 1, "g"));
    }
    const auto fit = fit_bounded_diffusion(cs, gs);
    json j;
    j["model"] = "g(c) = lambda * sqrt((c - c_min) * (c_max - c))";
    j["lambda"] = fit.lambda;
    j["c_min"] = fit.c_min;
    j["c_max"] = fit.c_max;
    j["t0"] = fit.t0;
    j["rms_residual"] = fit.residual;
    j["iterations"] = fit.iterations;
    j["points"] = fit.points;
    write_text(out_path(c, kDiffusionFit), j.dump(2));
    return std::vector<Artifact>{{"diffusion", kDiffusionFit}};
  });
}

std::vector<Artifact> stage_report(const RunConfig& c) {
  return run_stage("report", [&] {
    const auto cbar = csv::read_series(require(c, kMeanCorrelation, "correlate"));
    const auto lmax = csv::read_series(require(c, kLambdaMax, "correlate"));
    const auto summary = read_json(require(c, kCorrelationSummary, "correlate"));
    json report;
    report["windows"] = summary.at("windows");
    report["instruments"] = summary.at("instruments");
    report["dimension"] = summary.at("dimension");
    const auto kappa = kappa_estimate(lmax.values, cbar.values);
    report["kappa_ratio"] = kappa.ratio;
    report["pearson_lambda_max_cbar"] = kappa.pearson;
    const fs::path pca_path = out_path(c, kPcaVariances);
    if (fs::exists(pca_path)) {
      const auto lines = csv::read_lines(pca_path);
      if (lines.size() >= 3) {
        const double v1 = csv::parse_double(csv::split(lines[1]).at(1), pca_path.string(), 2, "variance");
        const double v2 = csv::parse_double(csv::split(lines[2]).at(1), pca_path.string(), 3, "variance");
        report["pca_variance_ratio_1_2"] = v2 > 0.0 ? v1 / v2 : 0.0;
      }
    }
    const fs::path states_path = out_path(c, kStates);
    if (fs::exists(states_path)) {
      const auto assign = read_states(states_path, cbar);
      report["state_count"] = assign.state_count();
      json states = json::array();
      for (const auto& s : assign.states) {
        states.push_back({{"state", s.label}, {"class", to_string(s.state_class)}, {"days", s.days}, {"mean_cbar", s.mean_cbar}});
      }
      report["states"] = states;
    }
    const fs::path fit_path = out_path(c, kDiffusionFit);
    if (fs::exists(fit_path)) {
      const auto fit = read_json(fit_path);
      report["diffusion_fit"] = {{"lambda", fit.at("lambda")}, {"c_min", fit.at("c_min")}, {"c_max", fit.at("c_max")},
                                 {"t0", fit.at("t0")}};
    }
    write_text(out_path(c, kReport), report.dump(2));
    return std::vector<Artifact>{{"report", kReport}};
  });
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot hash '{}'", path.string()));
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof buffer);
    EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

Manifest write_manifest(const RunConfig& c, const std::vector<Artifact>& artifacts, const std::string& failed_stage,
                        const std::string& error) {
  Manifest m;
  m.failed_stage = failed_stage;
  m.error = error;
  const auto& groups = artifact_groups();
  for (const auto& g : groups) {
    for (const auto& a : artifacts) {
      if (a.group == g) m.entries.push_back({a.group, a.file, sha256_file(out_path(c, a.file.c_str()))});
    }
  }
  json j;
  j["hash"] = "sha256";
  j["status"] = failed_stage.empty() ? "ok" : "failed";
  if (!failed_stage.empty()) {
    j["failed_stage"] = failed_stage;
    j["error"] = error;
  }
  json files = json::array();
  for (const auto& e : m.entries) files.push_back({{"group", e.group}, {"file", e.file}, {"sha256", e.sha256}});
  j["artifacts"] = files;
  ensure_output_dir(c);
  write_text(out_path(c, kManifest), j.dump(2));
  return m;
}

Manifest run_pipeline(const RunConfig& c) {
  std::vector<Artifact> all;
  auto append = [&](std::vector<Artifact> produced) { all.insert(all.end(), produced.begin(), produced.end()); };
  try {
    append(stage_ingest(c));
    append(stage_correlate(c));
    append(stage_pca(c));
    append(stage_cluster(c));
    append(stage_estimate(c));
    append(stage_fitdiff(c));
    append(stage_report(c));
  } catch (const StageError& e) {
    try {
      write_manifest(c, all, e.stage(), e.what());
    } catch (const Error&) {
      // The output directory itself is unusable; report the stage error.
    }
    throw;
  }
  return write_manifest(c, all);
}

}  // namespace corrdyn
