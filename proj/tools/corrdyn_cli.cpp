// corrdyn: market-state detection and Langevin dynamics of the mean
// correlation coefficient. Run `corrdyn --help` for the subcommands.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "corrdyn/config.hpp"
#include "corrdyn/csv_io.hpp"
#include "corrdyn/error.hpp"
#include "corrdyn/market_sim.hpp"
#include "corrdyn/pipeline.hpp"
#include "corrdyn/sde_sim.hpp"

namespace {

using corrdyn::RunConfig;

const std::vector<std::string> kConfigKeys = {
    "input",          "input_format",     "output_dir",      "normalization_window", "correlation_window",
    "correlation_step", "cluster_threshold", "seed",          "cluster_restarts",     "km_bins",
    "taus",           "slide_window",     "slide_step",      "merges",               "min_state_days",
    "pca_components", "pca_assets",       "pca_centered",    "export_matrices",      "histogram_bins"};

// Flags shared by every stage: --config plus one flag per config key.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    for (const auto& key : kConfigKeys) {
      std::string flag = "--" + key;
      for (auto& ch : flag) {
        if (ch == '_') ch = '-';
      }
      app->add_option_function<std::string>(flag, [this, key](const std::string& v) { overrides[key] = v; },
                                            "overrides config key '" + key + "'");
    }
  }

  RunConfig resolve() const {
    RunConfig config = config_file.empty() ? RunConfig{} : corrdyn::load_config(config_file);
    for (const auto& [key, value] : overrides) corrdyn::set_config_value(config, key, value);
    config.validate();
    return config;
  }
};

void print_artifacts(const std::vector<corrdyn::Artifact>& artifacts, const RunConfig& config) {
  for (const auto& a : artifacts) {
    std::cout << (std::filesystem::path(config.output_dir) / a.file).string() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corrdyn: quasi-stationary market states and Langevin dynamics of the mean correlation"};
  app.require_subcommand(1);

  std::vector<ConfigFlags> flags(10);
  std::size_t next_flags = 0;
  auto stage = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    flags[next_flags].attach(sub);
    return std::pair{sub, &flags[next_flags++]};
  };

  // simulate
  CLI::App* simulate = app.add_subcommand("simulate", "simulate an SDE path (and optionally a price panel)");
  std::string model_name = "ou";
  std::vector<std::string> model_params;
  std::size_t steps = 100000;
  double x0_value = std::numeric_limits<double>::quiet_NaN();
  double dt = 1.0;
  std::size_t record_every = 1;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "path.csv";
  long market_size = 0;
  std::string market_out = "prices.csv";
  std::string start_date = "2000-01-03";
  simulate->add_option("--model", model_name, "ou | bounded_corr | double_well")->capture_default_str();
  simulate->add_option("--param", model_params, "model parameter key=value (repeatable)");
  simulate->add_option("--steps", steps, "Euler-Maruyama steps")->capture_default_str();
  simulate->add_option("--x0", x0_value, "start value (default: model center)");
  simulate->add_option("--dt", dt, "time step in trading days")->capture_default_str();
  simulate->add_option("--record-every", record_every, "keep every n-th state")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "random seed")->capture_default_str();
  simulate->add_option("--out", sim_out, "path CSV (date,value)")->capture_default_str();
  simulate->add_option("--market", market_size, "also write a K-instrument price panel driven by the path");
  simulate->add_option("--market-out", market_out, "price panel CSV")->capture_default_str();
  simulate->add_option("--start-date", start_date, "first synthetic trading day")->capture_default_str();

  auto [ingest, ingest_flags] = stage("ingest", "load prices, compute and locally normalize returns");
  auto [correlate, correlate_flags] = stage("correlate", "rolling correlation matrices, mean correlation, lambda_max");
  auto [pca_cmd, pca_flags] = stage("pca", "principal components of the correlation vectors");
  auto [cluster, cluster_flags] = stage("cluster", "bisecting k-means market states, steps and increments");
  auto [estimate, estimate_flags] = stage("estimate", "drift, diffusion and potentials of the mean correlation");
  std::string series_input;
  estimate->add_option("--series", series_input, "estimate on this date,value CSV instead of mean_correlation.csv")
      ->check(CLI::ExistingFile);
  auto [fitdiff, fitdiff_flags] = stage("fitdiff", "fit the bounded diffusion model to pooled window estimates");
  auto [report, report_flags] = stage("report", "summary JSON of all stages");
  auto [run, run_flags] = stage("run", "run every stage and write manifest.json");
  auto [config_cmd, config_flags] = stage("config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : corrdyn::exit_code(corrdyn::ErrorKind::kConfig);
  }

  try {
    if (simulate->parsed()) {
      std::map<std::string, double> params;
      for (const auto& kv : model_params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw corrdyn::ConfigError(fmt::format("--param '{}' is not key=value", kv));
        try {
          params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
          throw corrdyn::ConfigError(fmt::format("--param '{}' has a non-numeric value", kv));
        }
      }
      const auto model = corrdyn::preset_model(model_name, params);
      double x0 = x0_value;
      if (std::isnan(x0)) {
        if (model.bounds) {
          x0 = 0.5 * (model.bounds->lower + model.bounds->upper);
        } else if (model_name == "ou") {
          x0 = params.count("mu") ? params["mu"] : 0.3;
        } else {
          x0 = 0.0;
        }
      }
      const auto path = corrdyn::euler_maruyama(model, x0, dt, steps, sim_seed, record_every);
      const auto series = corrdyn::to_series(path, start_date);
      corrdyn::csv::write_series(sim_out, series);
      std::cout << sim_out << '\n';
      if (market_size > 0) {
        corrdyn::FactorMarketOptions opts;
        opts.instruments = market_size;
        opts.seed = sim_seed + 1;
        opts.start_date = start_date;
        // Day t returns use the correlation of path value t.
        const std::vector<double> target(path.values.begin(), path.values.end() - 1);
        corrdyn::write_prices(market_out, corrdyn::simulate_correlation_market(target, opts));
        std::cout << market_out << '\n';
      }
      return 0;
    }
    if (ingest->parsed()) {
      const auto c = ingest_flags->resolve();
      print_artifacts(corrdyn::stage_ingest(c), c);
    } else if (correlate->parsed()) {
      const auto c = correlate_flags->resolve();
      print_artifacts(corrdyn::stage_correlate(c), c);
    } else if (pca_cmd->parsed()) {
      const auto c = pca_flags->resolve();
      print_artifacts(corrdyn::stage_pca(c), c);
    } else if (cluster->parsed()) {
      const auto c = cluster_flags->resolve();
      print_artifacts(corrdyn::stage_cluster(c), c);
    } else if (estimate->parsed()) {
      const auto c = estimate_flags->resolve();
      std::optional<std::filesystem::path> series;
      if (!series_input.empty()) series = series_input;
      print_artifacts(corrdyn::stage_estimate(c, series), c);
    } else if (fitdiff->parsed()) {
      const auto c = fitdiff_flags->resolve();
      print_artifacts(corrdyn::stage_fitdiff(c), c);
    } else if (report->parsed()) {
      const auto c = report_flags->resolve();
      print_artifacts(corrdyn::stage_report(c), c);
    } else if (run->parsed()) {
      const auto c = run_flags->resolve();
      const auto manifest = corrdyn::run_pipeline(c);
      for (const auto& e : manifest.entries) std::cout << e.sha256 << "  " << e.group << '/' << e.file << '\n';
    } else if (config_cmd->parsed()) {
      std::cout << corrdyn::format_config(config_flags->resolve());
    }
  } catch (const corrdyn::Error& e) {
    std::cerr << "corrdyn: " << e.what() << '\n';
    return corrdyn::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "corrdyn: unexpected failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
