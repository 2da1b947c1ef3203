#pragma once

// Sweeps over (algorithm, p_c, SNR) grids, replicate aggregation, CSV/JSON
// persistence and plot-ready tables.
//
// Output files (schema version 1):
//   summary.csv     one row per grid point, replicate mean and standard error
//   iterations.csv  one row per grid point and iteration s = 0..S
//   manifest.json   config hash, seed derivation and every replicate seed
//   config.cfg      the fully resolved config

#include "wfald/config.hpp"
#include "wfald/protocol.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace wfald {

inline constexpr int kSchemaVersion = 1;

struct Stat {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

Stat mean_and_se(const std::vector<double>& values);

struct IterationRow {
  std::size_t s = 0;
  double mse = 0.0;           // instantaneous (1/K) sum_k |theta_k^[s] - mu_p|^2, replicate mean
  double w2_sq = 0.0;         // W2^2 between the replicate law of the device average and the posterior
  double bound = 0.0;         // bound with per-round beta^[j]
  double bound_literal = 0.0; // bound with a constant beta^[s] inside the sum
  double v_theta = 0.0;
  double v_c = 0.0;
  double v_c_bound = 0.0;
  double v_theta_bound = 0.0;
  double beta = 0.0;   // mean over replicates that aggregated at s
  double alpha = 0.0;
  double agg_rate = 0.0;
};

struct GridRow {
  Algorithm algorithm = Algorithm::wfald;
  double p_c = 1.0;
  double snr_db = 0.0;
  std::size_t replicates = 0;
  Stat mse, test_error_ensemble, test_error_frequentist, v_theta, v_c, beta, alpha;
  double v_c_bound = 0.0;  // with the measured iteration-averaged V_theta
  double v_theta_bound = 0.0;
  std::size_t wireless_rounds = 0;
  std::size_t power_checks = 0;
  std::size_t power_violations = 0;
  std::vector<IterationRow> iterations;
};

struct SweepResult {
  SweepSpec spec;
  RegularityConstants constants;
  std::vector<GridRow> rows;
  std::uint64_t config_hash = 0;
};

std::uint64_t config_hash(const SweepSpec& spec);

// Aggregates one grid point's replicates. Keeps per-iteration rows.
GridRow aggregate(const RunConfig& config, const Problem& problem, const std::vector<ReplicateResult>& reps);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// Runs every grid point; work is spread over spec.base.workers threads at
// replicate granularity. Results do not depend on the worker count. A failed
// run aborts the sweep with a ProtocolError naming the grid point and seed.
SweepResult run_sweep(const SweepSpec& spec, const ProgressFn& progress = {});

// Writes summary.csv, iterations.csv, manifest.json and config.cfg.
void write_sweep(const SweepResult& result, const std::filesystem::path& dir);

// Reads summary.csv (and config.cfg when present) back. Iteration rows are not loaded.
SweepResult load_sweep(const std::filesystem::path& dir);

enum class Figure { pc_curve, snr_curve, baseline_compare };

std::string_view to_string(Figure f);
Figure parse_figure(std::string_view name);

struct PlotPoint {
  double x = 0.0;
  std::string series;
  double y_mean = 0.0;
  double y_stderr = 0.0;
};

// Long-format table for one figure:
//   pc_curve          x = p_c, one series per SNR, y = MSE of WFALD
//   snr_curve         x = SNR, one series per p_c, y = MSE of WFALD
//   baseline_compare  x = SNR, WFALD ensemble vs WFedAvg last-iterate test error
// Throws ConfigError when the result lacks the needed rows.
std::vector<PlotPoint> plot_table(const SweepResult& result, Figure figure);

// Writes <dir>/fig_<name>.csv and returns its path.
// Long-format per-round channel diagnostics of one replicate: one row per
// (round, device) with alpha, beta, noise variance, SNR, power-limit flag,
// gain and payload norm.
void write_channel_log(const ReplicateResult& replicate, const std::filesystem::path& file);

std::filesystem::path emit_plotdata(const SweepResult& result, Figure figure, const std::filesystem::path& dir);

}  // namespace wfald
