#pragma once

// Full training runs: the wireless sampler (WFALD), its noiseless reference
// (FALD), centralized SGLD and frequentist over-the-air FedAvg.

#include "wfald/analysis.hpp"
#include "wfald/channel.hpp"
#include "wfald/model.hpp"
#include "wfald/sampling.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wfald {

enum class Algorithm { wfald, fald, sgld, wfedavg };

std::string_view to_string(Algorithm a);
// Case-insensitive; throws ConfigError on unknown names.
Algorithm parse_algorithm(std::string_view name);

enum class FinalAggregation { automatic, on, off };

struct RunConfig {
  Algorithm algorithm = Algorithm::wfald;
  std::size_t K = 30;
  std::size_t d = 5;
  std::size_t N = 1200;
  double eta = 3e-3;
  double p_c = 0.5;
  double p_b = 0.4;
  std::size_t S = 200;
  std::size_t S_b = 100;
  double snr_db = 40.0;  // +inf: noiseless channel
  double P = 1.0;
  GainModel gain_model = GainModel::constant;
  double gain_value = 1.0;
  std::uint64_t master_seed = 1;
  std::uint64_t data_seed = 20240101;
  std::size_t replicates = 100;
  double region_radius_sd = 5.0;  // radius of the ball for G, in posterior std devs
  double noise_std = 1.0;
  Vector theta_star = default_theta_star();
  std::size_t test_per_device = 500;
  std::optional<double> tau_override;  // noiseless FALD only
  FinalAggregation final_aggregation = FinalAggregation::automatic;
  bool record_drift = true;
  bool record_channel_log = true;
  std::size_t thinning = 1;  // stride of retained particle snapshots
  std::size_t workers = 1;

  static Vector default_theta_star();

  // Throws ConfigError naming the offending key.
  void validate() const;
  bool forced_final_aggregation() const;
  ChannelConfig channel() const;
};

struct Problem {
  Dataset data;
  std::vector<LocalDataset> shards;
  std::vector<LocalDataset> test_sets;  // one per device
  GaussianDist posterior;
  QuadraticCost cost;
  RegularityConstants constants;
};

// Synthetic data and test sets from data_seed, posterior, and constants with
// G taken over the ball of region_radius_sd largest posterior std devs
// around the posterior mean.
Problem make_problem(const RunConfig& config);

struct ReplicateMetrics {
  double mse = 0.0;
  double test_error_ensemble = 0.0;
  double test_error_frequentist = 0.0;
  double v_theta_mean = 0.0;
  double v_c_mean = 0.0;
  double beta_mean = 0.0;  // over wireless rounds
  double alpha_mean = 0.0;
};

struct ReplicateResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Trajectory particles;  // snapshots s = 0, stride, 2*stride, ... (full when stride == 1)
  std::size_t stride = 1;
  std::vector<Vector> averages;        // device average, s = 0..S
  std::vector<double> sq_error;        // (1/K) sum_k |theta_k^[s] - mu_p|^2, s = 0..S
  std::vector<std::uint8_t> flags;     // B^[s], s = 0..S-1 (forced rounds included)
  std::vector<std::uint64_t> batch_digest;  // hash of every device's batch at s
  std::vector<double> v_theta;         // measured at theta^[s] before the update, s = 0..S-1
  std::vector<double> v_c;
  std::vector<double> beta;            // 0 on rounds without a wireless aggregation
  std::vector<double> alpha;
  std::vector<ChannelRound> channel_log;
  std::size_t wireless_rounds = 0;
  std::size_t power_checks = 0;  // device transmissions that passed check_power
  bool forced_final = false;
  ReplicateMetrics metrics;
};

struct RunResult {
  RunConfig config;
  RegularityConstants constants;
  std::vector<ReplicateResult> replicates;
};

std::uint64_t replicate_seed(std::uint64_t master_seed, std::size_t replicate);

ReplicateResult run_replicate(const RunConfig& config, const Problem& problem, std::size_t replicate);

// Runs config.replicates replicates on config.workers threads.
RunResult run(const RunConfig& config, const Problem& problem);

RunResult run_wfald(RunConfig config, const Problem& problem);
RunResult run_fald(RunConfig config, const Problem& problem);
RunResult run_sgld(RunConfig config, const Problem& problem);
RunResult run_wfedavg(RunConfig config, const Problem& problem);

}  // namespace wfald
