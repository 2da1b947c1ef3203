#include "wfald/protocol.hpp"

#include "wfald/errors.hpp"
#include "wfald/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace wfald {

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::wfald: return "WFALD";
    case Algorithm::fald: return "FALD";
    case Algorithm::sgld: return "SGLD";
    case Algorithm::wfedavg: return "WFedAvg";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "wfald") return Algorithm::wfald;
  if (lower == "fald") return Algorithm::fald;
  if (lower == "sgld") return Algorithm::sgld;
  if (lower == "wfedavg") return Algorithm::wfedavg;
  throw ConfigError("algorithm", "unknown algorithm '" + std::string(name) + "'");
}

Vector RunConfig::default_theta_star() {
  Vector v(5);
  v << -0.0615, -1.6057, 1.7629, 1.0240, -1.5902;
  return v;
}

void RunConfig::validate() const {
  if (K == 0) throw ConfigError("run.K", "must be >= 1");
  if (d == 0) throw ConfigError("run.d", "must be >= 1");
  if (N == 0) throw ConfigError("run.N", "must be >= 1");
  if (K > N) throw ConfigError("run.K", "exceeds run.N");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("run.eta", "must be > 0");
  if (!(p_c > 0.0 && p_c <= 1.0)) throw ConfigError("run.p_c", "must lie in (0, 1]");
  if (!(p_b > 0.0 && p_b <= 1.0)) throw ConfigError("run.p_b", "must lie in (0, 1]");
  if (S == 0) throw ConfigError("run.S", "must be >= 1");
  if (!(S_b < S)) throw ConfigError("run.S_b", "must be < run.S");
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ConfigError("channel.snr_db", "must be a number or inf");
  }
  if (!(P > 0.0)) throw ConfigError("channel.P", "must be > 0");
  if (!(gain_value > 0.0)) throw ConfigError("channel.gain", "must be > 0");
  if (replicates == 0) throw ConfigError("run.replicates", "must be >= 1");
  if (!(region_radius_sd > 0.0)) throw ConfigError("model.region_radius_sd", "must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("model.noise_std", "must be >= 0");
  if (theta_star.size() != static_cast<Eigen::Index>(d)) {
    throw ConfigError("model.theta_star", "length must equal run.d");
  }
  if (test_per_device == 0) throw ConfigError("model.test_per_device", "must be >= 1");
  if (tau_override && !(*tau_override >= 0.0 && *tau_override <= 1.0)) {
    throw ConfigError("run.tau", "must lie in [0, 1]");
  }
  if (thinning == 0) throw ConfigError("run.thinning", "must be >= 1");
}

bool RunConfig::forced_final_aggregation() const {
  switch (final_aggregation) {
    case FinalAggregation::on: return algorithm != Algorithm::sgld;
    case FinalAggregation::off: return false;
    case FinalAggregation::automatic: return algorithm == Algorithm::wfedavg;
  }
  return false;
}

ChannelConfig RunConfig::channel() const {
  ChannelConfig c = ChannelConfig::from_snr_db(snr_db, d, P);
  c.gain_model = gain_model;
  c.gain_value = gain_value;
  return c;
}

Problem make_problem(const RunConfig& config) {
  config.validate();
  Problem p;
  RandomStream data_rng = make_stream(config.data_seed, StreamTag::data);
  p.data = generate_synthetic(config.N, config.d, config.theta_star, config.noise_std, data_rng);
  p.shards = partition_even(p.data, config.K);

  RandomStream test_rng = make_stream(config.data_seed, StreamTag::test_set);
  const Dataset test =
      generate_synthetic(config.K * config.test_per_device, config.d, config.theta_star, config.noise_std, test_rng);
  p.test_sets = partition_even(test, config.K);

  p.posterior = exact_posterior(p.data);
  p.cost = global_cost(p.data);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p.posterior.covariance, Eigen::EigenvaluesOnly);
  const double radius = config.region_radius_sd * std::sqrt(eig.eigenvalues().maxCoeff());
  p.constants = measure_constants(p.shards, config.K, radius, config.p_b, p.posterior.mean);
  return p;
}

std::uint64_t replicate_seed(std::uint64_t master_seed, std::size_t replicate) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(StreamTag::replicate), replicate});
}

namespace {

std::uint64_t digest_batch(std::uint64_t h, std::span<const std::size_t> batch) {
  for (std::size_t i : batch) h = splitmix64(h ^ i);
  return h;
}

void summarize(const RunConfig& config, const Problem& problem, ReplicateResult& r) {
  auto& m = r.metrics;
  const std::size_t S = config.S;
  m.mse = mse_metric(r.particles, config.S_b, problem.posterior.mean);
  m.test_error_ensemble = predictive_error(r.particles, config.S_b, problem.test_sets, PredictorMode::ensemble);
  m.test_error_frequentist = predictive_error(r.particles, config.S_b, problem.test_sets, PredictorMode::frequentist);
  if (!r.v_theta.empty()) {
    double vt = 0.0, vc = 0.0;
    for (std::size_t s = 0; s < r.v_theta.size(); ++s) {
      vt += r.v_theta[s];
      vc += r.v_c[s];
    }
    m.v_theta_mean = vt / static_cast<double>(r.v_theta.size());
    m.v_c_mean = vc / static_cast<double>(r.v_c.size());
  }
  if (r.wireless_rounds > 0) {
    double b = 0.0, a = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (r.flags[s]) {
        b += r.beta[s];
        a += r.alpha[s];
      }
    }
    m.beta_mean = b / static_cast<double>(r.wireless_rounds);
    m.alpha_mean = a / static_cast<double>(r.wireless_rounds);
  }
}

Trajectory thin(const Trajectory& full, std::size_t stride) {
  const std::size_t snapshots = full.iterations() / stride;
  Trajectory out(snapshots, full.devices(), full.dim());
  for (std::size_t i = 0; i <= snapshots; ++i) {
    for (std::size_t k = 0; k < full.devices(); ++k) out.at(i, k) = full.at(i * stride, k);
  }
  return out;
}

}  // namespace

ReplicateResult run_replicate(const RunConfig& config, const Problem& problem, std::size_t replicate) {
  config.validate();
  const bool centralized = config.algorithm == Algorithm::sgld;
  const bool wireless = config.algorithm == Algorithm::wfald || config.algorithm == Algorithm::wfedavg;

  std::vector<LocalDataset> whole;
  std::span<const LocalDataset> shards = problem.shards;
  if (centralized) {
    whole.push_back(LocalDataset{0, problem.data.covariates, problem.data.targets});
    shards = whole;
  }
  const std::size_t devices_n = shards.size();
  const std::size_t prior_split = centralized ? 1 : config.K;
  const auto d = static_cast<Eigen::Index>(config.d);
  const std::size_t S = config.S;

  ReplicateResult r;
  r.index = replicate;
  r.seed = replicate_seed(config.master_seed, replicate);
  r.stride = config.thinning;

  SharedRandomness shared = SharedRandomness::from_seed(r.seed);
  RandomStream channel_rng = make_stream(r.seed, StreamTag::channel, 0);
  RandomStream gain_rng = make_stream(r.seed, StreamTag::channel, 1);
  const ChannelConfig channel = config.channel();
  const PowerPolicy policy =
      config.algorithm == Algorithm::wfedavg ? PowerPolicy::inversion : PowerPolicy::langevin;

  std::vector<DeviceState> devices = make_devices(shards, Vector::Zero(d), r.seed);
  RoundWorkspace ws;
  ws.resize(devices_n, d);

  Trajectory traj(S, devices_n, config.d);
  auto snapshot = [&](std::size_t s) {
    for (const auto& dev : devices) traj.at(s, dev.k) = dev.theta;
    r.averages.push_back(traj.average(s));
    r.sq_error.push_back(squared_error_at(traj, s, problem.posterior.mean));
  };
  r.averages.reserve(S + 1);
  r.sq_error.reserve(S + 1);
  r.flags.assign(S, 0);
  r.batch_digest.assign(S, 0);
  r.beta.assign(S, 0.0);
  r.alpha.assign(S, 0.0);
  const bool drift = config.record_drift && !centralized;
  if (drift) {
    r.v_theta.assign(S, 0.0);
    r.v_c.assign(S, 0.0);
  }
  snapshot(0);

  std::vector<Vector> thetas(devices_n);
  const double noise_scale = std::sqrt(2.0 * config.eta);

  for (std::size_t s = 0; s < S; ++s) {
    const bool forced = config.forced_final_aggregation() && s + 1 == S;

    if (config.algorithm == Algorithm::fald) {
      if (drift) {
        for (const auto& dev : devices) thetas[dev.k] = dev.theta;
      }
      FaldParams params{config.eta, config.p_b, config.p_c, config.K, config.tau_override};
      params.force_aggregation = forced;
      const FaldRoundOutcome outcome = fald_round(devices, shards, params, shared, s, ws);
      r.flags[s] = outcome.aggregated ? 1 : 0;
      if (drift) {
        const DriftMeasurement dm = client_drift(thetas, ws.grads, problem.cost);
        r.v_theta[s] = dm.v_theta;
        r.v_c[s] = dm.v_c;
      }
    } else {
      bool flag = true;
      if (!centralized) flag = draw_round_flag(shared, config.p_c) || forced;
      r.flags[s] = flag ? 1 : 0;

      compute_payloads(devices, shards, config.eta, config.p_b, prior_split, ws);
      if (drift) {
        for (const auto& dev : devices) thetas[dev.k] = dev.theta;
        const DriftMeasurement dm = client_drift(thetas, ws.grads, problem.cost);
        r.v_theta[s] = dm.v_theta;
        r.v_c[s] = dm.v_c;
      }

      if (wireless && flag) {
        const std::vector<double> gains = draw_gains(channel, devices_n, gain_rng);
        WirelessAggregate agg =
            wireless_round(ws.payloads, gains, channel, config.eta, config.K, policy, channel_rng, s);
        ++r.wireless_rounds;
        r.power_checks += devices_n;
        r.beta[s] = agg.round.beta;
        r.alpha[s] = agg.round.alpha;
        for (auto& dev : devices) {
          dev.theta = agg.aggregate;
          ensure_finite(dev.theta, dev.k, s);
        }
        if (config.record_channel_log) r.channel_log.push_back(std::move(agg.round));
      } else {
        for (auto& dev : devices) {
          dev.theta = ws.payloads[dev.k];
          if (config.algorithm != Algorithm::wfedavg) {
            dev.noise_rng.normal(ws.scratch);
            dev.theta += noise_scale * ws.scratch;
          }
          ensure_finite(dev.theta, dev.k, s);
        }
      }
    }
    std::uint64_t h = s;
    for (const auto& dev : devices) h = digest_batch(h, dev.sampler.last_batch());
    r.batch_digest[s] = h;
    r.forced_final = r.forced_final || forced;
    snapshot(s + 1);
  }

  r.particles = std::move(traj);
  summarize(config, problem, r);
  if (config.thinning > 1) r.particles = thin(r.particles, config.thinning);
  return r;
}

RunResult run(const RunConfig& config, const Problem& problem) {
  config.validate();
  RunResult result;
  result.config = config;
  result.constants = problem.constants;
  result.replicates.resize(config.replicates);
  parallel_for(config.replicates, config.workers,
               [&](std::size_t i) { result.replicates[i] = run_replicate(config, problem, i); });
  return result;
}

RunResult run_wfald(RunConfig config, const Problem& problem) {
  config.algorithm = Algorithm::wfald;
  return run(config, problem);
}

RunResult run_fald(RunConfig config, const Problem& problem) {
  config.algorithm = Algorithm::fald;
  return run(config, problem);
}

RunResult run_sgld(RunConfig config, const Problem& problem) {
  config.algorithm = Algorithm::sgld;
  return run(config, problem);
}

RunResult run_wfedavg(RunConfig config, const Problem& problem) {
  config.algorithm = Algorithm::wfedavg;
  return run(config, problem);
}

}  // namespace wfald
