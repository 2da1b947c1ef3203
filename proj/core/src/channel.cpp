#include "wfald/channel.hpp"

#include "wfald/errors.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace wfald {

double ChannelConfig::snr() const {
  if (N0 == 0.0) return std::numeric_limits<double>::infinity();
  return P / (static_cast<double>(d) * N0);
}

ChannelConfig ChannelConfig::from_snr_db(double snr_db, std::size_t d, double P) {
  if (!(P > 0.0)) throw std::invalid_argument("ChannelConfig: P must be > 0");
  if (d == 0) throw std::invalid_argument("ChannelConfig: d must be >= 1");
  ChannelConfig config;
  config.P = P;
  config.d = d;
  config.N0 = std::isinf(snr_db) && snr_db > 0 ? 0.0
                                               : P / (static_cast<double>(d) * std::pow(10.0, snr_db / 10.0));
  return config;
}

Vector transmit_signal(const Vector& theta_k, const Vector& sgrad_k, double eta, double alpha_k) {
  if (!(alpha_k > 0.0)) throw std::invalid_argument("transmit_signal: alpha_k must be > 0");
  return alpha_k * (theta_k - eta * sgrad_k);
}

double inversion_cap(std::span<const Vector> payloads, std::span<const double> gains, double P) {
  double cap = std::numeric_limits<double>::infinity();
  const double root_p = std::sqrt(P);
  for (std::size_t k = 0; k < payloads.size(); ++k) {
    const double norm = payloads[k].norm();
    if (norm == 0.0) continue;
    cap = std::min(cap, root_p * std::abs(gains[k]) / norm);
  }
  return cap;
}

double power_gain(std::span<const Vector> payloads, std::span<const double> gains, double P, double N0,
                  double eta, std::size_t K) {
  if (payloads.size() != gains.size()) throw std::invalid_argument("power_gain: one gain per payload");
  const double langevin = std::sqrt(N0 / (2.0 * eta * static_cast<double>(K)));
  return std::min(langevin, inversion_cap(payloads, gains, P));
}

double residual_noise(double N0, double alpha, double eta, std::size_t K) {
  const double ka = alpha * static_cast<double>(K);
  return std::max(0.0, N0 / (ka * ka) - 2.0 * eta / static_cast<double>(K));
}

Vector noma_superpose(std::span<const Vector> signals, std::span<const double> gains, RandomStream& rng,
                      double N0, ChannelRound& round) {
  if (signals.empty()) throw std::invalid_argument("noma_superpose: no signals");
  const auto d = signals.front().size();
  Vector y = Vector::Zero(d);
  for (std::size_t k = 0; k < signals.size(); ++k) {
    if (signals[k].size() != d) throw std::invalid_argument("noma_superpose: signal length mismatch");
    y.noalias() += gains[k] * signals[k];
  }
  round.noise = Vector::Zero(d);
  if (N0 > 0.0) {
    rng.normal(round.noise);
    round.noise *= std::sqrt(N0);
    y += round.noise;
  }
  return y;
}

Vector receive_aggregate(const Vector& y, double alpha, std::size_t K) {
  if (!(alpha > 0.0)) throw std::invalid_argument("receive_aggregate: alpha must be > 0");
  return y / (static_cast<double>(K) * alpha);
}

std::vector<bool> check_power(std::span<const Vector> signals, double P) {
  const double limit = P * (1.0 + 8.0 * DBL_EPSILON);
  std::vector<bool> ok(signals.size());
  for (std::size_t k = 0; k < signals.size(); ++k) ok[k] = signals[k].squaredNorm() <= limit;
  return ok;
}

void enforce_power(std::span<const Vector> signals, double P, std::size_t s) {
  const auto ok = check_power(signals, P);
  for (std::size_t k = 0; k < ok.size(); ++k) {
    if (!ok[k]) {
      throw ProtocolError("power constraint violated by device " + std::to_string(k) + " in round " +
                          std::to_string(s) + ": |x|^2 = " + std::to_string(signals[k].squaredNorm()) +
                          " > P = " + std::to_string(P));
    }
  }
}

std::vector<double> draw_gains(const ChannelConfig& config, std::size_t K, RandomStream& rng) {
  std::vector<double> gains(K, config.gain_value);
  if (config.gain_model == GainModel::rayleigh) {
    for (auto& h : gains) {
      const double a = rng.normal();
      const double b = rng.normal();
      h = config.gain_value * std::sqrt(a * a + b * b);
    }
  }
  return gains;
}

void guard_gains(std::span<const double> gains, std::size_t s) {
  std::vector<double> mags(gains.size());
  std::transform(gains.begin(), gains.end(), mags.begin(), [](double h) { return std::abs(h); });
  std::vector<double> sorted = mags;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (std::size_t k = 0; k < mags.size(); ++k) {
    if (!(mags[k] >= 1e-6 * median) || mags[k] == 0.0) {
      throw ProtocolError("near-zero channel gain for device " + std::to_string(k) + " in round " +
                          std::to_string(s));
    }
  }
}

WirelessAggregate wireless_round(std::span<const Vector> payloads, std::span<const double> gains,
                                 const ChannelConfig& config, double eta, std::size_t K, PowerPolicy policy,
                                 RandomStream& channel_rng, std::size_t s) {
  if (payloads.size() != K || gains.size() != K) {
    throw std::invalid_argument("wireless_round: expected one payload and one gain per device");
  }
  guard_gains(gains, s);

  WirelessAggregate out;
  ChannelRound& round = out.round;
  round.s = s;
  round.gains.assign(gains.begin(), gains.end());
  round.payload_norms.resize(K);
  for (std::size_t k = 0; k < K; ++k) round.payload_norms[k] = payloads[k].norm();
  round.snr = config.snr();

  const double cap = inversion_cap(payloads, gains, config.P);
  const double free_cap = std::isfinite(cap) ? cap : 1.0;
  if (policy == PowerPolicy::langevin && config.N0 > 0.0) {
    const double langevin = std::sqrt(config.N0 / (2.0 * eta * static_cast<double>(K)));
    round.power_limited = cap < langevin;
    round.alpha = std::min(langevin, cap);
  } else {
    round.noiseless_limit = policy == PowerPolicy::langevin;
    round.power_limited = std::isfinite(cap);
    round.alpha = free_cap;
  }

  std::vector<Vector> signals(K);
  for (std::size_t k = 0; k < K; ++k) signals[k] = (round.alpha / gains[k]) * payloads[k];
  enforce_power(signals, config.P, s);

  const Vector y = noma_superpose(signals, gains, channel_rng, config.N0, round);
  out.aggregate = receive_aggregate(y, round.alpha, K);

  const double ka = round.alpha * static_cast<double>(K);
  if (round.noiseless_limit) {
    const Vector w = channel_rng.normal_vector(y.size());
    out.aggregate += std::sqrt(2.0 * eta / static_cast<double>(K)) * w;
    round.beta = 0.0;
    round.noise_var = 2.0 * eta / static_cast<double>(K);
  } else {
    // With the power constraint slack the receiver noise is exactly the
    // Langevin variance, so beta vanishes identically.
    round.beta = config.N0 > 0.0 && round.power_limited ? residual_noise(config.N0, round.alpha, eta, K) : 0.0;
    round.noise_var = config.N0 / (ka * ka);
  }
  return out;
}

}  // namespace wfald
