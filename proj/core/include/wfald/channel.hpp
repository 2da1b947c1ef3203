#pragma once

// Analog multiple-access uplink: uncoded transmission with channel-inversion
// power control, superposition with additive Gaussian noise, and receiver
// scaling by K * alpha.

#include "wfald/model.hpp"
#include "wfald/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace wfald {

enum class GainModel { constant, rayleigh };

struct ChannelConfig {
  double P = 1.0;   // per-block power budget
  double N0 = 0.0;  // noise variance per channel use
  std::size_t d = 1;
  GainModel gain_model = GainModel::constant;
  double gain_value = 1.0;  // constant gain, or Rayleigh scale

  // SNR = P / (d N0); +inf when N0 == 0.
  double snr() const;
  // N0 = P / (d * 10^(snr_db/10)); snr_db = +inf gives a noiseless channel.
  static ChannelConfig from_snr_db(double snr_db, std::size_t d, double P = 1.0);
};

enum class PowerPolicy {
  langevin,   // min{sqrt(N0 / (2 eta K)), inversion cap}
  inversion,  // inversion cap only (frequentist over-the-air FedAvg)
};

struct ChannelRound {
  std::size_t s = 0;
  std::vector<double> gains;
  std::vector<double> payload_norms;
  Vector noise;  // z^[s]
  double alpha = 0.0;
  double beta = 0.0;
  double noise_var = 0.0;  // variance of z / (alpha K) per coordinate
  double snr = 0.0;
  bool power_limited = false;
  bool noiseless_limit = false;
};

Vector transmit_signal(const Vector& theta_k, const Vector& sgrad_k, double eta, double alpha_k);

// min_k sqrt(P) |h_k| / |payload_k|, ignoring zero payloads. +inf if every
// payload is zero.
double inversion_cap(std::span<const Vector> payloads, std::span<const double> gains, double P);

// alpha = min{ sqrt(N0 / (2 eta K)), inversion_cap }.
double power_gain(std::span<const Vector> payloads, std::span<const double> gains, double P, double N0,
                  double eta, std::size_t K);

// beta = max{0, N0 / (alpha K)^2 - 2 eta / K}.
double residual_noise(double N0, double alpha, double eta, std::size_t K);

// y = sum_k h_k x_k + z with z ~ N(0, N0 I); z is recorded in round.noise.
Vector noma_superpose(std::span<const Vector> signals, std::span<const double> gains, RandomStream& rng,
                      double N0, ChannelRound& round);

// y / (K alpha).
Vector receive_aggregate(const Vector& y, double alpha, std::size_t K);

// |x_k|^2 <= P per device; the comparison allows a few ulps of rounding.
std::vector<bool> check_power(std::span<const Vector> signals, double P);
// Throws ProtocolError naming the first violating device and the round.
void enforce_power(std::span<const Vector> signals, double P, std::size_t s);

std::vector<double> draw_gains(const ChannelConfig& config, std::size_t K, RandomStream& rng);

// Throws ProtocolError if some |h_k| < 1e-6 * median |h|.
void guard_gains(std::span<const double> gains, std::size_t s);

struct WirelessAggregate {
  Vector aggregate;
  ChannelRound round;
};

// Full uplink round on the devices' payloads theta_k - eta * grad_k.
//
// With the langevin policy and N0 == 0 the channel contributes no noise;
// the round then runs at the inversion cap and the Langevin term
// sqrt(2 eta / K) * w is added with w ~ N(0, I) from the channel stream,
// which is the N0 -> 0 limit of the noisy round (alpha -> 0, noise variance
// after scaling -> 2 eta / K).
WirelessAggregate wireless_round(std::span<const Vector> payloads, std::span<const double> gains,
                                 const ChannelConfig& config, double eta, std::size_t K, PowerPolicy policy,
                                 RandomStream& channel_rng, std::size_t s);

}  // namespace wfald
