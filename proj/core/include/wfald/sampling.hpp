#pragma once

// Langevin kernels: centralized SGLD, tau-correlated FALD noise, the shared
// round schedule and the noiseless federated round.

#include "wfald/model.hpp"
#include "wfald/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace wfald {

// theta - eta * grad + sqrt(2 eta) * noise.
Vector sgld_update(const Vector& theta, const Vector& grad, double eta, const Vector& noise);
// Same, with noise ~ N(0, I) drawn from rng (d normals consumed).
Vector sgld_step(const Vector& theta, const Vector& grad, double eta, RandomStream& rng);

// sqrt(tau / K) * common + sqrt(1 - tau) * private_draw.
Vector mix_noise(double tau, std::size_t K, const Vector& common, const Vector& private_draw);

// Per-device injected noise for one round. `common` is the round's shared
// draw; the device-private draw is taken from device_stream unless tau == 1,
// in which case nothing is consumed. Throws std::invalid_argument for tau
// outside [0, 1].
Vector correlated_noise(double tau, std::size_t K, const Vector& common, RandomStream& device_stream);

// Common randomness known to every device and the server.
struct SharedRandomness {
  std::uint64_t seed = 0;
  RandomStream round_flags;
  RandomStream common_noise;

  static SharedRandomness from_seed(std::uint64_t seed);
};

// B^[s]: true with probability p_c. Every party holding the same seed sees
// the same sequence. p_c must lie in (0, 1].
bool draw_round_flag(SharedRandomness& shared, double p_c);

struct DeviceState {
  std::size_t k = 0;
  Vector theta;
  RandomStream batch_rng;  // mini-batch indices only
  RandomStream noise_rng;  // private Langevin noise only
  BatchSampler sampler;
};

// Device streams derive from the replicate seed by device index. Batches and
// private noise use separate streams so that algorithms with and without
// injected noise draw identical mini-batch sequences.
std::vector<DeviceState> make_devices(std::span<const LocalDataset> shards, const Vector& theta0,
                                      std::uint64_t seed);

struct FaldParams {
  double eta = 3e-3;
  double p_b = 1.0;
  double p_c = 1.0;
  std::size_t K = 1;
  // When set, this tau is used on every round; otherwise tau = 1 on
  // aggregation rounds and 0 on local rounds.
  std::optional<double> tau_override;
  // Aggregate this round regardless of the drawn flag (the flag is still
  // drawn so the shared stream stays aligned).
  bool force_aggregation = false;
};

// Scratch buffers reused across rounds.
struct RoundWorkspace {
  std::vector<Vector> grads;     // stochastic gradient of each device
  std::vector<Vector> payloads;  // theta_k - eta * grad_k
  Vector common;                 // shared draw of the round (when used)
  Vector scratch;

  void resize(std::size_t K, Eigen::Index d);
};

// Draws each device's mini-batch and fills ws.grads / ws.payloads.
void compute_payloads(std::span<DeviceState> devices, std::span<const LocalDataset> shards, double eta,
                      double p_b, std::size_t K, RoundWorkspace& ws);

// Plain average with the first particle as reference, so K identical
// particles average to exactly that particle.
void average_into(std::span<const Vector> particles, Eigen::Ref<Vector> out);

// Throws ProtocolError naming device and iteration if theta is not finite.
void ensure_finite(const Vector& theta, std::size_t device, std::size_t iteration);

struct FaldRoundOutcome {
  bool aggregated = false;
  std::optional<Vector> aggregate;
};

// One noiseless federated round at iteration s: flag, local update with
// tau-correlated noise, optional averaging.
FaldRoundOutcome fald_round(std::span<DeviceState> devices, std::span<const LocalDataset> shards,
                            const FaldParams& params, SharedRandomness& shared, std::size_t s,
                            RoundWorkspace& ws);

// Dense particle history: theta_k^[s] for s = 0..S, k = 0..K-1.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::size_t iterations, std::size_t devices, std::size_t dim)
      : S_(iterations), K_(devices), d_(dim), data_((iterations + 1) * devices * dim, 0.0) {}

  std::size_t iterations() const { return S_; }
  std::size_t devices() const { return K_; }
  std::size_t dim() const { return d_; }

  Eigen::Map<const Vector> at(std::size_t s, std::size_t k) const {
    return Eigen::Map<const Vector>(data_.data() + offset(s, k), static_cast<Eigen::Index>(d_));
  }
  Eigen::Map<Vector> at(std::size_t s, std::size_t k) {
    return Eigen::Map<Vector>(data_.data() + offset(s, k), static_cast<Eigen::Index>(d_));
  }
  // Device average at iteration s.
  Vector average(std::size_t s) const;

  const std::vector<double>& raw() const { return data_; }

 private:
  std::size_t offset(std::size_t s, std::size_t k) const { return (s * K_ + k) * d_; }

  std::size_t S_ = 0, K_ = 0, d_ = 0;
  std::vector<double> data_;
};

}  // namespace wfald
