#include "wfald/sampling.hpp"

#include "wfald/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wfald {

Vector sgld_update(const Vector& theta, const Vector& grad, double eta, const Vector& noise) {
  return theta - eta * grad + std::sqrt(2.0 * eta) * noise;
}

Vector sgld_step(const Vector& theta, const Vector& grad, double eta, RandomStream& rng) {
  if (!(eta > 0.0)) throw std::invalid_argument("sgld_step: eta must be > 0");
  return sgld_update(theta, grad, eta, rng.normal_vector(theta.size()));
}

namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("correlated_noise: tau = " + std::to_string(tau) + " is outside [0, 1]");
  }
}

}  // namespace

Vector mix_noise(double tau, std::size_t K, const Vector& common, const Vector& private_draw) {
  check_tau(tau);
  return std::sqrt(tau / static_cast<double>(K)) * common + std::sqrt(1.0 - tau) * private_draw;
}

Vector correlated_noise(double tau, std::size_t K, const Vector& common, RandomStream& device_stream) {
  check_tau(tau);
  if (tau == 1.0) return std::sqrt(1.0 / static_cast<double>(K)) * common;
  const Vector own = device_stream.normal_vector(common.size());
  if (tau == 0.0) return own;
  return mix_noise(tau, K, common, own);
}

SharedRandomness SharedRandomness::from_seed(std::uint64_t seed) {
  return SharedRandomness{seed, make_stream(seed, StreamTag::round_flags),
                          make_stream(seed, StreamTag::common_noise)};
}

bool draw_round_flag(SharedRandomness& shared, double p_c) {
  if (!(p_c > 0.0 && p_c <= 1.0)) throw std::invalid_argument("draw_round_flag: p_c must lie in (0, 1]");
  // Always consume one uniform so the stream position is independent of p_c.
  return shared.round_flags.bernoulli(p_c);
}

std::vector<DeviceState> make_devices(std::span<const LocalDataset> shards, const Vector& theta0,
                                      std::uint64_t seed) {
  std::vector<DeviceState> devices;
  devices.reserve(shards.size());
  for (std::size_t k = 0; k < shards.size(); ++k) {
    if (shards[k].dim() != theta0.size()) {
      throw std::invalid_argument("make_devices: shard dimension does not match theta0");
    }
    devices.push_back(DeviceState{k, theta0, make_stream(seed, StreamTag::device_batch, k),
                                  make_stream(seed, StreamTag::device_noise, k),
                                  BatchSampler(static_cast<std::size_t>(shards[k].size()))});
  }
  return devices;
}

void RoundWorkspace::resize(std::size_t K, Eigen::Index d) {
  grads.assign(K, Vector::Zero(d));
  payloads.assign(K, Vector::Zero(d));
  common = Vector::Zero(d);
  scratch = Vector::Zero(d);
}

void compute_payloads(std::span<DeviceState> devices, std::span<const LocalDataset> shards, double eta,
                      double p_b, std::size_t K, RoundWorkspace& ws) {
  for (auto& dev : devices) {
    const auto& shard = shards[dev.k];
    const std::size_t m = batch_size(dev.sampler.population(), p_b);
    minibatch_grad(dev.theta, shard, dev.sampler.sample(m, dev.batch_rng), p_b, K, ws.grads[dev.k]);
    ws.payloads[dev.k] = dev.theta - eta * ws.grads[dev.k];
  }
}

void average_into(std::span<const Vector> particles, Eigen::Ref<Vector> out) {
  const Vector& ref = particles.front();
  out.setZero();
  for (std::size_t k = 1; k < particles.size(); ++k) out += particles[k] - ref;
  out = ref + out / static_cast<double>(particles.size());
}

void ensure_finite(const Vector& theta, std::size_t device, std::size_t iteration) {
  if (!theta.allFinite()) {
    throw ProtocolError("non-finite particle on device " + std::to_string(device) + " at iteration " +
                        std::to_string(iteration));
  }
}

FaldRoundOutcome fald_round(std::span<DeviceState> devices, std::span<const LocalDataset> shards,
                            const FaldParams& params, SharedRandomness& shared, std::size_t s,
                            RoundWorkspace& ws) {
  if (!(params.eta > 0.0)) throw std::invalid_argument("fald_round: eta must be > 0");
  const bool flag = draw_round_flag(shared, params.p_c) || params.force_aggregation;
  const double tau = params.tau_override.value_or(flag ? 1.0 : 0.0);

  compute_payloads(devices, shards, params.eta, params.p_b, params.K, ws);
  if (tau > 0.0) shared.common_noise.normal(ws.common);

  const double noise_scale = std::sqrt(2.0 * params.eta);
  for (auto& dev : devices) {
    dev.theta = ws.payloads[dev.k] + noise_scale * correlated_noise(tau, params.K, ws.common, dev.noise_rng);
    ensure_finite(dev.theta, dev.k, s);
  }

  FaldRoundOutcome out;
  out.aggregated = flag;
  if (flag) {
    for (auto& dev : devices) ws.payloads[dev.k] = dev.theta;
    Vector avg(ws.common.size());
    average_into(ws.payloads, avg);
    for (auto& dev : devices) dev.theta = avg;
    out.aggregate = std::move(avg);
  }
  return out;
}

Vector Trajectory::average(std::size_t s) const {
  const auto ref = at(s, 0);
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(d_));
  for (std::size_t k = 1; k < K_; ++k) acc += at(s, k) - ref;
  return ref + acc / static_cast<double>(K_);
}

}  // namespace wfald
