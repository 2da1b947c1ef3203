#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace wfald {

// Seed derivation.
//
// Every stream in a run is seeded from the master seed by hashing a path of
// small integers with SplitMix64. A stream's seed depends only on its path,
// never on the order in which streams are created, so results do not change
// when replicates are scheduled on a different number of workers.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

// Top-level path components.
enum class StreamTag : std::uint64_t {
  data = 1,
  test_set = 2,
  round_flags = 3,
  common_noise = 4,
  channel = 5,
  device_batch = 6,
  device_noise = 7,
  replicate = 8,
  constants = 9,
};

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }
  void normal(Eigen::Ref<Eigen::VectorXd> out);
  Eigen::VectorXd normal_vector(Eigen::Index d);

  // Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  // p >= 1 is always true even if generate_canonical returns 1.
  bool bernoulli(double p) { return uniform() < p || p >= 1.0; }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline RandomStream make_stream(std::uint64_t master, StreamTag tag, std::uint64_t index = 0) {
  return RandomStream(derive_seed(master, {static_cast<std::uint64_t>(tag), index}));
}

}  // namespace wfald
