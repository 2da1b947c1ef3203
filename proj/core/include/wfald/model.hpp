#pragma once

// Bayesian linear-regression benchmark: data generation, per-device costs,
// stochastic gradients, the closed-form posterior and the regularity
// constants used by the convergence bounds.
//
// Likelihood v | theta, u ~ N(theta^T u, 1), prior theta ~ N(0, I). Device k
// owns the cost
//   f_k(theta) = 1/2 sum_{n in D_k} (theta^T u_n - v_n)^2 + |theta|^2 / (2K)
// so that the global cost f = sum_k f_k is the negative log posterior.

#include "wfald/rng.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace wfald {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Dataset {
  Matrix covariates;  // d x N, column n is u_n
  Vector targets;     // length N
  std::optional<Vector> theta_star;

  Eigen::Index dim() const { return covariates.rows(); }
  Eigen::Index size() const { return covariates.cols(); }
};

struct LocalDataset {
  std::size_t owner = 0;
  Matrix covariates;  // d x N_k
  Vector targets;     // length N_k

  Eigen::Index dim() const { return covariates.rows(); }
  Eigen::Index size() const { return covariates.cols(); }
};

struct GaussianDist {
  Vector mean;
  Matrix covariance;

  Eigen::Index dim() const { return mean.size(); }
  // Throws std::invalid_argument unless the covariance is square, matches the
  // mean, is symmetric (relative 1e-10) and numerically PSD (eigenvalues >= -1e-10).
  void validate() const;
};

struct RegularityConstants {
  double L = 0.0;
  double mu = 0.0;
  double G = 0.0;
  std::vector<double> sigma;  // per device
  double region_radius = 0.0;

  double sigma_sq_sum() const;
};

// f(theta) = 1/2 theta^T H theta - b^T theta + const.
struct QuadraticCost {
  Matrix hessian;
  Vector linear;

  Vector gradient(const Vector& theta) const { return hessian * theta - linear; }
};

Dataset generate_synthetic(std::size_t n, std::size_t d, const Vector& theta_star, double noise_std,
                           RandomStream& rng);

// First N mod K shards receive one extra sample; shards are contiguous in the
// original sample order.
std::vector<LocalDataset> partition_even(const Dataset& data, std::size_t K);

// Cost of the whole dataset with unit prior weight.
QuadraticCost global_cost(const Dataset& data);
// Cost of one shard with prior weight 1/K.
QuadraticCost shard_cost(const LocalDataset& shard, std::size_t K);

Vector local_grad(const Vector& theta, const LocalDataset& shard, std::size_t K);

// round(p_b * N_k), at least 1. Throws std::invalid_argument if p_b is
// outside (0, 1] or the shard is empty.
std::size_t batch_size(std::size_t shard_size, double p_b);

// Uniform mini-batches without replacement via partial Fisher-Yates on a
// persistent index buffer. No allocation after construction.
class BatchSampler {
 public:
  BatchSampler() = default;
  explicit BatchSampler(std::size_t population);

  std::span<const std::size_t> sample(std::size_t m, RandomStream& rng);
  std::size_t population() const { return indices_.size(); }
  std::span<const std::size_t> last_batch() const { return {indices_.data(), last_}; }

 private:
  std::vector<std::size_t> indices_;
  std::size_t last_ = 0;
};

// (1/p_b) sum_{n in batch} (theta^T u_n - v_n) u_n + theta / K, written to out.
void minibatch_grad(const Vector& theta, const LocalDataset& shard, std::span<const std::size_t> batch,
                    double p_b, std::size_t K, Eigen::Ref<Vector> out);

Vector stochastic_grad(const Vector& theta, const LocalDataset& shard, double p_b, RandomStream& rng,
                       std::size_t K);

// N((UU^T + I)^{-1} U v, (UU^T + I)^{-1}). An empty dataset gives the prior.
GaussianDist exact_posterior(const Dataset& data);

// Exact E|grad_hat - grad|^2 at theta for the without-replacement estimator
// with nominal 1/p_b rescaling (finite-population variance plus the bias
// from rounding the batch size).
double minibatch_grad_mse(const Vector& theta, const LocalDataset& shard, double p_b, std::size_t K);

// Monte Carlo estimate of the same quantity from `draws` batches.
double empirical_grad_mse(const Vector& theta, const LocalDataset& shard, double p_b, std::size_t K,
                          RandomStream& rng, std::size_t draws = 10000);

// L = max_k lambda_max(U_k U_k^T + I/K), mu = min_k lambda_min(...),
// G = max_k |grad f_k(center)| + L * region_radius (a bound over the ball of
// that radius around center), sigma_k^2 = minibatch_grad_mse(center, ...).
// Throws std::invalid_argument if region_radius <= 0.
RegularityConstants measure_constants(std::span<const LocalDataset> shards, std::size_t K,
                                      double region_radius, double p_b, const Vector& center);

}  // namespace wfald
