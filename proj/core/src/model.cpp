#include "wfald/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wfald {

void GaussianDist::validate() const {
  const auto d = mean.size();
  if (covariance.rows() != d || covariance.cols() != d) {
    throw std::invalid_argument("GaussianDist: covariance shape does not match mean");
  }
  if (d == 0) return;
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("GaussianDist: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw std::invalid_argument("GaussianDist: covariance is not positive semidefinite");
  }
}

double RegularityConstants::sigma_sq_sum() const {
  double sum = 0.0;
  for (double s : sigma) sum += s * s;
  return sum;
}

Dataset generate_synthetic(std::size_t n, std::size_t d, const Vector& theta_star, double noise_std,
                           RandomStream& rng) {
  if (n == 0 || d == 0) throw std::invalid_argument("generate_synthetic: n and d must be >= 1");
  if (theta_star.size() != static_cast<Eigen::Index>(d)) {
    throw std::invalid_argument("generate_synthetic: theta_star has length " +
                                std::to_string(theta_star.size()) + ", expected " + std::to_string(d));
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("generate_synthetic: noise_std must be >= 0");

  Dataset data;
  data.covariates.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  data.targets.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index col = 0; col < data.covariates.cols(); ++col) {
    rng.normal(data.covariates.col(col));
    const double eps = rng.normal();
    data.targets[col] = theta_star.dot(data.covariates.col(col)) + noise_std * eps;
  }
  data.theta_star = theta_star;
  return data;
}

std::vector<LocalDataset> partition_even(const Dataset& data, std::size_t K) {
  const auto N = static_cast<std::size_t>(data.size());
  if (K == 0) throw std::invalid_argument("partition_even: K must be >= 1");
  if (K > N) {
    throw std::invalid_argument("partition_even: K = " + std::to_string(K) + " exceeds N = " +
                                std::to_string(N));
  }
  const std::size_t base = N / K;
  const std::size_t extra = N % K;

  std::vector<LocalDataset> shards(K);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t n_k = base + (k < extra ? 1 : 0);
    auto& shard = shards[k];
    shard.owner = k;
    shard.covariates = data.covariates.middleCols(static_cast<Eigen::Index>(offset),
                                                  static_cast<Eigen::Index>(n_k));
    shard.targets = data.targets.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(n_k));
    offset += n_k;
  }
  return shards;
}

QuadraticCost global_cost(const Dataset& data) {
  const auto d = data.dim();
  QuadraticCost cost;
  cost.hessian = data.covariates * data.covariates.transpose() + Matrix::Identity(d, d);
  cost.linear = data.covariates * data.targets;
  return cost;
}

QuadraticCost shard_cost(const LocalDataset& shard, std::size_t K) {
  const auto d = shard.dim();
  QuadraticCost cost;
  cost.hessian = shard.covariates * shard.covariates.transpose() +
                 Matrix::Identity(d, d) / static_cast<double>(K);
  cost.linear = shard.covariates * shard.targets;
  return cost;
}

namespace {

void check_theta(const Vector& theta, Eigen::Index d, const char* who) {
  if (theta.size() != d) {
    throw std::invalid_argument(std::string(who) + ": theta has length " + std::to_string(theta.size()) +
                                ", expected " + std::to_string(d));
  }
}

}  // namespace

Vector local_grad(const Vector& theta, const LocalDataset& shard, std::size_t K) {
  check_theta(theta, shard.dim(), "local_grad");
  const Vector residual = shard.covariates.transpose() * theta - shard.targets;
  return shard.covariates * residual + theta / static_cast<double>(K);
}

std::size_t batch_size(std::size_t shard_size, double p_b) {
  if (!(p_b > 0.0 && p_b <= 1.0)) throw std::invalid_argument("batch_size: p_b must lie in (0, 1]");
  if (shard_size == 0) throw std::invalid_argument("batch_size: empty shard gives an empty batch");
  const auto m = static_cast<std::size_t>(std::llround(p_b * static_cast<double>(shard_size)));
  return std::clamp<std::size_t>(m, 1, shard_size);
}

BatchSampler::BatchSampler(std::size_t population) : indices_(population) {
  for (std::size_t i = 0; i < population; ++i) indices_[i] = i;
}

std::span<const std::size_t> BatchSampler::sample(std::size_t m, RandomStream& rng) {
  const std::size_t n = indices_.size();
  last_ = m;
  if (m == n) return {indices_.data(), n};
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(indices_[i], indices_[j]);
  }
  return {indices_.data(), m};
}

void minibatch_grad(const Vector& theta, const LocalDataset& shard, std::span<const std::size_t> batch,
                    double p_b, std::size_t K, Eigen::Ref<Vector> out) {
  out = theta / static_cast<double>(K);
  const double scale = 1.0 / p_b;
  for (std::size_t n : batch) {
    const auto col = shard.covariates.col(static_cast<Eigen::Index>(n));
    const double r = theta.dot(col) - shard.targets[static_cast<Eigen::Index>(n)];
    out.noalias() += (scale * r) * col;
  }
}

Vector stochastic_grad(const Vector& theta, const LocalDataset& shard, double p_b, RandomStream& rng,
                       std::size_t K) {
  check_theta(theta, shard.dim(), "stochastic_grad");
  const auto n = static_cast<std::size_t>(shard.size());
  const std::size_t m = batch_size(n, p_b);
  BatchSampler sampler(n);
  Vector out(theta.size());
  minibatch_grad(theta, shard, sampler.sample(m, rng), p_b, K, out);
  return out;
}

GaussianDist exact_posterior(const Dataset& data) {
  const auto d = data.dim();
  const QuadraticCost cost = global_cost(data);
  Eigen::LLT<Matrix> llt(cost.hessian);
  GaussianDist post;
  post.covariance = llt.solve(Matrix::Identity(d, d));
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  post.mean = llt.solve(cost.linear);
  return post;
}

double minibatch_grad_mse(const Vector& theta, const LocalDataset& shard, double p_b, std::size_t K) {
  check_theta(theta, shard.dim(), "minibatch_grad_mse");
  const auto N = static_cast<std::size_t>(shard.size());
  const std::size_t m = batch_size(N, p_b);
  const Vector residual = shard.covariates.transpose() * theta - shard.targets;
  const Matrix terms = shard.covariates * residual.asDiagonal();  // column n is g_n
  const Vector total = terms.rowwise().sum();

  double variance = 0.0;
  if (N > 1 && m < N) {
    const Vector centre = total / static_cast<double>(N);
    const double pop_trace = (terms.colwise() - centre).squaredNorm() / static_cast<double>(N);
    const double dm = static_cast<double>(m);
    const double dn = static_cast<double>(N);
    variance = dm * (dn - dm) / (dn - 1.0) * pop_trace / (p_b * p_b);
  }
  const double bias_factor = static_cast<double>(m) / (p_b * static_cast<double>(N)) - 1.0;
  (void)K;  // the prior term is deterministic and cancels
  return variance + bias_factor * bias_factor * total.squaredNorm();
}

double empirical_grad_mse(const Vector& theta, const LocalDataset& shard, double p_b, std::size_t K,
                          RandomStream& rng, std::size_t draws) {
  check_theta(theta, shard.dim(), "empirical_grad_mse");
  const Vector exact = local_grad(theta, shard, K);
  const auto n = static_cast<std::size_t>(shard.size());
  const std::size_t m = batch_size(n, p_b);
  BatchSampler sampler(n);
  Vector g(theta.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    minibatch_grad(theta, shard, sampler.sample(m, rng), p_b, K, g);
    acc += (g - exact).squaredNorm();
  }
  return acc / static_cast<double>(draws);
}

RegularityConstants measure_constants(std::span<const LocalDataset> shards, std::size_t K,
                                      double region_radius, double p_b, const Vector& center) {
  if (!(region_radius > 0.0)) throw std::invalid_argument("measure_constants: region_radius must be > 0");
  if (shards.empty()) throw std::invalid_argument("measure_constants: no shards");

  RegularityConstants c;
  c.region_radius = region_radius;
  c.L = 0.0;
  c.mu = std::numeric_limits<double>::infinity();
  double max_grad = 0.0;
  for (const auto& shard : shards) {
    const QuadraticCost cost = shard_cost(shard, K);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cost.hessian, Eigen::EigenvaluesOnly);
    c.L = std::max(c.L, eig.eigenvalues().maxCoeff());
    c.mu = std::min(c.mu, eig.eigenvalues().minCoeff());
    max_grad = std::max(max_grad, cost.gradient(center).norm());
    c.sigma.push_back(std::sqrt(minibatch_grad_mse(center, shard, p_b, K)));
  }
  c.G = max_grad + c.L * region_radius;
  return c;
}

}  // namespace wfald
