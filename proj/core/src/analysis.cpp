#include "wfald/analysis.hpp"

#include "wfald/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace wfald {

Matrix sqrtm_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()));
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double w2_squared(const GaussianDist& p, const GaussianDist& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument("w2_squared: dimension mismatch");
  p.validate();
  q.validate();
  const Matrix root_q = sqrtm_psd(q.covariance);
  const Matrix cross = sqrtm_psd(root_q * p.covariance * root_q);
  const double trace = p.covariance.trace() + q.covariance.trace() - 2.0 * cross.trace();
  return (p.mean - q.mean).squaredNorm() + std::max(0.0, trace);
}

GaussianDist empirical_gaussian(std::span<const Vector> samples) {
  if (samples.empty()) throw std::invalid_argument("empirical_gaussian: no samples");
  const auto d = samples.front().size();
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n < d + 1) {
    throw std::invalid_argument("empirical_gaussian: need at least d+1 = " + std::to_string(d + 1) +
                                " samples, got " + std::to_string(n));
  }
  GaussianDist out;
  out.mean = Vector::Zero(d);
  for (const auto& x : samples) out.mean += x;
  out.mean /= static_cast<double>(n);

  Matrix cov = Matrix::Zero(d, d);
  for (const auto& x : samples) {
    const Vector c = x - out.mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const double lowest = eig.eigenvalues().minCoeff();
  if (lowest < -1e-8) {
    std::cerr << "warning: empirical covariance has eigenvalue " << lowest << "; clamping to 0\n";
  }
  if (lowest < 0.0) {
    cov = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
  }
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

double mse_metric(const Trajectory& trajectory, std::size_t burn_in, const Vector& posterior_mean) {
  const std::size_t S = trajectory.iterations();
  if (burn_in >= S) throw std::invalid_argument("mse_metric: need at least one post-burn-in sample");
  const double kept = static_cast<double>(S - burn_in);
  double total = 0.0;
  Vector mean(static_cast<Eigen::Index>(trajectory.dim()));
  for (std::size_t k = 0; k < trajectory.devices(); ++k) {
    mean.setZero();
    for (std::size_t s = burn_in + 1; s <= S; ++s) mean += trajectory.at(s, k);
    total += (mean / kept - posterior_mean).squaredNorm();
  }
  return total / static_cast<double>(trajectory.devices());
}

double squared_error_at(const Trajectory& trajectory, std::size_t s, const Vector& posterior_mean) {
  double total = 0.0;
  for (std::size_t k = 0; k < trajectory.devices(); ++k) {
    total += (trajectory.at(s, k) - posterior_mean).squaredNorm();
  }
  return total / static_cast<double>(trajectory.devices());
}

double predictive_squared_error(std::span<const Vector> particles, const LocalDataset& test) {
  if (particles.empty()) throw std::invalid_argument("predictive_squared_error: empty particle set");
  if (test.size() == 0) throw std::invalid_argument("predictive_squared_error: empty test set");
  Vector prediction = Vector::Zero(test.size());
  for (const auto& theta : particles) prediction.noalias() += test.covariates.transpose() * theta;
  prediction /= static_cast<double>(particles.size());
  return (test.targets - prediction).squaredNorm() / static_cast<double>(test.size());
}

double predictive_error(const Trajectory& trajectory, std::size_t burn_in,
                        std::span<const LocalDataset> test_sets, PredictorMode mode) {
  if (test_sets.empty()) throw std::invalid_argument("predictive_error: no test sets");
  const std::size_t S = trajectory.iterations();
  if (mode == PredictorMode::ensemble && burn_in >= S) {
    throw std::invalid_argument("predictive_error: ensemble mode needs post-burn-in particles");
  }
  const bool single_chain = trajectory.devices() == 1;
  if (!single_chain && trajectory.devices() != test_sets.size()) {
    throw std::invalid_argument("predictive_error: one test set per device expected");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < test_sets.size(); ++k) {
    const std::size_t dev = single_chain ? 0 : k;
    // The predictive mean is linear in theta, so averaging particles first
    // gives the ensemble prediction.
    Vector theta;
    if (mode == PredictorMode::ensemble) {
      theta = Vector::Zero(static_cast<Eigen::Index>(trajectory.dim()));
      for (std::size_t s = burn_in + 1; s <= S; ++s) theta += trajectory.at(s, dev);
      theta /= static_cast<double>(S - burn_in);
    } else {
      theta = trajectory.at(S, dev);
    }
    total += predictive_squared_error(std::span<const Vector>(&theta, 1), test_sets[k]);
  }
  return total / static_cast<double>(test_sets.size());
}

double contraction_gamma(double eta, double mu, double L) {
  if (!(eta > 0.0) || !(mu > 0.0) || !(L >= mu)) {
    throw BoundVacuousError("contraction_gamma: need eta > 0 and 0 < mu <= L");
  }
  double gamma;
  if (eta <= 2.0 / (mu + L)) {
    gamma = 1.0 - eta * mu;
  } else if (eta <= 2.0 / L) {
    gamma = eta * L - 1.0;
  } else {
    throw BoundVacuousError("contraction_gamma: eta = " + std::to_string(eta) + " exceeds 2/L");
  }
  if (!(gamma < 1.0)) throw BoundVacuousError("contraction_gamma: gamma >= 1");
  return gamma;
}

BoundTerms theorem1_terms(const BoundInputs& in) {
  const double gamma = contraction_gamma(in.eta, in.mu, in.L);
  BoundTerms t;
  if (in.s == 0) {
    t.contraction = in.w2_init;
    t.total = in.w2_init;
    return t;
  }
  const double ratio_sq = std::pow((1.0 + gamma) / 2.0, 2.0);
  const double s = static_cast<double>(in.s);
  const double d = static_cast<double>(in.d);
  const double K = static_cast<double>(in.K);
  const double eta = in.eta;
  const double L = in.L;
  const double pc = in.p_c;

  t.contraction = std::pow(ratio_sq, s) * in.w2_init;

  double weight = ratio_sq;  // ((1+gamma)/2)^{2(s-j)} for j = s-1 downwards
  for (std::size_t j = in.s; j-- > 0;) {
    const double beta = j < in.beta_sequence.size() ? in.beta_sequence[j] : 0.0;
    t.channel += weight * pc * beta * d;
    weight *= ratio_sq;
  }

  double sigma_sq = 0.0;
  for (double sg : in.sigma) sigma_sq += sg * sg;
  const double eta2 = eta * eta;
  const double eta3 = eta2 * eta;
  const double eta4 = eta3 * eta;
  const double bracket = eta4 * L * L * L * d / (3.0 * K) + eta3 * L * L * d +
                         (eta2 / K + 4.0 * eta4 * L * L / (K * pc)) * sigma_sq +
                         6.0 * eta4 * L * L * in.G * in.G / (pc * pc) +
                         4.0 * eta3 * L * L * (K - 1.0) * d / (K * pc);
  t.constant = 8.0 * (1.0 + gamma) / (3.0 * (1.0 - gamma) * (1.0 - gamma)) * bracket;
  t.total = t.contraction + t.channel + t.constant;
  return t;
}

double theorem1_bound(const BoundInputs& in) { return theorem1_terms(in).total; }

DriftMeasurement client_drift(std::span<const Vector> particles, std::span<const Vector> grads,
                              const QuadraticCost& global) {
  if (particles.empty() || particles.size() != grads.size()) {
    throw std::invalid_argument("client_drift: need one gradient per particle");
  }
  const auto d = particles.front().size();
  Vector avg(d);
  average_into(particles, avg);

  DriftMeasurement m;
  for (const auto& theta : particles) m.v_theta += (theta - avg).squaredNorm();
  m.v_theta /= static_cast<double>(particles.size());

  Vector diff = global.gradient(avg);
  for (const auto& g : grads) diff -= g;
  m.v_c = diff.squaredNorm();
  return m;
}

DriftBounds drift_bounds(const RegularityConstants& constants, double eta, double p_c, std::size_t K,
                         std::size_t d, double v_theta_expect) {
  if (!(p_c > 0.0 && p_c <= 1.0)) throw std::invalid_argument("drift_bounds: p_c must lie in (0, 1]");
  const double k = static_cast<double>(K);
  const double L = constants.L;
  const double sigma_sq = constants.sigma_sq_sum();
  DriftBounds b;
  b.v_c_bound = k * k * L * L * v_theta_expect + k * sigma_sq;
  b.v_theta_bound = 2.0 * (1.0 - p_c) / p_c *
            ((2.0 + p_c) * eta * eta / p_c * constants.G * constants.G + eta * eta / k * sigma_sq +
             2.0 * (k - 1.0) * eta * static_cast<double>(d) / k);
  return b;
}

}  // namespace wfald
