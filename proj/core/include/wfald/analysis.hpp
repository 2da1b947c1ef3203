#pragma once

// Evaluation quantities: Gaussian 2-Wasserstein distance, particle summaries,
// the posterior-mean MSE, predictive test error, the Wasserstein convergence
// bound for the wireless sampler and the client-drift quantities.

#include "wfald/model.hpp"
#include "wfald/sampling.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace wfald {

// Symmetric PSD square root by eigendecomposition, negative eigenvalues clamped to 0.
Matrix sqrtm_psd(const Matrix& a);

// Squared W2 between two Gaussians:
//   |m_p - m_q|^2 + tr(S_p + S_q - 2 (S_q^{1/2} S_p S_q^{1/2})^{1/2}).
// Throws std::invalid_argument on dimension mismatch or a non-PSD covariance.
double w2_squared(const GaussianDist& p, const GaussianDist& q);

// Sample mean and unbiased covariance of at least d+1 samples, projected onto
// the PSD cone. Eigenvalues below -1e-8 are reported on stderr before clamping.
GaussianDist empirical_gaussian(std::span<const Vector> samples);

// (1/K) sum_k | mean_{s in (S_b, S]} theta_k^[s] - posterior_mean |^2.
double mse_metric(const Trajectory& trajectory, std::size_t burn_in, const Vector& posterior_mean);

// Instantaneous (1/K) sum_k |theta_k^[s] - posterior_mean|^2.
double squared_error_at(const Trajectory& trajectory, std::size_t s, const Vector& posterior_mean);

enum class PredictorMode { ensemble, frequentist };

// Mean of (v - prediction)^2 over one test set, where the prediction for u is
// the average of theta^T u over `particles`.
double predictive_squared_error(std::span<const Vector> particles, const LocalDataset& test);

// Averaged over devices. Ensemble mode uses each device's post-burn-in
// particles; frequentist mode uses theta_k^[S]. A single-chain trajectory is
// scored against every test set.
double predictive_error(const Trajectory& trajectory, std::size_t burn_in,
                        std::span<const LocalDataset> test_sets, PredictorMode mode);

struct BoundInputs {
  double L = 0.0;
  double mu = 0.0;
  double G = 0.0;
  std::vector<double> sigma;
  double eta = 0.0;
  double p_c = 1.0;
  std::size_t K = 1;
  std::size_t d = 1;
  std::vector<double> beta_sequence;  // beta^[j], j = 0..s-1; missing entries count as 0
  double w2_init = 0.0;               // squared W2 at s = 0
  std::size_t s = 0;
};

// 1 - eta mu for eta <= 2/(mu+L), eta L - 1 for eta <= 2/L.
// Throws BoundVacuousError if eta is outside (0, 2/L] or gamma >= 1.
double contraction_gamma(double eta, double mu, double L);

struct BoundTerms {
  double contraction = 0.0;
  double channel = 0.0;
  double constant = 0.0;
  double total = 0.0;
};

// Right-hand side of the W2^2 bound, term by term. At s = 0 the bound is
// W2^2(init) itself.
BoundTerms theorem1_terms(const BoundInputs& in);
double theorem1_bound(const BoundInputs& in);

struct DriftMeasurement {
  double v_theta = 0.0;  // (1/K) sum_k |theta_k - avg|^2
  double v_c = 0.0;      // |grad f(avg) - sum_k grad_hat_k|^2
};

DriftMeasurement client_drift(std::span<const Vector> particles, std::span<const Vector> grads,
                              const QuadraticCost& global);

struct DriftBounds {
  double v_c_bound = 0.0;  // K^2 L^2 E[V_theta] + K sum sigma_k^2
  double v_theta_bound = 0.0;  // bound on E[V_theta]
};

// Throws std::invalid_argument for p_c outside (0, 1].
DriftBounds drift_bounds(const RegularityConstants& constants, double eta, double p_c, std::size_t K,
                         std::size_t d, double v_theta_expect);

}  // namespace wfald
