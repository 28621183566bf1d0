#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gptrack/kernels.hpp"

namespace gptrack::gp {

/// Scalar time series with homoscedastic measurement noise. Inputs are
/// times in seconds and must be strictly increasing.
struct TrainingSet {
  Eigen::VectorXd inputs;
  Eigen::VectorXd targets;
  double noise_var = 0.0;

  void validate() const;  // throws ContractViolation on any broken invariant
};

/// Posterior state for one channel: the Cholesky factor of
/// K + noise_var I + jitter I and the weight vector alpha solving
/// (K + noise_var I + jitter I) alpha = targets. The prior mean is zero.
struct TrainedGP {
  KernelSpec kernel;
  TrainingSet data;
  Eigen::MatrixXd chol_lower;
  Eigen::VectorXd weights;
  double jitter = 0.0;
};

struct Prediction {
  Eigen::VectorXd mean;             // channel units
  Eigen::VectorXd variance;         // squared channel units, >= 0
  Eigen::VectorXd mean_derivative;  // channel units per second
};

/// Factorizes the Gram matrix and solves for the weights. Escalates
/// through the jitter ladder {0, 1e-10, 1e-8, 1e-6} x mean diagonal and
/// throws FactorizationFailure when the last rung fails.
TrainedGP fit(const KernelSpec& spec, TrainingSet data);

/// Posterior mean, variance and mean derivative at the test inputs.
/// Variances are computed through triangular solves against the stored
/// factor; values below -1e-10 raise NegativeVariance, smaller negative
/// round-off is clamped to zero.
Prediction predict(const TrainedGP& model,
                   const Eigen::Ref<const Eigen::VectorXd>& test_inputs);

struct MllResult {
  double value;
  /// d value / d log(theta_j) for every kernel parameter in depth-first
  /// leaf order, followed by d value / d log(noise_var).
  Eigen::VectorXd gradient;
};

MllResult log_marginal_likelihood(const KernelSpec& spec, const TrainingSet& data);

struct HyperOptions {
  int n_starts = 6;
  std::uint64_t seed = 0;
  bool train_noise = true;
  int max_iterations = 500;
  int max_backtracks = 40;
  double armijo_shrink = 0.5;
  double armijo_slope = 1e-4;
  double grad_tol = 1e-6;
  // box bounds in log space
  double scale_log_lo = std::log(1e-6);
  double scale_log_hi = std::log(1e6);
  double period_log_lo = std::log(0.5);
  double period_log_hi = std::log(60.0);
  double noise_log_lo = std::log(1e-12);
  double noise_log_hi = std::log(1e6);
};

struct FitResult {
  KernelSpec kernel;
  double noise_var = 0.0;
  double mll = 0.0;
  int best_start = -1;
  int iterations = 0;  // of the winning start
};

/// Multi-start projected gradient ascent on the marginal log likelihood.
/// Start 0 uses the family's stored values; the remaining starts are
/// stratified log-uniform samples drawn deterministically from the seed.
/// Throws AllStartsFailed if no start produces a usable factorization.
FitResult optimize_hyperparams(const KernelSpec& family, const TrainingSet& data,
                               const HyperOptions& options);

FitResult optimize_hyperparams(const KernelSpec& family, const TrainingSet& data,
                               int n_starts, std::uint64_t seed);

}  // namespace gptrack::gp
