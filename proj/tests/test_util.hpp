#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "gptrack/kernels.hpp"
#include "gptrack/rng.hpp"
#include "gptrack/types.hpp"

// Independent oracles and helpers shared by the test suites. Everything
// here deliberately avoids the library's solve paths: dense inverses,
// finite differences and brute-force enumeration only.
namespace testutil {

inline double central_difference(const std::function<double(double)>& f, double x,
                                 double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

struct DenseGpOracle {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

// Posterior mean/variance through an explicit dense inverse.
inline DenseGpOracle dense_gp_oracle(const gptrack::gp::KernelSpec& spec,
                                     const Eigen::VectorXd& train_inputs,
                                     const Eigen::VectorXd& train_targets,
                                     double noise_var,
                                     const Eigen::VectorXd& test_inputs) {
  using gptrack::gp::kernel_eval;
  const Eigen::Index n = train_inputs.size();
  const Eigen::Index m = test_inputs.size();
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      gram(i, j) = kernel_eval(spec, train_inputs[i], train_inputs[j]);
    }
  }
  gram.diagonal().array() += noise_var;
  const Eigen::MatrixXd gram_inv = gram.inverse();

  Eigen::MatrixXd cross(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cross(i, j) = kernel_eval(spec, test_inputs[i], train_inputs[j]);
    }
  }
  DenseGpOracle oracle;
  oracle.mean = cross * gram_inv * train_targets;
  oracle.variance.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    oracle.variance[i] = kernel_eval(spec, test_inputs[i], test_inputs[i]) -
                         cross.row(i) * gram_inv * cross.row(i).transpose();
  }
  return oracle;
}

// Strictly increasing sample times with mild deterministic jitter.
inline Eigen::VectorXd jittered_times(int count, double dt, gptrack::rng::Stream& rng) {
  Eigen::VectorXd t(count);
  double current = 0.0;
  for (int i = 0; i < count; ++i) {
    current += dt * (0.5 + rng.uniform());
    t[i] = current;
  }
  return t;
}

inline Eigen::VectorXd smooth_signal(const Eigen::VectorXd& t) {
  return (0.8 * (2.0 * M_PI / 4.0 * t.array()).sin() +
          0.3 * (2.0 * M_PI / 7.3 * t.array() + 0.4).cos())
      .matrix();
}

}  // namespace testutil
