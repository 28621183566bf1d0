#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <doctest.h>

#include "gptrack/errors.hpp"
#include "gptrack/gp.hpp"
#include "gptrack/rng.hpp"
#include "test_util.hpp"

using namespace gptrack;
using gp::KernelSpec;
using gp::TrainingSet;
using rng::Stream;

namespace {

KernelSpec quasi_periodic(double sp2 = 1.0, double lp = 1.2, double period = 4.0,
                          double sf2 = 1.0, double lse = 6.0) {
  return KernelSpec::product(KernelSpec::periodic(sp2, lp, period),
                             KernelSpec::squared_exponential(sf2, lse));
}

TrainingSet smooth_set(int n, double noise_var, std::uint64_t seed) {
  Stream rng(seed);
  TrainingSet data;
  data.inputs = testutil::jittered_times(n, 0.08, rng);
  data.targets = testutil::smooth_signal(data.inputs);
  if (noise_var > 0.0) {
    for (Eigen::Index i = 0; i < data.targets.size(); ++i) {
      data.targets[i] += std::sqrt(noise_var) * rng.normal();
    }
  }
  data.noise_var = noise_var;
  return data;
}

}  // namespace

TEST_CASE("fit: 1x1 closed form") {
  TrainingSet data;
  data.inputs = Eigen::VectorXd::Zero(1);
  data.targets = Eigen::VectorXd::Constant(1, 2.0);
  data.noise_var = 0.01;
  const gp::TrainedGP model = gp::fit(KernelSpec::squared_exponential(1.0, 1.0), data);
  CHECK(model.chol_lower(0, 0) == doctest::Approx(std::sqrt(1.01)).epsilon(1e-15));
  CHECK(model.weights[0] == doctest::Approx(2.0 / 1.01).epsilon(1e-15));
  CHECK(model.jitter == 0.0);
}

TEST_CASE("fit: factor reconstructs the gram matrix") {
  const TrainingSet data = smooth_set(50, 1e-4, 3);
  const KernelSpec spec = quasi_periodic();
  const gp::TrainedGP model = gp::fit(spec, data);

  Eigen::MatrixXd gram(50, 50);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 50; ++j) {
      gram(i, j) = gp::kernel_eval(spec, data.inputs[i], data.inputs[j]);
    }
  }
  gram.diagonal().array() += data.noise_var + model.jitter;
  const Eigen::MatrixXd reconstructed =
      model.chol_lower * model.chol_lower.transpose();
  const double residual = (reconstructed - gram).cwiseAbs().maxCoeff();
  CHECK(residual <= 1e-8 * gram.diagonal().maxCoeff());

  // alpha solves the linear system
  const Eigen::VectorXd lhs = reconstructed * model.weights;
  CHECK((lhs - data.targets).lpNorm<Eigen::Infinity>() <=
        1e-8 * data.targets.lpNorm<Eigen::Infinity>());
}

TEST_CASE("fit: rejects non-increasing inputs") {
  TrainingSet data;
  data.inputs = Eigen::VectorXd::Zero(2);
  data.targets = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(gp::fit(KernelSpec::squared_exponential(1.0, 1.0), data),
                  ContractViolation);
}

TEST_CASE("predict: near interpolation at a training point") {
  TrainingSet data = smooth_set(20, 0.0, 5);
  data.noise_var = 1e-12;
  const gp::TrainedGP model = gp::fit(quasi_periodic(), data);
  Eigen::VectorXd test(1);
  test[0] = data.inputs[7];
  const gp::Prediction p = gp::predict(model, test);
  CHECK(std::abs(p.mean[0] - data.targets[7]) < 1e-6);
  CHECK(p.variance[0] <= 1e-6);
  CHECK(p.variance[0] >= 0.0);
}

TEST_CASE("predict: matches the dense-inverse oracle on a 200-point window") {
  const TrainingSet data = smooth_set(200, 4e-4, 7);
  const KernelSpec spec = quasi_periodic();
  const gp::TrainedGP model = gp::fit(spec, data);

  Eigen::VectorXd test(31);
  const double t_last = data.inputs[data.inputs.size() - 1];
  for (int i = 0; i < 31; ++i) test[i] = t_last + 0.005 * i;

  const gp::Prediction p = gp::predict(model, test);
  const testutil::DenseGpOracle oracle =
      testutil::dense_gp_oracle(spec, data.inputs, data.targets, data.noise_var, test);
  for (int i = 0; i < 31; ++i) {
    CHECK(std::abs(p.mean[i] - oracle.mean[i]) <=
          1e-8 * std::max(1.0, std::abs(oracle.mean[i])));
    CHECK(std::abs(p.variance[i] - oracle.variance[i]) <=
          1e-8 * std::max(1.0, std::abs(oracle.variance[i])));
  }
}

TEST_CASE("predict: mean derivative matches finite differences") {
  const TrainingSet data = smooth_set(60, 1e-6, 11);
  const gp::TrainedGP model = gp::fit(quasi_periodic(), data);
  const double t_last = data.inputs[data.inputs.size() - 1];
  for (double offset : {-0.8, 0.0, 0.05, 0.3}) {
    const double at = t_last + offset;
    Eigen::VectorXd test(1);
    test[0] = at;
    const gp::Prediction p = gp::predict(model, test);
    const double numeric = testutil::central_difference(
        [&](double z) {
          Eigen::VectorXd probe(1);
          probe[0] = z;
          return gp::predict(model, probe).mean[0];
        },
        at, 1e-5);
    CHECK(std::abs(p.mean_derivative[0] - numeric) < 1e-6);
  }
}

TEST_CASE("predict: posterior variance never exceeds the prior variance") {
  const TrainingSet data = smooth_set(40, 1e-3, 13);
  const KernelSpec spec = quasi_periodic(0.9, 1.0, 3.0, 1.1, 4.0);
  const gp::TrainedGP model = gp::fit(spec, data);
  Eigen::VectorXd test(25);
  for (int i = 0; i < 25; ++i) test[i] = -1.0 + 0.35 * i;
  const gp::Prediction p = gp::predict(model, test);
  for (int i = 0; i < 25; ++i) {
    CHECK(p.variance[i] <= gp::kernel_eval(spec, test[i], test[i]) + 1e-10);
  }
}

TEST_CASE("log marginal likelihood: standard normal density at the origin") {
  TrainingSet data;
  data.inputs = Eigen::VectorXd::Zero(1);
  data.targets = Eigen::VectorXd::Zero(1);
  data.noise_var = 0.0;
  const gp::MllResult mll =
      gp::log_marginal_likelihood(KernelSpec::squared_exponential(1.0, 1.0), data);
  CHECK(mll.value ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
  CHECK(mll.gradient.size() == 3);  // two kernel parameters plus noise
}

TEST_CASE("log marginal likelihood: zero targets leave only the complexity term") {
  TrainingSet data = smooth_set(30, 1e-3, 17);
  data.targets.setZero();
  const KernelSpec spec = quasi_periodic();
  const gp::MllResult mll = gp::log_marginal_likelihood(spec, data);
  const gp::TrainedGP model = gp::fit(spec, data);
  const double expected =
      -model.chol_lower.diagonal().array().log().sum() -
      0.5 * 30.0 * std::log(2.0 * std::numbers::pi);
  CHECK(mll.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log marginal likelihood: gradient matches finite differences") {
  const TrainingSet base = smooth_set(25, 0.0, 19);
  Stream rng(23);
  KernelSpec spec = quasi_periodic();
  const int kernel_params = spec.param_count();

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd theta(kernel_params + 1);
    for (Eigen::Index j = 0; j < kernel_params; ++j) {
      theta[j] = rng.uniform(std::log(0.4), std::log(3.0));
    }
    theta[kernel_params] = rng.uniform(std::log(1e-3), std::log(0.1));

    auto value_at = [&](const Eigen::VectorXd& t) {
      KernelSpec probe = spec;
      probe.set_log_params(t.head(kernel_params));
      TrainingSet data = base;
      data.noise_var = std::exp(t[kernel_params]);
      return gp::log_marginal_likelihood(probe, data).value;
    };

    KernelSpec probe = spec;
    probe.set_log_params(theta.head(kernel_params));
    TrainingSet data = base;
    data.noise_var = std::exp(theta[kernel_params]);
    const gp::MllResult mll = gp::log_marginal_likelihood(probe, data);

    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double numeric = testutil::central_difference(
          [&](double v) {
            Eigen::VectorXd shifted = theta;
            shifted[j] = v;
            return value_at(shifted);
          },
          theta[j], 1e-5);
      const double analytic = mll.gradient[j];
      CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST_CASE("log marginal likelihood: invariant under sample reordering") {
  const TrainingSet data = smooth_set(40, 1e-4, 29);
  const KernelSpec spec = quasi_periodic();
  const double reference = gp::log_marginal_likelihood(spec, data).value;

  // shuffle pairs, then restore the increasing-input invariant by sorting
  Stream rng(31);
  std::vector<int> order(40);
  for (int i = 0; i < 40; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(40);
  for (int i : order) pairs.emplace_back(data.inputs[i], data.targets[i]);
  std::sort(pairs.begin(), pairs.end());
  TrainingSet sorted = data;
  for (int i = 0; i < 40; ++i) {
    sorted.inputs[i] = pairs[static_cast<std::size_t>(i)].first;
    sorted.targets[i] = pairs[static_cast<std::size_t>(i)].second;
  }
  const double shuffled = gp::log_marginal_likelihood(spec, sorted).value;
  CHECK(std::abs(shuffled - reference) <= 1e-12 * std::abs(reference));
}

TEST_CASE("optimize_hyperparams: deterministic for a fixed seed") {
  const TrainingSet data = smooth_set(60, 1e-4, 37);
  const KernelSpec family = quasi_periodic();
  const gp::FitResult a = gp::optimize_hyperparams(family, data, 1, 42);
  const gp::FitResult b = gp::optimize_hyperparams(family, data, 1, 42);
  CHECK((a.kernel.log_params() - b.kernel.log_params()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.noise_var == b.noise_var);
  CHECK(a.mll == b.mll);

  const gp::FitResult c = gp::optimize_hyperparams(family, data, 5, 42);
  const gp::FitResult d = gp::optimize_hyperparams(family, data, 5, 42);
  CHECK((c.kernel.log_params() - d.kernel.log_params()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(c.mll == d.mll);
}

TEST_CASE("optimize_hyperparams: requires at least one start") {
  const TrainingSet data = smooth_set(10, 1e-4, 39);
  CHECK_THROWS_AS(gp::optimize_hyperparams(quasi_periodic(), data, 0, 1),
                  ContractViolation);
}

TEST_CASE("optimize_hyperparams: recovers the period of a clean sinusoid") {
  TrainingSet data;
  const int n = 150;
  data.inputs.resize(n);
  data.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    data.inputs[i] = 0.04 * i;
    data.targets[i] = 0.8 * std::sin(2.0 * std::numbers::pi * data.inputs[i] / 4.0);
  }
  data.noise_var = 0.0;

  const gp::FitResult fit = gp::optimize_hyperparams(quasi_periodic(), data, 8, 2024);
  const auto kinds = fit.kernel.param_kinds();
  const Eigen::VectorXd params = fit.kernel.log_params();
  double period = 0.0;
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    if (kinds[j] == KernelSpec::ParamKind::Period) {
      period = std::exp(params[static_cast<Eigen::Index>(j)]);
    }
  }
  CHECK(period == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("optimize_hyperparams: recovers the noise level of white noise") {
  Stream rng(41);
  TrainingSet data;
  const int n = 200;
  const double sigma = 0.05;
  data.inputs.resize(n);
  data.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    data.inputs[i] = 0.04 * i;
    data.targets[i] = sigma * rng.normal();
  }
  data.noise_var = 0.0;

  const gp::FitResult fit = gp::optimize_hyperparams(quasi_periodic(), data, 6, 7);
  CHECK(fit.noise_var == doctest::Approx(sigma * sigma).epsilon(0.2));
}
