#include <cmath>

#include <doctest.h>

#include "gptrack/errors.hpp"
#include "gptrack/kernels.hpp"
#include "gptrack/rng.hpp"
#include "test_util.hpp"

using gptrack::gp::KernelSpec;
using gptrack::gp::kernel_eval;
using gptrack::gp::kernel_grad_z;
using gptrack::gp::kernel_hyper_grads;
using gptrack::gp::kernel_matrix;
using gptrack::rng::Stream;

namespace {

KernelSpec quasi_periodic() {
  return KernelSpec::product(KernelSpec::periodic(0.7, 1.3, 3.0),
                             KernelSpec::squared_exponential(1.4, 2.0));
}

KernelSpec with_drift() {
  return KernelSpec::sum(quasi_periodic(), KernelSpec::squared_exponential(0.2, 11.0));
}

}  // namespace

TEST_CASE("squared exponential closed-form values") {
  const KernelSpec se = KernelSpec::squared_exponential(1.0, 1.0);
  CHECK(kernel_eval(se, 0.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(kernel_eval(se, 0.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
}

TEST_CASE("periodic kernel is exact at full periods") {
  const KernelSpec periodic = KernelSpec::periodic(1.0, 1.0, 2.0);
  CHECK(kernel_eval(periodic, 0.0, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(kernel_eval(periodic, 0.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("composition evaluates to products and sums of leaves") {
  const KernelSpec prod = quasi_periodic();
  CHECK(kernel_eval(prod, 1.0, 1.0) == doctest::Approx(0.7 * 1.4).epsilon(1e-13));
  const KernelSpec sum = with_drift();
  CHECK(kernel_eval(sum, 2.0, 2.0) == doctest::Approx(0.7 * 1.4 + 0.2).epsilon(1e-13));
}

TEST_CASE("kernel parameters must be finite and positive") {
  CHECK_THROWS_AS(KernelSpec::squared_exponential(0.0, 1.0), gptrack::ContractViolation);
  CHECK_THROWS_AS(KernelSpec::periodic(1.0, -2.0, 1.0), gptrack::ContractViolation);
}

TEST_CASE("symmetry k(z, z') = k(z', z)") {
  Stream rng(7);
  for (const KernelSpec& spec : {quasi_periodic(), with_drift()}) {
    for (int i = 0; i < 50; ++i) {
      const double a = rng.uniform(-10.0, 10.0);
      const double b = rng.uniform(-10.0, 10.0);
      CHECK(kernel_eval(spec, a, b) == doctest::Approx(kernel_eval(spec, b, a)).epsilon(1e-14));
    }
  }
}

TEST_CASE("gradient in z vanishes at zero lag") {
  Stream rng(11);
  for (const KernelSpec& spec : {quasi_periodic(), with_drift()}) {
    for (int i = 0; i < 10; ++i) {
      const double z = rng.uniform(-5.0, 5.0);
      CHECK(kernel_grad_z(spec, z, z) == doctest::Approx(0.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("gradient in z matches central finite differences") {
  const KernelSpec se = KernelSpec::squared_exponential(1.0, 1.0);
  const double fd = testutil::central_difference(
      [&](double z) { return kernel_eval(se, z, 1.0); }, 0.0, 1e-6);
  CHECK(std::abs(kernel_grad_z(se, 0.0, 1.0) - fd) < 1e-6);

  Stream rng(13);
  for (const KernelSpec& spec : {quasi_periodic(), with_drift()}) {
    for (int i = 0; i < 20; ++i) {
      const double z = rng.uniform(-4.0, 4.0);
      const double zp = rng.uniform(-4.0, 4.0);
      const double numeric = testutil::central_difference(
          [&](double v) { return kernel_eval(spec, v, zp); }, z, 1e-6);
      CHECK(std::abs(kernel_grad_z(spec, z, zp) - numeric) < 1e-6);
    }
  }
}

TEST_CASE("half-period lag is a stationary point of the periodic kernel") {
  const KernelSpec periodic = KernelSpec::periodic(1.0, 1.0, 2.0);
  CHECK(kernel_grad_z(periodic, 0.0, 1.0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("hyperparameter gradients: closed-form spot checks") {
  const KernelSpec se = KernelSpec::squared_exponential(1.0, 1.0);
  const Eigen::VectorXd g = kernel_hyper_grads(se, 0.0, 0.0);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-15));  // d/d log(sf2) of sf2
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-15));

  const KernelSpec periodic = KernelSpec::periodic(1.4, 0.9, 3.0);
  const Eigen::VectorXd gp = kernel_hyper_grads(periodic, 2.0, 2.0);
  REQUIRE(gp.size() == 3);
  CHECK(gp[2] == doctest::Approx(0.0).epsilon(1e-15));  // k(z,z) independent of period
}

TEST_CASE("hyperparameter gradients match finite differences in log space") {
  Stream rng(17);
  for (KernelSpec spec : {quasi_periodic(), with_drift()}) {
    const Eigen::VectorXd params = spec.log_params();
    for (int trial = 0; trial < 10; ++trial) {
      const double z = rng.uniform(-3.0, 3.0);
      const double zp = rng.uniform(-3.0, 3.0);
      const Eigen::VectorXd analytic = kernel_hyper_grads(spec, z, zp);
      for (Eigen::Index j = 0; j < params.size(); ++j) {
        const double numeric = testutil::central_difference(
            [&](double value) {
              Eigen::VectorXd shifted = params;
              shifted[j] = value;
              KernelSpec probe = spec;
              probe.set_log_params(shifted);
              return kernel_eval(probe, z, zp);
            },
            params[j], 1e-6);
        CHECK(std::abs(analytic[j] - numeric) < 1e-6);
      }
    }
  }
}

TEST_CASE("gram matrices are positive semidefinite up to tiny jitter") {
  Stream rng(23);
  for (const KernelSpec& spec : {quasi_periodic(), with_drift()}) {
    Eigen::VectorXd inputs(10);
    for (int i = 0; i < 10; ++i) inputs[i] = rng.uniform(-20.0, 20.0);
    Eigen::MatrixXd gram = kernel_matrix(spec, inputs, inputs);
    gram.diagonal().array() += 1e-10;
    const Eigen::LLT<Eigen::MatrixXd> llt(gram);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("matrix evaluation agrees with the scalar recursion") {
  Stream rng(29);
  const KernelSpec spec = with_drift();
  Eigen::VectorXd za(6), zb(9);
  for (Eigen::Index i = 0; i < za.size(); ++i) za[i] = rng.uniform(-5.0, 5.0);
  for (Eigen::Index i = 0; i < zb.size(); ++i) zb[i] = rng.uniform(-5.0, 5.0);

  Eigen::MatrixXd k, dk;
  gptrack::gp::kernel_matrix_with_grad(spec, za, zb, k, dk);
  std::vector<Eigen::MatrixXd> hyper;
  Eigen::MatrixXd k2;
  gptrack::gp::kernel_matrix_with_hyper_grads(spec, za, zb, k2, hyper);

  for (Eigen::Index i = 0; i < za.size(); ++i) {
    for (Eigen::Index j = 0; j < zb.size(); ++j) {
      CHECK(k(i, j) == doctest::Approx(kernel_eval(spec, za[i], zb[j])).epsilon(1e-14));
      CHECK(k2(i, j) == doctest::Approx(k(i, j)).epsilon(1e-14));
      CHECK(dk(i, j) ==
            doctest::Approx(kernel_grad_z(spec, za[i], zb[j])).epsilon(1e-13));
      const Eigen::VectorXd scalar_hyper = kernel_hyper_grads(spec, za[i], zb[j]);
      for (std::size_t p = 0; p < hyper.size(); ++p) {
        CHECK(hyper[p](i, j) ==
              doctest::Approx(scalar_hyper[static_cast<Eigen::Index>(p)]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("log parameter round trip preserves depth-first order") {
  KernelSpec spec = with_drift();
  const Eigen::VectorXd params = spec.log_params();
  REQUIRE(params.size() == 7);  // periodic(3) + se(2) + se(2)
  Eigen::VectorXd shifted = params;
  shifted.array() += 0.25;
  spec.set_log_params(shifted);
  CHECK((spec.log_params() - shifted).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK_THROWS_AS(spec.set_log_params(Eigen::VectorXd::Zero(3)),
                  gptrack::DimensionMismatch);
}
