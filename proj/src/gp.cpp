#include "gptrack/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "gptrack/errors.hpp"
#include "gptrack/rng.hpp"

namespace gptrack::gp {

namespace {

constexpr double kVarianceFloor = -1e-10;

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

// Jitter ladder relative to the mean diagonal of K + noise_var I.
Factorization factorize(Eigen::MatrixXd gram, double noise_var) {
  gram.diagonal().array() += noise_var;
  const double mean_diag = gram.diagonal().mean();
  const double rungs[] = {0.0, 1e-10, 1e-8, 1e-6};
  Factorization f;
  for (double rung : rungs) {
    Eigen::MatrixXd shifted = gram;
    const double jitter = rung * mean_diag;
    shifted.diagonal().array() += jitter;
    f.llt.compute(shifted);
    if (f.llt.info() == Eigen::Success &&
        f.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      f.jitter = jitter;
      return f;
    }
  }
  throw FactorizationFailure("gram matrix is not positive definite after the jitter ladder");
}

double mll_value_only(const KernelSpec& spec, const TrainingSet& data) {
  const Eigen::MatrixXd gram = kernel_matrix(spec, data.inputs, data.inputs);
  Factorization f = factorize(gram, data.noise_var);
  const Eigen::VectorXd alpha = f.llt.solve(data.targets);
  return -0.5 * data.targets.dot(alpha) -
         f.llt.matrixLLT().diagonal().array().log().sum() -
         0.5 * static_cast<double>(data.inputs.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

void TrainingSet::validate() const {
  if (inputs.size() != targets.size()) {
    throw ContractViolation("training set: inputs and targets must have equal length");
  }
  if (inputs.size() < 1) {
    throw ContractViolation("training set: at least one observation required");
  }
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw ContractViolation("training set: values must be finite");
  }
  for (Eigen::Index i = 1; i < inputs.size(); ++i) {
    if (!(inputs[i] > inputs[i - 1])) {
      throw ContractViolation("training set: inputs must be strictly increasing");
    }
  }
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) {
    throw ContractViolation("training set: noise variance must be finite and >= 0");
  }
}

TrainedGP fit(const KernelSpec& spec, TrainingSet data) {
  data.validate();
  const Eigen::MatrixXd gram = kernel_matrix(spec, data.inputs, data.inputs);
  Factorization f = factorize(gram, data.noise_var);
  TrainedGP model{spec, std::move(data), Eigen::MatrixXd(f.llt.matrixL()),
                  Eigen::VectorXd(), f.jitter};
  model.weights = f.llt.solve(model.data.targets);
  return model;
}

Prediction predict(const TrainedGP& model,
                   const Eigen::Ref<const Eigen::VectorXd>& test_inputs) {
  if (!test_inputs.allFinite()) {
    throw ContractViolation("predict: test inputs must be finite");
  }
  Eigen::MatrixXd cross, cross_grad;
  kernel_matrix_with_grad(model.kernel, test_inputs, model.data.inputs, cross, cross_grad);

  Prediction out;
  out.mean = cross * model.weights;
  out.mean_derivative = cross_grad * model.weights;

  // var_i = k(z*_i, z*_i) - || L^-1 k*_i ||^2
  const Eigen::MatrixXd half =
      model.chol_lower.triangularView<Eigen::Lower>().solve(cross.transpose());
  out.variance = kernel_diag(model.kernel, test_inputs) -
                 half.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < out.variance.size(); ++i) {
    if (out.variance[i] < kVarianceFloor) {
      throw NegativeVariance("posterior variance below clamping threshold");
    }
    out.variance[i] = std::max(out.variance[i], 0.0);
  }
  return out;
}

MllResult log_marginal_likelihood(const KernelSpec& spec, const TrainingSet& data) {
  data.validate();
  const Eigen::Index n = data.inputs.size();

  Eigen::MatrixXd gram;
  std::vector<Eigen::MatrixXd> partials;
  kernel_matrix_with_hyper_grads(spec, data.inputs, data.inputs, gram, partials);

  Factorization f = factorize(gram, data.noise_var);
  const Eigen::VectorXd alpha = f.llt.solve(data.targets);

  MllResult result;
  result.value = -0.5 * data.targets.dot(alpha) -
                 f.llt.matrixLLT().diagonal().array().log().sum() -
                 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // d/d theta = 0.5 (alpha' dK alpha - tr(K^-1 dK))
  const Eigen::MatrixXd gram_inv = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  result.gradient.resize(static_cast<Eigen::Index>(partials.size()) + 1);
  for (std::size_t j = 0; j < partials.size(); ++j) {
    const Eigen::MatrixXd& dk = partials[j];
    result.gradient[static_cast<Eigen::Index>(j)] =
        0.5 * (alpha.dot(dk * alpha) - gram_inv.cwiseProduct(dk).sum());
  }
  // dK/d log(noise_var) = noise_var I
  result.gradient[result.gradient.size() - 1] =
      0.5 * data.noise_var * (alpha.squaredNorm() - gram_inv.trace());
  return result;
}

namespace {

struct Box {
  Eigen::VectorXd lo, hi;
};

Box parameter_box(const KernelSpec& family, const TrainingSet& data,
                  const HyperOptions& opt, bool with_noise) {
  const auto kinds = family.param_kinds();
  const int n = static_cast<int>(kinds.size()) + (with_noise ? 1 : 0);
  // periods beyond the observation span are not identifiable
  const double span =
      std::max(data.inputs[data.inputs.size() - 1] - data.inputs[0], 1e-3);
  const double period_hi =
      std::max(opt.period_log_lo + 1e-6,
               std::min(opt.period_log_hi, std::log(1.2 * span)));
  Box box{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    const bool period = kinds[j] == KernelSpec::ParamKind::Period;
    box.lo[static_cast<Eigen::Index>(j)] = period ? opt.period_log_lo : opt.scale_log_lo;
    box.hi[static_cast<Eigen::Index>(j)] = period ? period_hi : opt.scale_log_hi;
  }
  if (with_noise) {
    box.lo[n - 1] = opt.noise_log_lo;
    box.hi[n - 1] = opt.noise_log_hi;
  }
  return box;
}

// Dominant period of the demeaned targets from a dense periodogram,
// clamped to the identifiable range. Used only to place starts.
double dominant_period(const TrainingSet& data, double period_lo, double period_hi) {
  const Eigen::ArrayXd t = data.inputs.array();
  const Eigen::ArrayXd y = (data.targets.array() - data.targets.mean());
  const double span = std::max(t[t.size() - 1] - t[0], 1e-3);
  const double f_lo = 1.0 / std::min(period_hi, 1.2 * span);
  const double f_hi = 1.0 / std::max(period_lo, 4.0 * span / static_cast<double>(t.size()));
  if (!(f_hi > f_lo)) return std::sqrt(period_lo * period_hi);

  double best_power = -1.0, best_f = f_lo;
  const int grid = 600;
  for (int i = 0; i < grid; ++i) {
    const double f = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / (grid - 1));
    const Eigen::ArrayXd angle = 2.0 * std::numbers::pi * f * t;
    const double c = (y * angle.cos()).sum();
    const double s = (y * angle.sin()).sum();
    const double power = c * c + s * s;
    if (power > best_power) {
      best_power = power;
      best_f = f;
    }
  }
  return 1.0 / best_f;
}

struct Start {
  Eigen::VectorXd theta;
  bool confine_period = false;
};

// Stratified log-uniform starts over data-driven ranges: one stratum per
// start and parameter, shuffled independently so that e.g. the noise axis
// is covered even with few starts. Every second start has its period
// pinned near the periodogram estimate (the period axis is where the
// likelihood is multimodal and where plain ascent paths drift); the
// remaining starts keep the full period range and compete on likelihood.
std::vector<Start> sample_starts(const KernelSpec& family,
                                 const TrainingSet& data,
                                 const HyperOptions& opt, bool with_noise,
                                 const Box& box, int count) {
  const auto kinds = family.param_kinds();
  const int dim = static_cast<int>(kinds.size()) + (with_noise ? 1 : 0);

  const double target_var = std::max(
      (data.targets.array() - data.targets.mean()).square().mean(), 1e-12);
  const double span =
      std::max(data.inputs[data.inputs.size() - 1] - data.inputs[0], 1e-3);
  const double mean_dt =
      span / std::max<double>(1.0, static_cast<double>(data.inputs.size() - 1));

  Eigen::VectorXd lo(dim), hi(dim);
  for (int j = 0; j < static_cast<int>(kinds.size()); ++j) {
    switch (kinds[static_cast<std::size_t>(j)]) {
      case KernelSpec::ParamKind::Period:
        lo[j] = std::log(std::max(std::exp(opt.period_log_lo), 4.0 * mean_dt));
        hi[j] = std::log(std::max(std::exp(lo[j]) * 1.01,
                                  std::min(std::exp(opt.period_log_hi), 1.5 * span)));
        break;
      case KernelSpec::ParamKind::SignalVariance:
        lo[j] = std::log(0.05 * target_var);
        hi[j] = std::log(4.0 * target_var);
        break;
      case KernelSpec::ParamKind::LengthScale:
        lo[j] = std::log(std::max(2.0 * mean_dt, 0.02));
        hi[j] = std::log(4.0 * span);
        break;
    }
    lo[j] = std::max(lo[j], box.lo[j]);
    hi[j] = std::min(hi[j], box.hi[j]);
    if (!(hi[j] > lo[j])) hi[j] = lo[j] + 1e-6;
  }
  if (with_noise) {
    lo[dim - 1] = std::max(std::log(1e-5 * target_var), box.lo[dim - 1]);
    hi[dim - 1] = std::min(std::log(0.5 * target_var), box.hi[dim - 1]);
    if (!(hi[dim - 1] > lo[dim - 1])) hi[dim - 1] = lo[dim - 1] + 1e-6;
  }

  rng::Stream stream(opt.seed);
  std::vector<std::vector<int>> strata(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    auto& order = strata[static_cast<std::size_t>(j)];
    order.resize(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) order[static_cast<std::size_t>(s)] = s;
    stream.shuffle(order);
  }

  const double estimate = dominant_period(data, std::exp(opt.period_log_lo),
                                          std::exp(opt.period_log_hi));

  std::vector<Start> starts;
  starts.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    Start start;
    start.theta.resize(dim);
    start.confine_period = s % 2 == 0;
    for (int j = 0; j < dim; ++j) {
      const double cell = (strata[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] +
                           stream.uniform()) /
                          static_cast<double>(count);
      start.theta[j] = lo[j] + cell * (hi[j] - lo[j]);
      if (start.confine_period && kinds.size() > static_cast<std::size_t>(j) &&
          kinds[static_cast<std::size_t>(j)] == KernelSpec::ParamKind::Period) {
        start.theta[j] = std::min(std::max(std::log(estimate), box.lo[j]), box.hi[j]);
      }
    }
    starts.push_back(std::move(start));
  }
  return starts;
}

// Tightens the period coordinates to +-5% around the start value.
Box confined_box(const KernelSpec& family, const Box& box, const Eigen::VectorXd& theta) {
  Box out = box;
  const auto kinds = family.param_kinds();
  const double margin = std::log(1.05);
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    if (kinds[j] != KernelSpec::ParamKind::Period) continue;
    const Eigen::Index idx = static_cast<Eigen::Index>(j);
    out.lo[idx] = std::max(box.lo[idx], theta[idx] - margin);
    out.hi[idx] = std::min(box.hi[idx], theta[idx] + margin);
  }
  return out;
}

struct Ascent {
  Eigen::VectorXd theta;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool ok = false;
};

Ascent ascend(KernelSpec spec, TrainingSet data, Eigen::VectorXd theta,
              const HyperOptions& opt, bool with_noise, const Box& box) {
  const int kernel_params = spec.param_count();
  Ascent result;

  auto apply = [&](const Eigen::VectorXd& t) {
    spec.set_log_params(t.head(kernel_params));
    if (with_noise) data.noise_var = std::exp(t[t.size() - 1]);
  };
  auto clamp = [&](Eigen::VectorXd t) {
    return Eigen::VectorXd(t.cwiseMax(box.lo).cwiseMin(box.hi));
  };

  theta = clamp(std::move(theta));
  apply(theta);

  MllResult current;
  try {
    current = log_marginal_likelihood(spec, data);
  } catch (const FactorizationFailure&) {
    return result;
  }

  double step = 1.0;
  int stagnant = 0;
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    Eigen::VectorXd grad = current.gradient;
    if (!with_noise) grad.conservativeResize(kernel_params);
    // projected gradient: drop components pushing against an active bound
    Eigen::VectorXd projected = grad;
    for (Eigen::Index j = 0; j < projected.size(); ++j) {
      if ((theta[j] <= box.lo[j] && projected[j] < 0.0) ||
          (theta[j] >= box.hi[j] && projected[j] > 0.0)) {
        projected[j] = 0.0;
      }
    }
    if (projected.lpNorm<Eigen::Infinity>() <= opt.grad_tol) break;

    step = std::min(step * 2.0, 1.0 / std::max(1.0, projected.lpNorm<Eigen::Infinity>()));
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      const Eigen::VectorXd candidate = clamp(theta + step * grad);
      const Eigen::VectorXd move = candidate - theta;
      if (move.lpNorm<Eigen::Infinity>() < 1e-14) break;
      apply(candidate);
      double value;
      try {
        value = mll_value_only(spec, data);
      } catch (const FactorizationFailure&) {
        step *= opt.armijo_shrink;
        continue;
      }
      if (std::isfinite(value) &&
          value >= current.value + opt.armijo_slope * grad.dot(move)) {
        const double gain = value - current.value;
        theta = candidate;
        apply(theta);
        current = log_marginal_likelihood(spec, data);
        accepted = true;
        stagnant = gain < 1e-10 * (1.0 + std::abs(current.value)) ? stagnant + 1 : 0;
        break;
      }
      step *= opt.armijo_shrink;
    }
    if (!accepted || stagnant >= 3) break;
  }

  result.theta = theta;
  result.value = current.value;
  result.iterations = iter;
  result.ok = std::isfinite(current.value);
  return result;
}

}  // namespace

FitResult optimize_hyperparams(const KernelSpec& family, const TrainingSet& data,
                               const HyperOptions& options) {
  data.validate();
  if (options.n_starts < 1) {
    throw ContractViolation("optimize_hyperparams: n_starts must be >= 1");
  }
  const bool with_noise = options.train_noise;
  const Box box = parameter_box(family, data, options, with_noise);

  std::vector<Start> starts;
  {
    Start first;
    first.theta.resize(box.lo.size());
    first.theta.head(family.param_count()) = family.log_params();
    if (with_noise) {
      const double target_var = std::max(
          (data.targets.array() - data.targets.mean()).square().mean(), 1e-12);
      const double initial = data.noise_var > 0.0 ? data.noise_var : 1e-4 * target_var;
      first.theta[first.theta.size() - 1] = std::log(initial);
    }
    starts.push_back(std::move(first));
  }
  if (options.n_starts > 1) {
    auto sampled =
        sample_starts(family, data, options, with_noise, box, options.n_starts - 1);
    starts.insert(starts.end(), std::make_move_iterator(sampled.begin()),
                  std::make_move_iterator(sampled.end()));
  }

  std::optional<FitResult> best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const Box start_box = starts[s].confine_period
                              ? confined_box(family, box, starts[s].theta)
                              : box;
    Ascent a = ascend(family, data, starts[s].theta, options, with_noise, start_box);
    if (!a.ok) continue;
    if (!best || a.value > best->mll) {
      KernelSpec fitted = family;
      fitted.set_log_params(a.theta.head(family.param_count()));
      const double noise =
          with_noise ? std::exp(a.theta[a.theta.size() - 1]) : data.noise_var;
      best = FitResult{std::move(fitted), noise, a.value, static_cast<int>(s),
                       a.iterations};
    }
  }
  if (!best) {
    throw AllStartsFailed("every hyperparameter start failed to factorize");
  }
  return *best;
}

FitResult optimize_hyperparams(const KernelSpec& family, const TrainingSet& data,
                               int n_starts, std::uint64_t seed) {
  HyperOptions options;
  options.n_starts = n_starts;
  options.seed = seed;
  return optimize_hyperparams(family, data, options);
}

}  // namespace gptrack::gp
