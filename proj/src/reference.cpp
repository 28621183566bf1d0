#include "gptrack/reference.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gptrack/errors.hpp"

namespace gptrack::ref {

void PoseSample::validate() const {
  if (!std::isfinite(t) || !pose.allFinite()) {
    throw ContractViolation("pose sample: values must be finite");
  }
  if (std::abs(pose[4]) >= std::numbers::pi / 2 - 1e-3) {
    throw ContractViolation("pose sample: pitch too close to the Euler singularity");
  }
}

ObservationWindow::ObservationWindow(int capacity) : capacity_(capacity) {
  if (capacity < 1) {
    throw ContractViolation("observation window: capacity must be >= 1");
  }
  ring_.reserve(static_cast<std::size_t>(capacity));
}

void ObservationWindow::push(const PoseSample& sample) {
  sample.validate();
  if (count_ > 0 && !(sample.t > last_time())) {
    throw NonMonotoneTimestamp("observation window: timestamps must increase");
  }
  if (static_cast<int>(count_) < capacity_) {
    ring_.push_back(sample);
    ++count_;
  } else {
    ring_[head_] = sample;
    head_ = (head_ + 1) % ring_.size();
  }
  ++revision_;
}

double ObservationWindow::last_time() const {
  if (count_ == 0) {
    throw ContractViolation("observation window: empty");
  }
  return at(static_cast<int>(count_) - 1).t;
}

const PoseSample& ObservationWindow::at(int i) const {
  if (i < 0 || i >= static_cast<int>(count_)) {
    throw ContractViolation("observation window: index out of range");
  }
  return ring_[(head_ + static_cast<std::size_t>(i)) % ring_.size()];
}

Eigen::VectorXd ObservationWindow::times() const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out[i] = at(i).t;
  return out;
}

Eigen::VectorXd ObservationWindow::channel(int c) const {
  if (c < 0 || c >= kChannels) {
    throw ContractViolation("observation window: channel index out of range");
  }
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out[i] = at(i).pose[c];
  return out;
}

Eigen::VectorXd horizon_grid(double t_now, double ts, int n) {
  if (!(ts > 0.0)) {
    throw ContractViolation("horizon grid: sampling time must be positive");
  }
  if (n < 1) {
    throw ContractViolation("horizon grid: need at least one step");
  }
  Eigen::VectorXd grid(n + 1);
  for (int i = 0; i <= n; ++i) grid[i] = t_now + static_cast<double>(i) * ts;
  return grid;
}

namespace {

ReferencePrediction predict_from_fits(
    const std::array<std::optional<gp::TrainedGP>, kChannels>& fits, double t_now,
    double ts, int n, const Vector6d& variance_thresholds) {
  ReferencePrediction out;
  out.grid = horizon_grid(t_now, ts, n);
  out.pose_mean.resize(kChannels, n + 1);
  out.pose_velocity.resize(kChannels, n + 1);
  out.pose_variance.resize(kChannels, n + 1);
  for (int c = 0; c < kChannels; ++c) {
    try {
      const gp::Prediction p = gp::predict(*fits[static_cast<std::size_t>(c)], out.grid);
      out.pose_mean.row(c) = p.mean.transpose();
      out.pose_velocity.row(c) = p.mean_derivative.transpose();
      out.pose_variance.row(c) = p.variance.transpose();
    } catch (const Error& e) {
      throw NumericalError("channel " + std::to_string(c) + ": " + e.what());
    }
    out.safety_flags[static_cast<std::size_t>(c)] =
        out.pose_variance.row(c).maxCoeff() > variance_thresholds[c];
  }
  return out;
}

gp::TrainedGP fit_channel(const ObservationWindow& window, const ChannelModel& model,
                          int c) {
  gp::TrainingSet data{window.times(), window.channel(c), model.noise_var};
  try {
    return gp::fit(model.kernel, std::move(data));
  } catch (const Error& e) {
    throw NumericalError("channel " + std::to_string(c) + ": " + e.what());
  }
}

}  // namespace

ReferencePrediction predict_reference(const ObservationWindow& window,
                                      const ChannelModels& models, double t_now,
                                      double ts, int n,
                                      const Vector6d& variance_thresholds) {
  if (window.empty()) {
    throw ContractViolation("predict_reference: window is empty");
  }
  std::array<std::optional<gp::TrainedGP>, kChannels> fits;
  for (int c = 0; c < kChannels; ++c) {
    fits[static_cast<std::size_t>(c)] =
        fit_channel(window, models[static_cast<std::size_t>(c)], c);
  }
  return predict_from_fits(fits, t_now, ts, n, variance_thresholds);
}

ReferencePrediction on_dropout(const ObservationWindow& window,
                               const ChannelModels& models, double t_now, double ts,
                               int n, const Vector6d& variance_thresholds) {
  return predict_reference(window, models, t_now, ts, n, variance_thresholds);
}

ReferenceGenerator::ReferenceGenerator(ChannelModels models,
                                       Vector6d variance_thresholds, int capacity)
    : window_(capacity),
      models_(std::move(models)),
      variance_thresholds_(std::move(variance_thresholds)) {}

void ReferenceGenerator::push(const PoseSample& sample) { window_.push(sample); }

void ReferenceGenerator::refit_if_needed() {
  if (window_.empty()) {
    throw ContractViolation("reference generator: no samples received yet");
  }
  if (fitted_revision_ == window_.revision() && fits_[0].has_value()) return;
  for (int c = 0; c < kChannels; ++c) {
    fits_[static_cast<std::size_t>(c)] =
        fit_channel(window_, models_[static_cast<std::size_t>(c)], c);
  }
  fitted_revision_ = window_.revision();
}

ReferencePrediction ReferenceGenerator::predict(double t_now, double ts, int n) {
  refit_if_needed();
  return predict_from_fits(fits_, t_now, ts, n, variance_thresholds_);
}

Vector6d ReferenceGenerator::mean_at(double t) {
  refit_if_needed();
  Vector6d out;
  Eigen::VectorXd point(1);
  point[0] = t;
  for (int c = 0; c < kChannels; ++c) {
    out[c] = gp::predict(*fits_[static_cast<std::size_t>(c)], point).mean[0];
  }
  return out;
}

}  // namespace gptrack::ref
