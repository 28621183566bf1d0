#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gptrack/gp.hpp"
#include "gptrack/types.hpp"

namespace gptrack::ref {

/// One tracking observation: time plus the 6-DOF pose (x, y, z, roll,
/// pitch, yaw in ZYX convention) relative to the goal pose.
struct PoseSample {
  double t = 0.0;
  Vector6d pose = Vector6d::Zero();

  void validate() const;
};

/// Sliding window of the most recent pose samples. Pushing at capacity
/// evicts the oldest sample; timestamps must be strictly increasing.
class ObservationWindow {
 public:
  explicit ObservationWindow(int capacity = 200);

  void push(const PoseSample& sample);  // throws NonMonotoneTimestamp

  int size() const { return static_cast<int>(count_); }
  int capacity() const { return capacity_; }
  bool empty() const { return count_ == 0; }
  double last_time() const;

  /// i = 0 is the oldest retained sample.
  const PoseSample& at(int i) const;

  Eigen::VectorXd times() const;
  Eigen::VectorXd channel(int c) const;

  /// Increments on every push; lets callers cache per-window fits.
  std::uint64_t revision() const { return revision_; }

 private:
  int capacity_;
  std::size_t count_ = 0;
  std::size_t head_ = 0;  // index of the oldest sample
  std::vector<PoseSample> ring_;
  std::uint64_t revision_ = 0;
};

/// grid_i = t_now + i ts for i = 0..n.
Eigen::VectorXd horizon_grid(double t_now, double ts, int n);

/// Fitted kernel and noise level of one output channel.
struct ChannelModel {
  gp::KernelSpec kernel;
  double noise_var = 0.0;
};

using ChannelModels = std::array<ChannelModel, kChannels>;

/// Horizon-aligned predictions of all six channels: posterior means,
/// mean derivatives (velocities) and variances, plus one safety flag per
/// channel that trips when the maximum variance on the grid exceeds the
/// channel threshold.
struct ReferencePrediction {
  Eigen::VectorXd grid;
  Matrix6Xd pose_mean;
  Matrix6Xd pose_velocity;
  Matrix6Xd pose_variance;
  std::array<bool, kChannels> safety_flags{};
};

/// Fits each channel on the current window and predicts over the horizon
/// grid. Channel failures are rethrown with the channel index attached.
ReferencePrediction predict_reference(const ObservationWindow& window,
                                      const ChannelModels& models, double t_now,
                                      double ts, int n,
                                      const Vector6d& variance_thresholds);

/// Identical to predict_reference on the stale window: the prediction is a
/// pure function of the stored samples, so sensor silence only means the
/// grid extrapolates further.
ReferencePrediction on_dropout(const ObservationWindow& window,
                               const ChannelModels& models, double t_now, double ts,
                               int n, const Vector6d& variance_thresholds);

/// predict_reference with the per-channel fits cached between pushes.
/// Output is identical to the free function on the same window.
class ReferenceGenerator {
 public:
  ReferenceGenerator(ChannelModels models, Vector6d variance_thresholds,
                     int capacity = 200);

  void push(const PoseSample& sample);
  ReferencePrediction predict(double t_now, double ts, int n);

  /// Posterior means at a single time, cheap path for one-step logging.
  Vector6d mean_at(double t);

  const ObservationWindow& window() const { return window_; }

 private:
  void refit_if_needed();

  ObservationWindow window_;
  ChannelModels models_;
  Vector6d variance_thresholds_;
  std::array<std::optional<gp::TrainedGP>, kChannels> fits_;
  std::uint64_t fitted_revision_ = 0;
};

}  // namespace gptrack::ref
