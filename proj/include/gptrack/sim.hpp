#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gptrack/gp.hpp"
#include "gptrack/kinematics.hpp"
#include "gptrack/mpc.hpp"
#include "gptrack/reference.hpp"
#include "gptrack/rng.hpp"
#include "gptrack/types.hpp"

namespace gptrack::sim {

/// Amplitude-modulated sinusoid with optional linear drift per channel:
///   A (1 + depth sin(2 pi t / T_mod)) sin(2 pi t / T_b + phase) + drift t
struct BreathingChannel {
  double amplitude = 0.0;   // m or rad
  double period = 4.0;      // base period T_b [s]
  double mod_depth = 0.0;   // in [0, 1)
  double mod_period = 30.0; // [s], > period
  double phase = 0.0;       // [rad]
  double drift = 0.0;       // units per second
};

struct BreathingConfig {
  std::array<BreathingChannel, kChannels> channels;

  void validate() const;
};

Vector6d breathing_pose(const BreathingConfig& cfg, double t);

struct SensorConfig {
  double rate_hz = 25.0;
  Vector6d noise_sigma = Vector6d::Zero();  // m, rad
  double dropout_prob = 0.0;                // per tick, starts a burst
  double dropout_mean_burst = 3.0;          // mean burst length in ticks
  std::uint64_t seed = 0;
  // deterministic line-of-sight loss window, disabled when start < 0
  double forced_dropout_start = -1.0;
  double forced_dropout_duration = 0.0;

  void validate() const;
};

struct SensorState {
  explicit SensorState(std::uint64_t seed) : rng(seed) {}
  rng::Stream rng;
  int burst_remaining = 0;
};

/// Noisy measurement of the truth pose, or nothing while a dropout is
/// active. Noise is always drawn so that forced dropout windows do not
/// shift the random stream.
std::optional<ref::PoseSample> sense(const Vector6d& truth, const SensorConfig& cfg,
                                     SensorState& state, double t);

/// Joint-space insertion path: a Cartesian straight line of length
/// feed_length along the tool z axis ending at the goal pose, traversed
/// with a trapezoidal speed profile (ramp time 0.5 s) and converted by
/// running the closed-loop inverse kinematics along the waypoints.
struct PathPlan {
  Matrix7Xd q;               // 7 x (M+1)
  Matrix7Xd qd;              // 7 x (M+1), forward differences, last repeated
  std::vector<kin::PoseEuler> cart;      // commanded poses
  std::vector<Vector6d> cart_velocity;   // commanded pose velocities
  double ts = 0.0;
  double duration = 0.0;     // feed_length/feed_speed + 0.5 s
};

PathPlan plan_insertion_path(const kin::DhTable& dh, const kin::PoseEuler& goal,
                             double feed_length, double feed_speed, double ts,
                             const kin::IkConfig& ik, const Vector7d& q_init);

/// Product of a periodic and a squared exponential kernel, the standard
/// quasi-periodic construction; optionally plus a slow squared
/// exponential drift term.
gp::KernelSpec quasi_periodic_family(bool with_drift_term = false);

struct GpConfig {
  gp::KernelSpec kernel_family = quasi_periodic_family();
  gp::HyperOptions hyper;
  int fit_window = 200;
  /// (1 mm)^2 for positions, (0.1 deg)^2 for angles.
  Vector6d variance_thresholds =
      (Vector6d() << 1e-6, 1e-6, 1e-6, 3.0462e-6, 3.0462e-6, 3.0462e-6).finished();
};

struct DisturbanceConfig {
  double amplitude = 0.0;  // rad/s^2, uniform in [-amplitude, amplitude]
  std::uint64_t seed = 0;
};

struct SimConfig {
  kin::DhTable dh = kin::DhTable::default_arm();
  Vector7d q_init = Vector7d::Zero();
  kin::PoseEuler p_goal;
  double feed_length = 0.10;   // [m]
  double feed_speed = 0.005;   // [m/s]
  double feed_start = 2.0;     // [s] into the online phase
  double warmup_duration = 20.0;
  double run_duration = 60.0;
  double metrics_settle = 2.0;
  double ts = 0.005;
  int horizon = 30;
  BreathingConfig breathing;
  SensorConfig sensor;
  GpConfig gp;
  kin::IkConfig ik;
  mpc::MpcWeights weights = mpc::MpcWeights::defaults();
  mpc::Bounds bounds = mpc::Bounds::defaults();
  DisturbanceConfig disturbance;
  /// Skips the offline hyperparameter fit when set.
  std::optional<ref::ChannelModels> fitted_models;

  void validate() const;
};

/// Closed-loop trace sampled at the control rate; column k corresponds to
/// time k ts. Poses are 6-vectors (m, rad), joint data in rad.
struct SimLog {
  double ts = 0.0;
  double sensor_period = 0.0;
  double settle_time = 0.0;
  Eigen::VectorXd t;
  Matrix6Xd truth;       // noiseless relative pose
  Matrix6Xd meas;        // zero when invalid
  Eigen::VectorXi sensor_due;
  Eigen::VectorXi meas_valid;
  Matrix6Xd gp_mean;     // prediction at grid index 0
  Matrix6Xd gp_var;
  Eigen::VectorXi onestep_valid;
  Matrix6Xd onestep;     // prediction at this sample time from the pre-push window
  Matrix6Xd ref_pose;    // composed Cartesian reference (absolute)
  Matrix6Xd fk_pose;     // forward kinematics of the plant state (absolute)
  Matrix7Xd q_ref;
  Matrix7Xd qd_ref;
  Matrix14Xd x;          // plant state at tick start
  Matrix7Xd u;           // applied input
  Eigen::VectorXi solver_iterations;
  Eigen::VectorXd primal_residual;
  Eigen::VectorXd dual_residual;
  Eigen::VectorXd clik_error;  // norm of the task-space error at grid 0

  int ticks() const { return static_cast<int>(t.size()); }
  /// Fitted channel models used during the run (for the hyperparameter file).
  std::optional<ref::ChannelModels> models;
  std::array<double, kChannels> model_mll{};
};

struct Metrics {
  double max_pos_err = 0.0;  // [m], vs the composed GP reference, t >= settle
  double rms_pos_err = 0.0;
  double max_ang_err = 0.0;  // [rad]
  double rms_ang_err = 0.0;
  Vector6d onestep_rms = Vector6d::Zero();  // per channel, vs noiseless truth
  Vector6d onestep_max = Vector6d::Zero();
  int dropout_count = 0;
  double mean_solver_iterations = 0.0;
  int max_solver_iterations = 0;
  int ticks = 0;
  double settle_time = 0.0;
  double wall_clock_seconds = 0.0;  // informational, never serialized
};

SimLog run(const SimConfig& cfg);

Metrics compute_metrics(const SimLog& log);

}  // namespace gptrack::sim
