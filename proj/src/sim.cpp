#include "gptrack/sim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gptrack/errors.hpp"

namespace gptrack::sim {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

gp::KernelSpec quasi_periodic_family(bool with_drift_term) {
  gp::KernelSpec core = gp::KernelSpec::product(
      gp::KernelSpec::periodic(1.0, 1.0, 4.0),
      gp::KernelSpec::squared_exponential(1.0, 10.0));
  if (!with_drift_term) return core;
  return gp::KernelSpec::sum(std::move(core),
                             gp::KernelSpec::squared_exponential(0.1, 30.0));
}

void BreathingConfig::validate() const {
  for (const auto& ch : channels) {
    if (!(ch.period > 0.0)) {
      throw ContractViolation("breathing: base period must be positive");
    }
    if (!(ch.mod_depth >= 0.0 && ch.mod_depth < 1.0)) {
      throw ContractViolation("breathing: modulation depth must be in [0, 1)");
    }
    if (ch.mod_depth > 0.0 && !(ch.mod_period > ch.period)) {
      throw ContractViolation("breathing: modulation period must exceed the base period");
    }
  }
}

Vector6d breathing_pose(const BreathingConfig& cfg, double t) {
  Vector6d pose;
  for (int c = 0; c < kChannels; ++c) {
    const BreathingChannel& ch = cfg.channels[static_cast<std::size_t>(c)];
    const double envelope =
        ch.mod_depth > 0.0 ? 1.0 + ch.mod_depth * std::sin(kTwoPi * t / ch.mod_period)
                           : 1.0;
    pose[c] = ch.amplitude * envelope * std::sin(kTwoPi * t / ch.period + ch.phase) +
              ch.drift * t;
  }
  return pose;
}

void SensorConfig::validate() const {
  if (!(rate_hz > 0.0)) {
    throw ContractViolation("sensor: rate must be positive");
  }
  if (noise_sigma.minCoeff() < 0.0) {
    throw ContractViolation("sensor: noise sigma must be >= 0");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw ContractViolation("sensor: dropout probability must be in [0, 1)");
  }
}

std::optional<ref::PoseSample> sense(const Vector6d& truth, const SensorConfig& cfg,
                                     SensorState& state, double t) {
  // noise first, so dropout decisions never shift the noise stream
  ref::PoseSample sample;
  sample.t = t;
  for (int c = 0; c < kChannels; ++c) {
    sample.pose[c] = truth[c] + (cfg.noise_sigma[c] > 0.0
                                     ? cfg.noise_sigma[c] * state.rng.normal()
                                     : 0.0);
  }

  bool dropped = false;
  if (state.burst_remaining > 0) {
    --state.burst_remaining;
    dropped = true;
  } else if (cfg.dropout_prob > 0.0 && state.rng.uniform() < cfg.dropout_prob) {
    state.burst_remaining = state.rng.geometric(cfg.dropout_mean_burst) - 1;
    dropped = true;
  }
  if (cfg.forced_dropout_start >= 0.0 && t >= cfg.forced_dropout_start &&
      t < cfg.forced_dropout_start + cfg.forced_dropout_duration) {
    dropped = true;
  }
  if (dropped) return std::nullopt;
  return sample;
}

namespace {

struct SpeedProfile {
  double length = 0.0;
  double speed = 0.0;
  double ramp = 0.5;
  double duration = 0.0;

  double position(double t) const {
    if (length <= 0.0) return 0.0;
    if (t <= 0.0) return 0.0;
    if (t >= duration) return length;
    const double accel = speed / ramp;
    if (t < ramp) return 0.5 * accel * t * t;
    if (t < duration - ramp) return speed * (t - 0.5 * ramp);
    const double remaining = duration - t;
    return length - 0.5 * accel * remaining * remaining;
  }

  double velocity(double t) const {
    if (length <= 0.0 || t <= 0.0 || t >= duration) return 0.0;
    const double accel = speed / ramp;
    if (t < ramp) return accel * t;
    if (t < duration - ramp) return speed;
    return accel * (duration - t);
  }
};

// Feedback-only iterations with gain 1/dt behave like Newton steps and pin
// each waypoint to the commanded pose.
Vector7d converge_at_pose(const kin::DhTable& dh, const kin::PoseEuler& target,
                          Vector7d q, const kin::IkConfig& ik, double tol,
                          int max_iterations) {
  kin::IkConfig newton = ik;
  newton.gain.setConstant(1.0 / ik.dt);
  for (int i = 0; i < max_iterations; ++i) {
    const kin::ClikResult step =
        kin::clik_step(q, Vector7d::Zero(), target, Vector6d::Zero(), dh, newton);
    q = step.q_next;
    if (step.error.lpNorm<Eigen::Infinity>() <= tol) return q;
  }
  throw PathUnreachable("inverse kinematics did not converge at a path waypoint");
}

}  // namespace

PathPlan plan_insertion_path(const kin::DhTable& dh, const kin::PoseEuler& goal,
                             double feed_length, double feed_speed, double ts,
                             const kin::IkConfig& ik, const Vector7d& q_init) {
  if (feed_length < 0.0 || !(ts > 0.0)) {
    throw ContractViolation("plan_insertion_path: bad feed length or sampling time");
  }
  if (feed_length > 0.0 && !(feed_speed > 0.0)) {
    throw ContractViolation("plan_insertion_path: feed speed must be positive");
  }
  if (feed_length > 0.0 && feed_length < 0.5 * feed_speed) {
    throw ContractViolation("plan_insertion_path: feed too short for the speed ramp");
  }

  const Eigen::Vector3d direction =
      kin::euler_zyx_to_rotation(goal.euler) * Eigen::Vector3d::UnitZ();
  kin::PoseEuler start = goal;
  start.position -= feed_length * direction;

  SpeedProfile profile;
  profile.length = feed_length;
  profile.speed = feed_speed;
  profile.duration = feed_length > 0.0 ? feed_length / feed_speed + profile.ramp : 0.0;

  const int waypoints =
      feed_length > 0.0 ? static_cast<int>(std::ceil(profile.duration / ts)) + 1 : 1;

  PathPlan plan;
  plan.ts = ts;
  plan.duration = profile.duration;
  plan.q.resize(kJoints, waypoints);
  plan.qd.resize(kJoints, waypoints);
  plan.cart.resize(static_cast<std::size_t>(waypoints));
  plan.cart_velocity.resize(static_cast<std::size_t>(waypoints));

  Vector7d q;
  try {
    q = converge_at_pose(dh, start, q_init, ik, 1e-12, 20000);
  } catch (const Error& e) {
    throw PathUnreachable(std::string("start pose unreachable: ") + e.what());
  }

  for (int j = 0; j < waypoints; ++j) {
    const double t = static_cast<double>(j) * ts;
    kin::PoseEuler pose = start;
    pose.position += profile.position(t) * direction;
    Vector6d velocity = Vector6d::Zero();
    velocity.head<3>() = profile.velocity(t) * direction;

    if (j > 0) {
      try {
        const kin::ClikResult step =
            kin::clik_step(q, Vector7d::Zero(), pose, velocity, dh, ik);
        q = converge_at_pose(dh, pose, step.q_next, ik, 1e-10, 200);
      } catch (const Error& e) {
        throw PathUnreachable(std::string("waypoint ") + std::to_string(j) +
                              " unreachable: " + e.what());
      }
    }
    plan.q.col(j) = q;
    plan.cart[static_cast<std::size_t>(j)] = pose;
    plan.cart_velocity[static_cast<std::size_t>(j)] = velocity;
  }

  if (waypoints > 1) {
    plan.qd.leftCols(waypoints - 1) =
        (plan.q.rightCols(waypoints - 1) - plan.q.leftCols(waypoints - 1)) / ts;
    plan.qd.col(waypoints - 1) = plan.qd.col(waypoints - 2);
  } else {
    plan.qd.setZero();
  }
  return plan;
}

void SimConfig::validate() const {
  if (!(ts > 0.0) || horizon < 1) {
    throw ContractViolation("sim config: ts must be positive and horizon >= 1");
  }
  if (!(run_duration > 0.0) || !(warmup_duration > 0.0)) {
    throw ContractViolation("sim config: durations must be positive");
  }
  if (!(metrics_settle >= 0.0) || metrics_settle >= run_duration) {
    throw ContractViolation("sim config: metrics settle time must lie inside the run");
  }
  if (feed_start < 0.0) {
    throw ContractViolation("sim config: feed start must be >= 0");
  }
  breathing.validate();
  sensor.validate();
  weights.validate();
  bounds.validate();
  if (warmup_duration * sensor.rate_hz < 2.0) {
    throw ContractViolation("sim config: warmup too short for the sensor rate");
  }
}

namespace {

// Planned Cartesian pose, pose velocity and joint path over the online
// timeline: hold before feed_start, trapezoidal feed, hold at the goal.
struct InsertionSchedule {
  const PathPlan* plan = nullptr;
  double feed_start = 0.0;
  double ts = 0.0;

  int waypoint(double t) const {
    const double local = t - feed_start;
    if (local <= 0.0) return 0;
    const int last = static_cast<int>(plan->q.cols()) - 1;
    const int j = static_cast<int>(std::llround(local / ts));
    return j >= last ? last : j;
  }

  bool moving(double t) const {
    const double local = t - feed_start;
    return local > 0.0 && local < plan->duration;
  }

  kin::PoseEuler pose(double t) const {
    return plan->cart[static_cast<std::size_t>(waypoint(t))];
  }
  Vector6d velocity(double t) const {
    return moving(t) ? plan->cart_velocity[static_cast<std::size_t>(waypoint(t))]
                     : Vector6d::Zero();
  }
  Vector7d qd_path(double t) const {
    return moving(t) ? Vector7d(plan->qd.col(waypoint(t))) : Vector7d::Zero();
  }
};

Vector6d compose_reference(const kin::PoseEuler& planned, const Vector6d& relative) {
  Vector6d out;
  out.head<3>() = planned.position + relative.head<3>();
  for (int i = 0; i < 3; ++i) {
    out[3 + i] = kin::wrap_angle(planned.euler[i] + relative[3 + i]);
  }
  return out;
}

}  // namespace

SimLog run(const SimConfig& cfg) {
  cfg.validate();

  const double sensor_period = 1.0 / cfg.sensor.rate_hz;
  SensorState sensor_state(cfg.sensor.seed);

  // --- offline phase: warmup sensing, hyperparameter fit, path planning ---
  std::vector<ref::PoseSample> warmup;
  const int warmup_count = static_cast<int>(std::floor(cfg.warmup_duration / sensor_period));
  warmup.reserve(static_cast<std::size_t>(warmup_count));
  for (int j = 0; j < warmup_count; ++j) {
    const double t = -cfg.warmup_duration + static_cast<double>(j) * sensor_period;
    const Vector6d truth = breathing_pose(cfg.breathing, t);
    if (auto sample = sense(truth, cfg.sensor, sensor_state, t)) {
      warmup.push_back(*sample);
    }
  }
  if (warmup.size() < 2) {
    throw ContractViolation("sim: warmup produced fewer than two samples");
  }

  ref::ChannelModels models = [&] {
    if (cfg.fitted_models) return *cfg.fitted_models;
    const int fit_count =
        std::min<int>(cfg.gp.fit_window, static_cast<int>(warmup.size()));
    const int offset = static_cast<int>(warmup.size()) - fit_count;
    Eigen::VectorXd times(fit_count);
    for (int i = 0; i < fit_count; ++i) {
      times[i] = warmup[static_cast<std::size_t>(offset + i)].t;
    }
    ref::ChannelModels fitted{
        ref::ChannelModel{cfg.gp.kernel_family, 0.0}, ref::ChannelModel{cfg.gp.kernel_family, 0.0},
        ref::ChannelModel{cfg.gp.kernel_family, 0.0}, ref::ChannelModel{cfg.gp.kernel_family, 0.0},
        ref::ChannelModel{cfg.gp.kernel_family, 0.0}, ref::ChannelModel{cfg.gp.kernel_family, 0.0}};
    for (int c = 0; c < kChannels; ++c) {
      Eigen::VectorXd targets(fit_count);
      for (int i = 0; i < fit_count; ++i) {
        targets[i] = warmup[static_cast<std::size_t>(offset + i)].pose[c];
      }
      gp::HyperOptions options = cfg.gp.hyper;
      options.seed = cfg.gp.hyper.seed + static_cast<std::uint64_t>(c);
      const gp::FitResult fit = gp::optimize_hyperparams(
          cfg.gp.kernel_family, gp::TrainingSet{times, targets, 0.0}, options);
      fitted[static_cast<std::size_t>(c)] = ref::ChannelModel{fit.kernel, fit.noise_var};
    }
    return fitted;
  }();

  const PathPlan plan = plan_insertion_path(cfg.dh, cfg.p_goal, cfg.feed_length,
                                            cfg.feed_speed, cfg.ts, cfg.ik, cfg.q_init);
  const InsertionSchedule schedule{&plan, cfg.feed_start, cfg.ts};

  ref::ReferenceGenerator generator(models, cfg.gp.variance_thresholds);
  for (const auto& sample : warmup) generator.push(sample);

  // --- online phase ---
  const mpc::LtiModel model = mpc::discretize(cfg.ts);
  mpc::TrackingMpc controller(model, cfg.weights, cfg.bounds, cfg.horizon);

  const int ticks = static_cast<int>(std::llround(cfg.run_duration / cfg.ts));
  SimLog log;
  log.ts = cfg.ts;
  log.sensor_period = sensor_period;
  log.settle_time = cfg.metrics_settle;
  log.t.resize(ticks);
  log.truth.resize(kChannels, ticks);
  log.meas.setZero(kChannels, ticks);
  log.sensor_due.setZero(ticks);
  log.meas_valid.setZero(ticks);
  log.gp_mean.resize(kChannels, ticks);
  log.gp_var.resize(kChannels, ticks);
  log.onestep_valid.setZero(ticks);
  log.onestep.setZero(kChannels, ticks);
  log.ref_pose.resize(kChannels, ticks);
  log.fk_pose.resize(kChannels, ticks);
  log.q_ref.resize(kJoints, ticks);
  log.qd_ref.resize(kJoints, ticks);
  log.x.resize(kStates, ticks);
  log.u.resize(kJoints, ticks);
  log.solver_iterations.resize(ticks);
  log.primal_residual.resize(ticks);
  log.dual_residual.resize(ticks);
  log.clik_error.resize(ticks);

  std::optional<rng::Stream> disturbance;
  if (cfg.disturbance.amplitude > 0.0) disturbance.emplace(cfg.disturbance.seed);

  Vector14d x = Vector14d::Zero();
  x.head<kJoints>() = plan.q.col(0);
  Vector7d q_clik = plan.q.col(0);
  int sensor_samples = 0;

  mpc::JointReferenceTrajectory ref_traj;
  ref_traj.states.resize(kStates, cfg.horizon + 1);
  Matrix7Xd qd_traj(kJoints, cfg.horizon + 1);
  Matrix7Xd q_traj(kJoints, cfg.horizon + 1);

  for (int k = 0; k < ticks; ++k) {
    const double t = static_cast<double>(k) * cfg.ts;
    const Vector6d truth = breathing_pose(cfg.breathing, t);
    log.t[k] = t;
    log.truth.col(k) = truth;

    const bool due = t >= static_cast<double>(sensor_samples) * sensor_period - 0.5 * cfg.ts;
    if (due) {
      ++sensor_samples;
      log.sensor_due[k] = 1;
      log.onestep.col(k) = generator.mean_at(t);
      log.onestep_valid[k] = 1;
      if (auto sample = sense(truth, cfg.sensor, sensor_state, t)) {
        generator.push(*sample);
        log.meas.col(k) = sample->pose;
        log.meas_valid[k] = 1;
      }
    }

    const ref::ReferencePrediction prediction = generator.predict(t, cfg.ts, cfg.horizon);
    log.gp_mean.col(k) = prediction.pose_mean.col(0);
    log.gp_var.col(k) = prediction.pose_variance.col(0);

    // joint-space reference: closed-loop inverse kinematics chained along
    // the horizon, starting from the persistent integrated state
    q_traj.col(0) = q_clik;
    for (int i = 0; i <= cfg.horizon; ++i) {
      const double ti = t + static_cast<double>(i) * cfg.ts;
      const kin::PoseEuler planned = schedule.pose(ti);
      const Vector6d target_vec =
          compose_reference(planned, prediction.pose_mean.col(i));
      const Vector6d target_vel =
          schedule.velocity(ti) + Vector6d(prediction.pose_velocity.col(i));
      const kin::PoseEuler target = kin::PoseEuler::from_vec(target_vec);
      const kin::ClikResult step =
          kin::clik_step(q_traj.col(i), schedule.qd_path(ti), target, target_vel,
                         cfg.dh, cfg.ik);
      qd_traj.col(i) = step.qd_ref;
      if (i < cfg.horizon) q_traj.col(i + 1) = step.q_next;
      if (i == 0) {
        log.ref_pose.col(k) = target_vec;
        log.clik_error[k] = step.error.norm();
        q_clik = step.q_next;  // advance the integration by one control step
      }
    }
    ref_traj.states.topRows<kJoints>() = q_traj;
    ref_traj.states.bottomRows<kJoints>() = qd_traj;
    ref_traj.inputs = mpc::reference_input(qd_traj, cfg.ts);

    const auto [u0, solution] = controller.step(x, ref_traj);
    if (solution.status != mpc::SolveStatus::Converged) {
      throw SolveFailure("sim: QP solver hit the iteration limit at t = " +
                         std::to_string(t));
    }

    Vector7d u_applied = u0;
    if (disturbance) {
      for (int j = 0; j < kJoints; ++j) {
        u_applied[j] += disturbance->uniform(-cfg.disturbance.amplitude,
                                             cfg.disturbance.amplitude);
      }
    }

    log.fk_pose.col(k) = kin::forward_kinematics(cfg.dh, x.head<kJoints>()).vec();
    log.q_ref.col(k) = q_traj.col(0);
    log.qd_ref.col(k) = qd_traj.col(0);
    log.x.col(k) = x;
    log.u.col(k) = u_applied;
    log.solver_iterations[k] = solution.iterations;
    log.primal_residual[k] = solution.primal_residual;
    log.dual_residual[k] = solution.dual_residual;

    x = model.a * x + model.b * u_applied;
  }

  log.models = models;
  return log;
}

Metrics compute_metrics(const SimLog& log) {
  if (log.ticks() == 0) {
    throw EmptyLog("compute_metrics: log has no rows");
  }

  Metrics m;
  m.ticks = log.ticks();
  m.settle_time = log.settle_time;

  double pos_sq_sum = 0.0, ang_sq_sum = 0.0;
  int counted = 0;
  for (int k = 0; k < log.ticks(); ++k) {
    if (log.t[k] < log.settle_time - 1e-12) continue;
    const double pos_err =
        (log.fk_pose.col(k).head<3>() - log.ref_pose.col(k).head<3>()).norm();
    double ang_err = 0.0;
    for (int i = 3; i < 6; ++i) {
      ang_err = std::max(
          ang_err, std::abs(kin::wrap_angle(log.fk_pose(i, k) - log.ref_pose(i, k))));
    }
    m.max_pos_err = std::max(m.max_pos_err, pos_err);
    m.max_ang_err = std::max(m.max_ang_err, ang_err);
    pos_sq_sum += pos_err * pos_err;
    ang_sq_sum += ang_err * ang_err;
    ++counted;
  }
  if (counted == 0) {
    throw ContractViolation("compute_metrics: settle window leaves no samples");
  }
  m.rms_pos_err = std::sqrt(pos_sq_sum / counted);
  m.rms_ang_err = std::sqrt(ang_sq_sum / counted);

  Vector6d sq_sum = Vector6d::Zero();
  int events = 0;
  for (int k = 0; k < log.ticks(); ++k) {
    if (log.sensor_due[k] && !log.meas_valid[k]) ++m.dropout_count;
    if (!log.onestep_valid[k]) continue;
    const Vector6d err = log.onestep.col(k) - log.truth.col(k);
    m.onestep_max = m.onestep_max.cwiseMax(err.cwiseAbs());
    sq_sum += err.cwiseAbs2();
    ++events;
  }
  if (events > 0) {
    m.onestep_rms = (sq_sum / events).cwiseSqrt();
  }

  long iter_sum = 0;
  for (int k = 0; k < log.ticks(); ++k) {
    iter_sum += log.solver_iterations[k];
    m.max_solver_iterations = std::max(m.max_solver_iterations, log.solver_iterations[k]);
  }
  m.mean_solver_iterations = static_cast<double>(iter_sum) / log.ticks();
  return m;
}

}  // namespace gptrack::sim
