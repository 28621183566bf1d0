#include "gptrack/kinematics.hpp"

#include <cmath>
#include <numbers>

#include "gptrack/errors.hpp"

namespace gptrack::kin {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kEulerGuard = 1e-6;
}  // namespace

DhTable DhTable::default_arm() {
  DhTable table;
  const double d[kJoints] = {0.36, 0.0, 0.42, 0.0, 0.40, 0.0, 0.126};
  const double alpha[kJoints] = {-kPi / 2, kPi / 2, -kPi / 2, kPi / 2,
                                 -kPi / 2, kPi / 2, 0.0};
  for (int i = 0; i < kJoints; ++i) {
    table.rows[static_cast<std::size_t>(i)] = DhRow{0.0, alpha[i], d[i], 0.0};
  }
  return table;
}

Vector6d PoseEuler::vec() const {
  Vector6d v;
  v << position, euler;
  return v;
}

PoseEuler PoseEuler::from_vec(const Vector6d& v) {
  return PoseEuler{v.head<3>(), v.tail<3>()};
}

double wrap_angle(double angle) {
  angle = std::fmod(angle, 2.0 * kPi);
  if (angle > kPi) angle -= 2.0 * kPi;
  if (angle <= -kPi) angle += 2.0 * kPi;
  return angle;
}

Eigen::Matrix4d dh_transform(const DhRow& row, double q) {
  const double theta = q + row.theta_offset;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0.0, sa, ca, row.d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

std::array<Eigen::Matrix4d, kJoints + 1> chain_frames(const DhTable& dh,
                                                      const Vector7d& q) {
  std::array<Eigen::Matrix4d, kJoints + 1> frames;
  frames[0] = Eigen::Matrix4d::Identity();
  for (int i = 0; i < kJoints; ++i) {
    frames[static_cast<std::size_t>(i + 1)] =
        frames[static_cast<std::size_t>(i)] *
        dh_transform(dh.rows[static_cast<std::size_t>(i)], q[i]);
  }
  return frames;
}

Eigen::Matrix3d euler_zyx_to_rotation(const Eigen::Vector3d& euler) {
  return (Eigen::AngleAxisd(euler[2], Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(euler[1], Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(euler[0], Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d rotation_to_euler_zyx(const Eigen::Matrix3d& r) {
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  if (cos_pitch < kEulerGuard) {
    throw EulerSingularity("pitch too close to +-pi/2 for ZYX Euler extraction");
  }
  return {std::atan2(r(2, 1), r(2, 2)), std::atan2(-r(2, 0), cos_pitch),
          std::atan2(r(1, 0), r(0, 0))};
}

PoseEuler forward_kinematics(const DhTable& dh, const Vector7d& q) {
  const auto frames = chain_frames(dh, q);
  const Eigen::Matrix4d& tool = frames[kJoints];
  const Eigen::Matrix3d rotation = tool.topLeftCorner<3, 3>();
  const double drift =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  if (drift > 1e-10) {
    throw NumericalError("forward kinematics rotation lost orthonormality");
  }
  return PoseEuler{tool.topRightCorner<3, 1>(), rotation_to_euler_zyx(rotation)};
}

Matrix6x7d geometric_jacobian(const DhTable& dh, const Vector7d& q) {
  const auto frames = chain_frames(dh, q);
  const Eigen::Vector3d tool_position = frames[kJoints].topRightCorner<3, 1>();
  Matrix6x7d jac;
  for (int i = 0; i < kJoints; ++i) {
    const auto& frame = frames[static_cast<std::size_t>(i)];
    const Eigen::Vector3d axis = frame.block<3, 1>(0, 2);
    const Eigen::Vector3d origin = frame.topRightCorner<3, 1>();
    jac.block<3, 1>(0, i) = axis.cross(tool_position - origin);
    jac.block<3, 1>(3, i) = axis;
  }
  return jac;
}

Eigen::Matrix3d euler_rate_transform(const Eigen::Vector3d& euler) {
  const double cp = std::cos(euler[1]), sp = std::sin(euler[1]);
  const double cy = std::cos(euler[2]), sy = std::sin(euler[2]);
  Eigen::Matrix3d t;
  t << cy * cp, -sy, 0.0,
       sy * cp, cy, 0.0,
       -sp, 0.0, 1.0;
  return t;
}

Matrix6x7d analytic_jacobian(const DhTable& dh, const Vector7d& q) {
  const PoseEuler pose = forward_kinematics(dh, q);  // throws near the singularity
  const Eigen::Matrix3d t_a = euler_rate_transform(pose.euler);
  if (std::abs(std::cos(pose.euler[1])) < kEulerGuard) {
    throw EulerSingularity("analytic Jacobian undefined at pitch = +-pi/2");
  }
  Matrix6x7d jac = geometric_jacobian(dh, q);
  jac.bottomRows<3>() = t_a.partialPivLu().solve(jac.bottomRows<3>());
  return jac;
}

Matrix7x6d damped_pseudoinverse(const Matrix6x7d& jacobian, double damping) {
  Matrix6d gram = jacobian * jacobian.transpose();
  gram.diagonal().array() += damping * damping;
  const Eigen::LLT<Matrix6d> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw SolveFailure("J J' + damping^2 I is singular");
  }
  return llt.solve(jacobian).transpose();
}

Vector6d pose_error(const PoseEuler& desired, const PoseEuler& actual) {
  Vector6d e;
  e.head<3>() = desired.position - actual.position;
  for (int i = 0; i < 3; ++i) {
    e[3 + i] = wrap_angle(desired.euler[i] - actual.euler[i]);
  }
  return e;
}

ClikResult clik_step(const Vector7d& q_ref, const Vector7d& qd_path,
                     const PoseEuler& target, const Vector6d& target_velocity,
                     const DhTable& dh, const IkConfig& cfg) {
  const PoseEuler pose = forward_kinematics(dh, q_ref);
  const Vector6d error = pose_error(target, pose);
  const Matrix6x7d jac = analytic_jacobian(dh, q_ref);
  const Matrix7x6d jac_pinv = damped_pseudoinverse(jac, cfg.damping);

  ClikResult result;
  result.error = error;
  result.qd_ref = jac_pinv * (target_velocity + cfg.gain.cwiseProduct(error)) +
                  (Eigen::Matrix<double, 7, 7>::Identity() - jac_pinv * jac) * qd_path;
  result.q_next = q_ref + cfg.dt * result.qd_ref;
  return result;
}

}  // namespace gptrack::kin
