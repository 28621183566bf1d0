#pragma once

#include <array>

#include <Eigen/Dense>

#include "gptrack/types.hpp"

namespace gptrack::kin {

/// Standard Denavit-Hartenberg parameters of one revolute joint.
struct DhRow {
  double a = 0.0;             // link length [m]
  double alpha = 0.0;         // link twist [rad]
  double d = 0.0;             // link offset [m]
  double theta_offset = 0.0;  // joint angle offset [rad]
};

struct DhTable {
  std::array<DhRow, kJoints> rows;

  /// Lightweight 7-axis arm used by the shipped scenarios: a = 0,
  /// alternating +-pi/2 twists, link offsets 0.36/0.42/0.40/0.126 m.
  static DhTable default_arm();
};

/// Tool pose as position plus ZYX roll-pitch-yaw Euler angles.
struct PoseEuler {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d euler = Eigen::Vector3d::Zero();  // roll, pitch, yaw [rad]

  Vector6d vec() const;
  static PoseEuler from_vec(const Vector6d& v);
};

struct JointState {
  Vector7d q = Vector7d::Zero();
  Vector7d qd = Vector7d::Zero();
};

struct IkConfig {
  Vector6d gain = Vector6d::Constant(20.0);  // diagonal of K [1/s]
  double damping = 1e-4;
  double dt = 0.005;  // integration step [s]
};

double wrap_angle(double angle);  // into (-pi, pi]

Eigen::Matrix4d dh_transform(const DhRow& row, double q);

/// Cumulative transforms base->frame i for i = 0..7 (index 0 is identity).
std::array<Eigen::Matrix4d, kJoints + 1> chain_frames(const DhTable& dh,
                                                      const Vector7d& q);

Eigen::Matrix3d euler_zyx_to_rotation(const Eigen::Vector3d& euler);

/// Throws EulerSingularity when |cos(pitch)| < 1e-6.
Eigen::Vector3d rotation_to_euler_zyx(const Eigen::Matrix3d& rotation);

PoseEuler forward_kinematics(const DhTable& dh, const Vector7d& q);

/// Columns [z_{i-1} x (p_e - p_{i-1}); z_{i-1}] for revolute joints.
Matrix6x7d geometric_jacobian(const DhTable& dh, const Vector7d& q);

/// Maps ZYX Euler rates to angular velocity; singular at pitch = +-pi/2.
Eigen::Matrix3d euler_rate_transform(const Eigen::Vector3d& euler);

/// blockdiag(I3, T_A^-1) * geometric Jacobian.
Matrix6x7d analytic_jacobian(const DhTable& dh, const Vector7d& q);

/// J' (J J' + damping^2 I)^-1; the Moore-Penrose pseudoinverse at zero
/// damping and full row rank. Throws SolveFailure if J J' + damping^2 I
/// is singular.
Matrix7x6d damped_pseudoinverse(const Matrix6x7d& jacobian, double damping);

/// desired - actual with the angle components wrapped into (-pi, pi].
Vector6d pose_error(const PoseEuler& desired, const PoseEuler& actual);

struct ClikResult {
  Vector7d q_next;    // q + dt * qd_ref
  Vector7d qd_ref;    // commanded joint velocity
  Vector6d error;     // task-space error at q
};

/// One closed-loop inverse kinematics step:
///   qd_ref = J_A^+ (pd + K e) + (I - J_A^+ J_A) qd_path
/// with e = target - fk(q_ref), integrated by explicit Euler.
ClikResult clik_step(const Vector7d& q_ref, const Vector7d& qd_path,
                     const PoseEuler& target, const Vector6d& target_velocity,
                     const DhTable& dh, const IkConfig& cfg);

}  // namespace gptrack::kin
