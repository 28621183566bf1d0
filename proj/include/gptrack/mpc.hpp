#pragma once

#include <memory>
#include <optional>

#include <Eigen/Dense>

#include "gptrack/types.hpp"

namespace gptrack::mpc {

/// Exact zero-order-hold discretization of the double integrator chain
/// qdd = u for seven joints, state x = (q, qd).
struct LtiModel {
  Matrix14d a;
  Matrix14x7d b;
  double ts = 0.0;
};

LtiModel discretize(double ts);

struct MpcWeights {
  Vector14d q = Vector14d::Zero();           // stage state weights (diagonal)
  Vector7d r = Vector7d::Zero();             // stage input weights (diagonal)
  Vector14d q_terminal = Vector14d::Zero();  // terminal state weights (diagonal)

  static MpcWeights defaults();
  void validate() const;
};

struct Bounds {
  Vector7d q_min, q_max;    // [rad]
  Vector7d qd_min, qd_max;  // [rad/s]
  Vector7d u_min, u_max;    // [rad/s^2]

  static Bounds defaults();
  static Bounds unbounded();
  void validate() const;
};

/// State and input references over one horizon: states is 14 x (N+1),
/// inputs is 7 x N.
struct JointReferenceTrajectory {
  Matrix14Xd states;
  Matrix7Xd inputs;
};

/// u_r[k] = (qd_r[k+1] - qd_r[k]) / ts, the consistent acceleration of the
/// integrator chain.
Matrix7Xd reference_input(const Eigen::Ref<const Matrix7Xd>& qd_ref, double ts);

/// Condensed QP  min 0.5 U'HU + g'U + constant  s.t.  lower <= A U <= upper,
/// obtained by eliminating the states through the dynamics. The constant
/// makes the objective equal the rolled-out tracking cost
///   sum_k 0.5 (e_x'Q e_x + e_u'R e_u) + 0.5 e_N' Q_F e_N.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd constraints;
  Eigen::VectorXd lower, upper;
  double constant = 0.0;
};

QpProblem condense(const LtiModel& model, const MpcWeights& weights,
                   const Vector14d& x0, const JointReferenceTrajectory& ref,
                   const Bounds& bounds, int horizon);

enum class SolveStatus { Converged, MaxIterations };

struct QpSettings {
  double tol = 1e-8;
  int max_iterations = 20000;
  double rho = 0.1;
  bool polish = true;
};

struct QpResult {
  Eigen::VectorXd solution;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  SolveStatus status = SolveStatus::Converged;
};

/// Operator-splitting solver: alternates a linear solve on
/// (H + rho A'A) with projection of the constraint variable onto
/// [lower, upper] and a dual ascent step; rho is rebalanced by a factor of
/// two whenever the residuals drift apart by more than 10x. A converged
/// solve is polished by an equality-constrained solve on the detected
/// active set. On MaxIterations the best iterate is returned.
QpResult solve_qp(const QpProblem& qp, const QpSettings& settings = {});

struct MpcSolution {
  Matrix7Xd inputs;    // 7 x N
  Matrix14Xd states;   // 14 x (N+1), satisfies the dynamics by construction
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  SolveStatus status = SolveStatus::Converged;
};

/// Receding-horizon controller with the condensation cached across calls
/// (the model is time invariant, so F, G, H and the constraint matrix never
/// change). step() warm starts from the previous solution shifted by one
/// sample with the last block repeated.
class TrackingMpc {
 public:
  TrackingMpc(const LtiModel& model, const MpcWeights& weights, const Bounds& bounds,
              int horizon, const QpSettings& settings = {});
  ~TrackingMpc();
  TrackingMpc(TrackingMpc&&) noexcept;
  TrackingMpc& operator=(TrackingMpc&&) noexcept;

  std::pair<Vector7d, MpcSolution> step(const Vector14d& x,
                                        const JointReferenceTrajectory& ref);
  void reset_warm_start();

  /// Treats the given input sequence as the previous solution; the next
  /// step() call warm starts from it shifted by one sample.
  void seed_warm_start(const Matrix7Xd& inputs);

  const LtiModel& model() const;
  int horizon() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Single receding-horizon step; builds the condensed problem from scratch.
std::pair<Vector7d, MpcSolution> mpc_step(
    const LtiModel& model, const MpcWeights& weights, const Bounds& bounds,
    const Vector14d& x, const JointReferenceTrajectory& ref,
    const std::optional<Matrix7Xd>& warm_start = std::nullopt,
    const QpSettings& settings = {});

}  // namespace gptrack::mpc
