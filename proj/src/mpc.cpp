#include "gptrack/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gptrack/errors.hpp"

namespace gptrack::mpc {

LtiModel discretize(double ts) {
  if (!(ts > 0.0)) {
    throw ContractViolation("discretize: sampling time must be positive");
  }
  LtiModel model;
  model.ts = ts;
  model.a.setIdentity();
  model.a.topRightCorner<7, 7>() = ts * Eigen::Matrix<double, 7, 7>::Identity();
  model.b.setZero();
  model.b.topRows<7>() = 0.5 * ts * ts * Eigen::Matrix<double, 7, 7>::Identity();
  model.b.bottomRows<7>() = ts * Eigen::Matrix<double, 7, 7>::Identity();
  return model;
}

MpcWeights MpcWeights::defaults() {
  MpcWeights w;
  w.q.head<7>().setConstant(1e6);
  w.q.tail<7>().setConstant(2e-3);
  w.r.setConstant(2e-3);
  w.q_terminal.head<7>().setConstant(1e-3);
  w.q_terminal.tail<7>().setConstant(1e-4);
  return w;
}

void MpcWeights::validate() const {
  if (q.minCoeff() < 0.0 || q_terminal.minCoeff() < 0.0) {
    throw ContractViolation("mpc weights: state weights must be >= 0");
  }
  if (r.minCoeff() <= 0.0) {
    throw ContractViolation("mpc weights: input weights must be > 0");
  }
}

Bounds Bounds::defaults() {
  Bounds b;
  b.q_min.setConstant(-2.9);
  b.q_max.setConstant(2.9);
  b.qd_min.setConstant(-1.7);
  b.qd_max.setConstant(1.7);
  b.u_min.setConstant(-5.0);
  b.u_max.setConstant(5.0);
  return b;
}

Bounds Bounds::unbounded() {
  Bounds b;
  const double big = 1e12;
  b.q_min.setConstant(-big);
  b.q_max.setConstant(big);
  b.qd_min.setConstant(-big);
  b.qd_max.setConstant(big);
  b.u_min.setConstant(-big);
  b.u_max.setConstant(big);
  return b;
}

void Bounds::validate() const {
  if ((q_min.array() >= q_max.array()).any() ||
      (qd_min.array() >= qd_max.array()).any() ||
      (u_min.array() >= u_max.array()).any()) {
    throw ContractViolation("bounds: min must be < max componentwise");
  }
}

Matrix7Xd reference_input(const Eigen::Ref<const Matrix7Xd>& qd_ref, double ts) {
  if (qd_ref.cols() < 2) {
    throw DimensionMismatch("reference_input: need at least two velocity samples");
  }
  if (!(ts > 0.0)) {
    throw ContractViolation("reference_input: sampling time must be positive");
  }
  return (qd_ref.rightCols(qd_ref.cols() - 1) - qd_ref.leftCols(qd_ref.cols() - 1)) / ts;
}

namespace {

// Stacked prediction matrices for x_1..x_N:
//   X = F x0 + G U,  F block i = A^{i+1},  G block (i,j) = A^{i-j} B.
struct Condensation {
  int horizon = 0;
  Eigen::MatrixXd f;           // 14N x 14
  Eigen::MatrixXd g;           // 14N x 7N
  Eigen::MatrixXd hessian;     // 7N x 7N
  Eigen::MatrixXd gt_qbar;     // G' Qbar, reused for the linear term
  Eigen::VectorXd qbar;        // stacked state weights
  Eigen::VectorXd rbar;        // stacked input weights
  Eigen::MatrixXd constraints; // (7N + 14N) x 7N, [I; G]
  Eigen::VectorXd u_lower, u_upper;     // input rows
  Eigen::VectorXd x_lower, x_upper;     // state rows before the x0 offset
};

Condensation build_condensation(const LtiModel& model, const MpcWeights& weights,
                                const Bounds& bounds, int horizon) {
  if (horizon < 1) {
    throw ContractViolation("condense: horizon must be >= 1");
  }
  weights.validate();
  bounds.validate();

  const int n = kStates, m = kJoints;
  Condensation c;
  c.horizon = horizon;
  c.f.resize(n * horizon, n);
  c.g.setZero(n * horizon, m * horizon);

  Matrix14d a_power = model.a;
  for (int i = 0; i < horizon; ++i) {
    c.f.middleRows(n * i, n) = a_power;
    a_power = model.a * a_power;
  }
  for (int j = 0; j < horizon; ++j) {
    Eigen::Matrix<double, 14, 7> block = model.b;
    for (int i = j; i < horizon; ++i) {
      c.g.block(n * i, m * j, n, m) = block;
      block = model.a * block;
    }
  }

  c.qbar.resize(n * horizon);
  for (int i = 0; i + 1 < horizon; ++i) c.qbar.segment(n * i, n) = weights.q;
  c.qbar.tail(n) = weights.q_terminal;
  c.rbar.resize(m * horizon);
  for (int i = 0; i < horizon; ++i) c.rbar.segment(m * i, m) = weights.r;

  c.gt_qbar = c.g.transpose() * c.qbar.asDiagonal();
  c.hessian = c.gt_qbar * c.g;
  c.hessian.diagonal() += c.rbar;
  c.hessian = 0.5 * (c.hessian + c.hessian.transpose()).eval();

  c.constraints.resize(m * horizon + n * horizon, m * horizon);
  c.constraints.topRows(m * horizon) =
      Eigen::MatrixXd::Identity(m * horizon, m * horizon);
  c.constraints.bottomRows(n * horizon) = c.g;

  c.u_lower.resize(m * horizon);
  c.u_upper.resize(m * horizon);
  c.x_lower.resize(n * horizon);
  c.x_upper.resize(n * horizon);
  for (int i = 0; i < horizon; ++i) {
    c.u_lower.segment(m * i, m) = bounds.u_min;
    c.u_upper.segment(m * i, m) = bounds.u_max;
    c.x_lower.segment(n * i, m) = bounds.q_min;
    c.x_lower.segment(n * i + m, m) = bounds.qd_min;
    c.x_upper.segment(n * i, m) = bounds.q_max;
    c.x_upper.segment(n * i + m, m) = bounds.qd_max;
  }
  return c;
}

QpProblem assemble_qp(const Condensation& c, const MpcWeights& weights,
                      const Vector14d& x0, const JointReferenceTrajectory& ref) {
  const int n = kStates, m = kJoints;
  const int horizon = c.horizon;
  if (ref.states.cols() != horizon + 1 || ref.inputs.cols() != horizon) {
    throw DimensionMismatch("condense: reference does not cover the horizon");
  }

  Eigen::VectorXd x_ref(n * horizon), u_ref(m * horizon);
  for (int i = 0; i < horizon; ++i) {
    x_ref.segment(n * i, n) = ref.states.col(i + 1);
    u_ref.segment(m * i, m) = ref.inputs.col(i);
  }

  const Eigen::VectorXd drift = c.f * x0 - x_ref;

  QpProblem qp;
  qp.hessian = c.hessian;
  qp.gradient = c.gt_qbar * drift - c.rbar.cwiseProduct(u_ref);
  const Vector14d e0 = x0 - ref.states.col(0);
  qp.constant = 0.5 * drift.dot(c.qbar.cwiseProduct(drift)) +
                0.5 * u_ref.dot(c.rbar.cwiseProduct(u_ref)) +
                0.5 * e0.dot(weights.q.cwiseProduct(e0));

  qp.constraints = c.constraints;
  const Eigen::VectorXd fx0 = c.f * x0;
  qp.lower.resize(c.u_lower.size() + c.x_lower.size());
  qp.upper.resize(qp.lower.size());
  qp.lower << c.u_lower, c.x_lower - fx0;
  qp.upper << c.u_upper, c.x_upper - fx0;
  return qp;
}

}  // namespace

QpProblem condense(const LtiModel& model, const MpcWeights& weights,
                   const Vector14d& x0, const JointReferenceTrajectory& ref,
                   const Bounds& bounds, int horizon) {
  const Condensation c = build_condensation(model, weights, bounds, horizon);
  return assemble_qp(c, weights, x0, ref);
}

namespace {

struct AdmmWorkspace {
  Eigen::VectorXd x, z, y;
  bool valid = false;
};

double stationarity_residual(const QpProblem& qp, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y) {
  Eigen::VectorXd r = qp.hessian * x + qp.gradient;
  if (qp.constraints.rows() > 0) r += qp.constraints.transpose() * y;
  return r.lpNorm<Eigen::Infinity>();
}

// Equality solve on the detected active set; returns false when the KKT
// system is unusable or the candidate violates feasibility or dual signs.
bool polish_solution(const QpProblem& qp, const Eigen::VectorXd& z,
                     const Eigen::VectorXd& y, double tol, Eigen::VectorXd& x_out,
                     Eigen::VectorXd& y_out) {
  const Eigen::Index n = qp.hessian.rows();
  const Eigen::Index m = qp.constraints.rows();
  const double act_tol = std::sqrt(tol);

  std::vector<Eigen::Index> active;
  std::vector<double> bound_value;
  std::vector<int> side;  // -1 lower, +1 upper
  for (Eigen::Index i = 0; i < m; ++i) {
    const double span = std::max(1.0, std::abs(qp.upper[i]) + std::abs(qp.lower[i]));
    const bool at_lower = z[i] - qp.lower[i] <= act_tol * span || y[i] < -act_tol;
    const bool at_upper = qp.upper[i] - z[i] <= act_tol * span || y[i] > act_tol;
    if (at_lower && !at_upper) {
      active.push_back(i);
      bound_value.push_back(qp.lower[i]);
      side.push_back(-1);
    } else if (at_upper && !at_lower) {
      active.push_back(i);
      bound_value.push_back(qp.upper[i]);
      side.push_back(+1);
    }
  }

  const Eigen::Index k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
  kkt.topLeftCorner(n, n) = qp.hessian;
  Eigen::VectorXd rhs(n + k);
  rhs.head(n) = -qp.gradient;
  for (Eigen::Index j = 0; j < k; ++j) {
    kkt.block(n + j, 0, 1, n) = qp.constraints.row(active[static_cast<std::size_t>(j)]);
    kkt.block(0, n + j, n, 1) =
        qp.constraints.row(active[static_cast<std::size_t>(j)]).transpose();
    rhs[n + j] = bound_value[static_cast<std::size_t>(j)];
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite() || (kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-6) {
    return false;
  }

  const Eigen::VectorXd x = sol.head(n);
  Eigen::VectorXd y_full = Eigen::VectorXd::Zero(m);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double lambda = sol[n + j];
    if (side[static_cast<std::size_t>(j)] < 0 && lambda > act_tol) return false;
    if (side[static_cast<std::size_t>(j)] > 0 && lambda < -act_tol) return false;
    y_full[active[static_cast<std::size_t>(j)]] = lambda;
  }

  const Eigen::VectorXd ax = qp.constraints * x;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double slack = std::max(1e-9, 10.0 * tol * std::max(1.0, std::abs(ax[i])));
    if (ax[i] < qp.lower[i] - slack || ax[i] > qp.upper[i] + slack) return false;
  }

  x_out = x;
  y_out = y_full;
  return true;
}

QpResult solve_qp_with_warm_start(const QpProblem& qp, const QpSettings& settings,
                                  AdmmWorkspace* workspace) {
  const Eigen::Index n = qp.hessian.rows();
  const Eigen::Index m = qp.constraints.rows();
  if (qp.gradient.size() != n || qp.constraints.cols() != (m > 0 ? n : qp.constraints.cols()) ||
      qp.lower.size() != m || qp.upper.size() != m) {
    throw DimensionMismatch("solve_qp: inconsistent problem dimensions");
  }

  QpResult result;

  const Eigen::LLT<Eigen::MatrixXd> hessian_llt(qp.hessian);
  if (hessian_llt.info() != Eigen::Success) {
    throw SolveFailure("solve_qp: hessian is not positive definite");
  }

  // unconstrained minimizer; optimal whenever it is feasible
  const Eigen::VectorXd x_free = hessian_llt.solve(-qp.gradient);
  if (m == 0) {
    result.solution = x_free;
    result.dual_residual = stationarity_residual(qp, x_free, Eigen::VectorXd::Zero(0));
    return result;
  }
  {
    const Eigen::VectorXd ax = qp.constraints * x_free;
    if ((ax.array() >= qp.lower.array()).all() && (ax.array() <= qp.upper.array()).all()) {
      result.solution = x_free;
      result.dual_residual = stationarity_residual(qp, x_free, Eigen::VectorXd::Zero(m));
      if (workspace) {
        workspace->x = x_free;
        workspace->z = ax;
        workspace->y = Eigen::VectorXd::Zero(m);
        workspace->valid = true;
      }
      return result;
    }
  }

  const Eigen::MatrixXd ata = qp.constraints.transpose() * qp.constraints;
  double rho = settings.rho;
  Eigen::LLT<Eigen::MatrixXd> kkt_llt(qp.hessian + rho * ata);
  if (kkt_llt.info() != Eigen::Success) {
    throw SolveFailure("solve_qp: splitting system is not positive definite");
  }

  Eigen::VectorXd x, z, y;
  if (workspace && workspace->valid && workspace->x.size() == n) {
    x = workspace->x;
    z = workspace->z;
    y = workspace->y;
  } else {
    x = Eigen::VectorXd::Zero(n);
    z = (qp.constraints * x).cwiseMax(qp.lower).cwiseMin(qp.upper);
    y = Eigen::VectorXd::Zero(m);
  }

  double best_residual = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x, best_y = y, best_z = z;

  int iter = 0;
  bool converged = false;
  for (; iter < settings.max_iterations; ++iter) {
    x = kkt_llt.solve(-qp.gradient + qp.constraints.transpose() * (rho * z - y));
    const Eigen::VectorXd ax = qp.constraints * x;
    z = (ax + y / rho).cwiseMax(qp.lower).cwiseMin(qp.upper);
    y += rho * (ax - z);

    const double r_prim = (ax - z).lpNorm<Eigen::Infinity>();
    const double r_dual = stationarity_residual(qp, x, y);
    if (std::max(r_prim, r_dual) < best_residual) {
      best_residual = std::max(r_prim, r_dual);
      best_x = x;
      best_y = y;
      best_z = z;
    }

    const double eps_prim =
        settings.tol +
        settings.tol * std::max(ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>());
    const double eps_dual =
        settings.tol +
        settings.tol * std::max({(qp.hessian * x).lpNorm<Eigen::Infinity>(),
                                 qp.gradient.lpNorm<Eigen::Infinity>(),
                                 (qp.constraints.transpose() * y).lpNorm<Eigen::Infinity>()});
    result.primal_residual = r_prim;
    result.dual_residual = r_dual;
    if (r_prim <= eps_prim && r_dual <= eps_dual) {
      converged = true;
      ++iter;
      break;
    }

    if ((iter + 1) % 25 == 0) {
      double next_rho = rho;
      if (r_prim > 10.0 * r_dual) {
        next_rho = std::min(rho * 2.0, 1e6);
      } else if (r_dual > 10.0 * r_prim) {
        next_rho = std::max(rho / 2.0, 1e-6);
      }
      if (next_rho != rho) {
        rho = next_rho;
        kkt_llt.compute(qp.hessian + rho * ata);
        if (kkt_llt.info() != Eigen::Success) {
          throw SolveFailure("solve_qp: splitting system lost positive definiteness");
        }
      }
    }
  }

  result.iterations = iter;
  if (!converged) {
    result.status = SolveStatus::MaxIterations;
    result.solution = best_x;
    result.primal_residual = (qp.constraints * best_x - best_z).lpNorm<Eigen::Infinity>();
    result.dual_residual = stationarity_residual(qp, best_x, best_y);
    if (workspace) workspace->valid = false;
    return result;
  }

  result.solution = x;
  if (settings.polish) {
    Eigen::VectorXd x_pol, y_pol;
    if (polish_solution(qp, z, y, settings.tol, x_pol, y_pol)) {
      const Eigen::VectorXd ax = qp.constraints * x_pol;
      const double r_prim =
          ((ax - qp.upper).cwiseMax(0.0) + (qp.lower - ax).cwiseMax(0.0))
              .lpNorm<Eigen::Infinity>();
      const double r_dual = stationarity_residual(qp, x_pol, y_pol);
      if (std::max(r_prim, r_dual) <=
          std::max(result.primal_residual, result.dual_residual)) {
        result.solution = x_pol;
        result.primal_residual = r_prim;
        result.dual_residual = r_dual;
        y = y_pol;
        z = ax.cwiseMax(qp.lower).cwiseMin(qp.upper);
      }
    }
  }
  if (workspace) {
    workspace->x = result.solution;
    workspace->z = z;
    workspace->y = y;
    workspace->valid = true;
  }
  return result;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpSettings& settings) {
  return solve_qp_with_warm_start(qp, settings, nullptr);
}

struct TrackingMpc::Impl {
  LtiModel model;
  MpcWeights weights;
  Bounds bounds;
  QpSettings settings;
  Condensation condensation;
  AdmmWorkspace workspace;

  Impl(const LtiModel& model_in, const MpcWeights& weights_in, const Bounds& bounds_in,
       int horizon, const QpSettings& settings_in)
      : model(model_in),
        weights(weights_in),
        bounds(bounds_in),
        settings(settings_in),
        condensation(build_condensation(model_in, weights_in, bounds_in, horizon)) {}

  // shift by one sample, repeating the last block
  void shift_warm_start() {
    if (!workspace.valid) return;
    const int m = kJoints, n = kStates, horizon = condensation.horizon;
    if (horizon > 1) {
      workspace.x.head(m * (horizon - 1)) = workspace.x.tail(m * (horizon - 1)).eval();
      auto shift_rows = [&](Eigen::VectorXd& v, int offset, int block) {
        v.segment(offset, block * (horizon - 1)) =
            v.segment(offset + block, block * (horizon - 1)).eval();
      };
      shift_rows(workspace.y, 0, m);
      shift_rows(workspace.z, 0, m);
      shift_rows(workspace.y, m * horizon, n);
      shift_rows(workspace.z, m * horizon, n);
    }
  }
};

TrackingMpc::TrackingMpc(const LtiModel& model, const MpcWeights& weights,
                         const Bounds& bounds, int horizon, const QpSettings& settings)
    : impl_(std::make_unique<Impl>(model, weights, bounds, horizon, settings)) {}

TrackingMpc::~TrackingMpc() = default;
TrackingMpc::TrackingMpc(TrackingMpc&&) noexcept = default;
TrackingMpc& TrackingMpc::operator=(TrackingMpc&&) noexcept = default;

const LtiModel& TrackingMpc::model() const { return impl_->model; }
int TrackingMpc::horizon() const { return impl_->condensation.horizon; }

void TrackingMpc::reset_warm_start() { impl_->workspace.valid = false; }

void TrackingMpc::seed_warm_start(const Matrix7Xd& inputs) {
  Impl& s = *impl_;
  if (inputs.cols() != s.condensation.horizon) {
    throw DimensionMismatch("seed_warm_start: wrong horizon length");
  }
  s.workspace.x = Eigen::Map<const Eigen::VectorXd>(inputs.data(), inputs.size());
  s.workspace.z = s.condensation.constraints * s.workspace.x;
  s.workspace.y = Eigen::VectorXd::Zero(s.condensation.constraints.rows());
  s.workspace.valid = true;
}

std::pair<Vector7d, MpcSolution> TrackingMpc::step(const Vector14d& x,
                                                   const JointReferenceTrajectory& ref) {
  Impl& s = *impl_;
  const QpProblem qp = assemble_qp(s.condensation, s.weights, x, ref);
  s.shift_warm_start();
  const QpResult qr = solve_qp_with_warm_start(qp, s.settings, &s.workspace);

  const int horizon = s.condensation.horizon;
  MpcSolution solution;
  solution.inputs = Eigen::Map<const Matrix7Xd>(qr.solution.data(), kJoints, horizon);
  solution.states.resize(kStates, horizon + 1);
  solution.states.col(0) = x;
  for (int i = 0; i < horizon; ++i) {
    solution.states.col(i + 1) =
        s.model.a * solution.states.col(i) + s.model.b * solution.inputs.col(i);
  }
  solution.objective = 0.5 * qr.solution.dot(qp.hessian * qr.solution) +
                       qp.gradient.dot(qr.solution) + qp.constant;
  solution.iterations = qr.iterations;
  solution.primal_residual = qr.primal_residual;
  solution.dual_residual = qr.dual_residual;
  solution.status = qr.status;
  return {solution.inputs.col(0), std::move(solution)};
}

std::pair<Vector7d, MpcSolution> mpc_step(const LtiModel& model, const MpcWeights& weights,
                                          const Bounds& bounds, const Vector14d& x,
                                          const JointReferenceTrajectory& ref,
                                          const std::optional<Matrix7Xd>& warm_start,
                                          const QpSettings& settings) {
  const int horizon = static_cast<int>(ref.inputs.cols());
  TrackingMpc controller(model, weights, bounds, horizon, settings);
  if (warm_start) {
    controller.seed_warm_start(*warm_start);
  }
  return controller.step(x, ref);
}

}  // namespace gptrack::mpc
