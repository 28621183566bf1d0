#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gptrack/types.hpp"

namespace gptrack::gp {

/// Covariance function built as a composition tree over two stationary
/// primitives:
///
///   squared exponential  k(z,z') = sf2 * exp(-(z-z')^2 / (2 l^2))
///   periodic             k(z,z') = sp2 * exp(-2 sin^2(pi (z-z')/T) / l^2)
///
/// Internal nodes are sums or products. All hyperparameters are stored in
/// log space; the depth-first leaf order defines the parameter layout used
/// by log_params / set_log_params and by every gradient vector.
class KernelSpec {
 public:
  enum class Node { SquaredExponential, Periodic, Sum, Product };

  /// Kind of a stored log-parameter, used for optimizer bounds and
  /// start sampling.
  enum class ParamKind { SignalVariance, LengthScale, Period };

  static KernelSpec squared_exponential(double signal_var, double length_scale);
  static KernelSpec periodic(double signal_var, double length_scale, double period);
  static KernelSpec sum(KernelSpec lhs, KernelSpec rhs);
  static KernelSpec product(KernelSpec lhs, KernelSpec rhs);

  Node node() const { return node_; }
  const std::vector<KernelSpec>& children() const { return children_; }

  /// Log-space hyperparameters of this leaf (invalid on internal nodes).
  const Eigen::Vector3d& leaf_params() const { return params_; }

  int param_count() const;
  Eigen::VectorXd log_params() const;
  void set_log_params(const Eigen::Ref<const Eigen::VectorXd>& values);
  std::vector<ParamKind> param_kinds() const;

  /// k(z, z')
  double eval(double z, double zp) const;
  /// d k(z, z') / d z
  double grad_z(double z, double zp) const;
  /// d k(z, z') / d log(theta_j), depth-first leaf order
  Eigen::VectorXd hyper_grads(double z, double zp) const;

 private:
  KernelSpec(Node node, const Eigen::Vector3d& params) : node_(node), params_(params) {}
  KernelSpec(Node node, KernelSpec lhs, KernelSpec rhs);

  struct LeafTerms;
  LeafTerms leaf_terms(double tau) const;

  friend Eigen::MatrixXd kernel_matrix_impl(const KernelSpec&, const Eigen::MatrixXd&);
  friend void kernel_matrix_grad_impl(const KernelSpec&, const Eigen::MatrixXd&,
                                      Eigen::MatrixXd&, Eigen::MatrixXd&);
  friend void kernel_matrix_hyper_impl(const KernelSpec&, const Eigen::MatrixXd&,
                                       Eigen::MatrixXd&, std::vector<Eigen::MatrixXd>&);

  Node node_;
  Eigen::Vector3d params_{0.0, 0.0, 0.0};
  std::vector<KernelSpec> children_;
};

double kernel_eval(const KernelSpec& spec, double z, double zp);
double kernel_grad_z(const KernelSpec& spec, double z, double zp);
Eigen::VectorXd kernel_hyper_grads(const KernelSpec& spec, double z, double zp);

/// Cross-covariance matrix K(i,j) = k(za_i, zb_j).
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& za,
                              const Eigen::Ref<const Eigen::VectorXd>& zb);

/// K plus its derivative with respect to the first argument.
void kernel_matrix_with_grad(const KernelSpec& spec,
                             const Eigen::Ref<const Eigen::VectorXd>& za,
                             const Eigen::Ref<const Eigen::VectorXd>& zb,
                             Eigen::MatrixXd& k, Eigen::MatrixXd& dk_dza);

/// K plus one matrix of d K / d log(theta_j) per stored hyperparameter.
void kernel_matrix_with_hyper_grads(const KernelSpec& spec,
                                    const Eigen::Ref<const Eigen::VectorXd>& za,
                                    const Eigen::Ref<const Eigen::VectorXd>& zb,
                                    Eigen::MatrixXd& k,
                                    std::vector<Eigen::MatrixXd>& dk_dlog);

/// Prior variances k(z_i, z_i).
Eigen::VectorXd kernel_diag(const KernelSpec& spec,
                            const Eigen::Ref<const Eigen::VectorXd>& z);

}  // namespace gptrack::gp
