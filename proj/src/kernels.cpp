#include "gptrack/kernels.hpp"

#include <cmath>
#include <numbers>

#include "gptrack/errors.hpp"

namespace gptrack::gp {

namespace {

constexpr double kPi = std::numbers::pi;

void require_finite_positive(double value, const char* name) {
  if (!(std::isfinite(value) && value > 0.0)) {
    throw ContractViolation(std::string("kernel parameter must be finite and positive: ") + name);
  }
}

Eigen::MatrixXd difference_matrix(const Eigen::Ref<const Eigen::VectorXd>& za,
                                  const Eigen::Ref<const Eigen::VectorXd>& zb) {
  return za.replicate(1, zb.size()) - zb.transpose().replicate(za.size(), 1);
}

}  // namespace

KernelSpec KernelSpec::squared_exponential(double signal_var, double length_scale) {
  require_finite_positive(signal_var, "signal_var");
  require_finite_positive(length_scale, "length_scale");
  return KernelSpec(Node::SquaredExponential,
                    {std::log(signal_var), std::log(length_scale), 0.0});
}

KernelSpec KernelSpec::periodic(double signal_var, double length_scale, double period) {
  require_finite_positive(signal_var, "signal_var");
  require_finite_positive(length_scale, "length_scale");
  require_finite_positive(period, "period");
  return KernelSpec(Node::Periodic,
                    {std::log(signal_var), std::log(length_scale), std::log(period)});
}

KernelSpec::KernelSpec(Node node, KernelSpec lhs, KernelSpec rhs) : node_(node) {
  children_.reserve(2);
  children_.push_back(std::move(lhs));
  children_.push_back(std::move(rhs));
}

KernelSpec KernelSpec::sum(KernelSpec lhs, KernelSpec rhs) {
  return KernelSpec(Node::Sum, std::move(lhs), std::move(rhs));
}

KernelSpec KernelSpec::product(KernelSpec lhs, KernelSpec rhs) {
  return KernelSpec(Node::Product, std::move(lhs), std::move(rhs));
}

int KernelSpec::param_count() const {
  switch (node_) {
    case Node::SquaredExponential:
      return 2;
    case Node::Periodic:
      return 3;
    default:
      return children_[0].param_count() + children_[1].param_count();
  }
}

Eigen::VectorXd KernelSpec::log_params() const {
  Eigen::VectorXd out(param_count());
  if (node_ == Node::SquaredExponential) {
    out << params_[0], params_[1];
  } else if (node_ == Node::Periodic) {
    out << params_[0], params_[1], params_[2];
  } else {
    const Eigen::VectorXd left = children_[0].log_params();
    const Eigen::VectorXd right = children_[1].log_params();
    out << left, right;
  }
  return out;
}

void KernelSpec::set_log_params(const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() != param_count()) {
    throw DimensionMismatch("set_log_params: wrong parameter count");
  }
  if (!values.allFinite()) {
    throw ContractViolation("set_log_params: parameters must be finite");
  }
  if (node_ == Node::SquaredExponential) {
    params_[0] = values[0];
    params_[1] = values[1];
  } else if (node_ == Node::Periodic) {
    params_[0] = values[0];
    params_[1] = values[1];
    params_[2] = values[2];
  } else {
    const int left = children_[0].param_count();
    children_[0].set_log_params(values.head(left));
    children_[1].set_log_params(values.tail(values.size() - left));
  }
}

std::vector<KernelSpec::ParamKind> KernelSpec::param_kinds() const {
  switch (node_) {
    case Node::SquaredExponential:
      return {ParamKind::SignalVariance, ParamKind::LengthScale};
    case Node::Periodic:
      return {ParamKind::SignalVariance, ParamKind::LengthScale, ParamKind::Period};
    default: {
      std::vector<ParamKind> kinds = children_[0].param_kinds();
      const std::vector<ParamKind> right = children_[1].param_kinds();
      kinds.insert(kinds.end(), right.begin(), right.end());
      return kinds;
    }
  }
}

// Scalar evaluation terms of one leaf at lag tau. grad is d k / d tau;
// hyper holds d k / d log(theta) in leaf-local order.
struct KernelSpec::LeafTerms {
  double value;
  double grad;
  Eigen::Vector3d hyper;
};

KernelSpec::LeafTerms KernelSpec::leaf_terms(double tau) const {
  LeafTerms t{};
  if (node_ == Node::SquaredExponential) {
    const double sf2 = std::exp(params_[0]);
    const double ell = std::exp(params_[1]);
    const double q = tau / ell;
    t.value = sf2 * std::exp(-0.5 * q * q);
    t.grad = t.value * (-tau / (ell * ell));
    t.hyper = {t.value, t.value * q * q, 0.0};
  } else {
    const double sp2 = std::exp(params_[0]);
    const double ell = std::exp(params_[1]);
    const double period = std::exp(params_[2]);
    const double s = std::sin(kPi * tau / period);
    const double s2 = std::sin(2.0 * kPi * tau / period);
    t.value = sp2 * std::exp(-2.0 * s * s / (ell * ell));
    t.grad = t.value * (-(2.0 * kPi / (period * ell * ell)) * s2);
    t.hyper = {t.value, t.value * 4.0 * s * s / (ell * ell),
               t.value * (2.0 * kPi * tau / (period * ell * ell)) * s2};
  }
  return t;
}

double KernelSpec::eval(double z, double zp) const {
  switch (node_) {
    case Node::Sum:
      return children_[0].eval(z, zp) + children_[1].eval(z, zp);
    case Node::Product:
      return children_[0].eval(z, zp) * children_[1].eval(z, zp);
    default:
      return leaf_terms(z - zp).value;
  }
}

double KernelSpec::grad_z(double z, double zp) const {
  switch (node_) {
    case Node::Sum:
      return children_[0].grad_z(z, zp) + children_[1].grad_z(z, zp);
    case Node::Product:
      return children_[0].grad_z(z, zp) * children_[1].eval(z, zp) +
             children_[0].eval(z, zp) * children_[1].grad_z(z, zp);
    default:
      return leaf_terms(z - zp).grad;
  }
}

Eigen::VectorXd KernelSpec::hyper_grads(double z, double zp) const {
  switch (node_) {
    case Node::Sum: {
      Eigen::VectorXd out(param_count());
      out << children_[0].hyper_grads(z, zp), children_[1].hyper_grads(z, zp);
      return out;
    }
    case Node::Product: {
      Eigen::VectorXd out(param_count());
      out << children_[0].hyper_grads(z, zp) * children_[1].eval(z, zp),
          children_[1].hyper_grads(z, zp) * children_[0].eval(z, zp);
      return out;
    }
    default: {
      const LeafTerms t = leaf_terms(z - zp);
      return t.hyper.head(param_count());
    }
  }
}

double kernel_eval(const KernelSpec& spec, double z, double zp) { return spec.eval(z, zp); }

double kernel_grad_z(const KernelSpec& spec, double z, double zp) { return spec.grad_z(z, zp); }

Eigen::VectorXd kernel_hyper_grads(const KernelSpec& spec, double z, double zp) {
  return spec.hyper_grads(z, zp);
}

// Matrix recursion over the composition tree; diff is the matrix of lags
// za_i - zb_j shared by every leaf.

Eigen::MatrixXd kernel_matrix_impl(const KernelSpec& spec, const Eigen::MatrixXd& diff) {
  switch (spec.node_) {
    case KernelSpec::Node::Sum:
      return kernel_matrix_impl(spec.children_[0], diff) +
             kernel_matrix_impl(spec.children_[1], diff);
    case KernelSpec::Node::Product:
      return kernel_matrix_impl(spec.children_[0], diff)
          .cwiseProduct(kernel_matrix_impl(spec.children_[1], diff));
    case KernelSpec::Node::SquaredExponential: {
      const double sf2 = std::exp(spec.params_[0]);
      const double ell = std::exp(spec.params_[1]);
      return sf2 * (-0.5 / (ell * ell) * diff.array().square()).exp().matrix();
    }
    default: {
      const double sp2 = std::exp(spec.params_[0]);
      const double ell = std::exp(spec.params_[1]);
      const double period = std::exp(spec.params_[2]);
      const Eigen::ArrayXXd s = (kPi / period * diff.array()).sin();
      return sp2 * (-2.0 / (ell * ell) * s.square()).exp().matrix();
    }
  }
}

void kernel_matrix_grad_impl(const KernelSpec& spec, const Eigen::MatrixXd& diff,
                             Eigen::MatrixXd& k, Eigen::MatrixXd& dk) {
  switch (spec.node_) {
    case KernelSpec::Node::Sum: {
      Eigen::MatrixXd k2, dk2;
      kernel_matrix_grad_impl(spec.children_[0], diff, k, dk);
      kernel_matrix_grad_impl(spec.children_[1], diff, k2, dk2);
      k += k2;
      dk += dk2;
      return;
    }
    case KernelSpec::Node::Product: {
      Eigen::MatrixXd k2, dk2;
      kernel_matrix_grad_impl(spec.children_[0], diff, k, dk);
      kernel_matrix_grad_impl(spec.children_[1], diff, k2, dk2);
      dk = dk.cwiseProduct(k2) + k.cwiseProduct(dk2);
      k = k.cwiseProduct(k2);
      return;
    }
    case KernelSpec::Node::SquaredExponential: {
      const double sf2 = std::exp(spec.params_[0]);
      const double ell = std::exp(spec.params_[1]);
      const double inv_l2 = 1.0 / (ell * ell);
      k = sf2 * (-0.5 * inv_l2 * diff.array().square()).exp().matrix();
      dk = -inv_l2 * k.cwiseProduct(diff);
      return;
    }
    default: {
      const double sp2 = std::exp(spec.params_[0]);
      const double ell = std::exp(spec.params_[1]);
      const double period = std::exp(spec.params_[2]);
      const double inv_l2 = 1.0 / (ell * ell);
      const Eigen::ArrayXXd angle = (kPi / period) * diff.array();
      const Eigen::ArrayXXd s = angle.sin();
      k = sp2 * (-2.0 * inv_l2 * s.square()).exp().matrix();
      dk = (-(2.0 * kPi / period) * inv_l2) *
           k.cwiseProduct((2.0 * angle).sin().matrix());
      return;
    }
  }
}

void kernel_matrix_hyper_impl(const KernelSpec& spec, const Eigen::MatrixXd& diff,
                              Eigen::MatrixXd& k, std::vector<Eigen::MatrixXd>& grads) {
  switch (spec.node_) {
    case KernelSpec::Node::Sum: {
      Eigen::MatrixXd k2;
      std::vector<Eigen::MatrixXd> g2;
      kernel_matrix_hyper_impl(spec.children_[0], diff, k, grads);
      kernel_matrix_hyper_impl(spec.children_[1], diff, k2, g2);
      k += k2;
      grads.insert(grads.end(), std::make_move_iterator(g2.begin()),
                   std::make_move_iterator(g2.end()));
      return;
    }
    case KernelSpec::Node::Product: {
      Eigen::MatrixXd k2;
      std::vector<Eigen::MatrixXd> g2;
      kernel_matrix_hyper_impl(spec.children_[0], diff, k, grads);
      kernel_matrix_hyper_impl(spec.children_[1], diff, k2, g2);
      for (auto& g : grads) g = g.cwiseProduct(k2);
      for (auto& g : g2) grads.push_back(g.cwiseProduct(k));
      k = k.cwiseProduct(k2);
      return;
    }
    case KernelSpec::Node::SquaredExponential: {
      const double ell = std::exp(spec.params_[1]);
      const double inv_l2 = 1.0 / (ell * ell);
      k = kernel_matrix_impl(spec, diff);
      grads.clear();
      grads.push_back(k);
      grads.push_back(inv_l2 * k.cwiseProduct(diff.cwiseProduct(diff)));
      return;
    }
    default: {
      const double ell = std::exp(spec.params_[1]);
      const double period = std::exp(spec.params_[2]);
      const double inv_l2 = 1.0 / (ell * ell);
      const Eigen::ArrayXXd angle = (kPi / period) * diff.array();
      const Eigen::ArrayXXd s = angle.sin();
      k = kernel_matrix_impl(spec, diff);
      grads.clear();
      grads.push_back(k);
      grads.push_back((4.0 * inv_l2) * k.cwiseProduct(s.square().matrix()));
      grads.push_back((2.0 * kPi * inv_l2 / period) *
                      k.cwiseProduct(diff.cwiseProduct((2.0 * angle).sin().matrix())));
      return;
    }
  }
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& za,
                              const Eigen::Ref<const Eigen::VectorXd>& zb) {
  return kernel_matrix_impl(spec, difference_matrix(za, zb));
}

void kernel_matrix_with_grad(const KernelSpec& spec,
                             const Eigen::Ref<const Eigen::VectorXd>& za,
                             const Eigen::Ref<const Eigen::VectorXd>& zb,
                             Eigen::MatrixXd& k, Eigen::MatrixXd& dk_dza) {
  kernel_matrix_grad_impl(spec, difference_matrix(za, zb), k, dk_dza);
}

void kernel_matrix_with_hyper_grads(const KernelSpec& spec,
                                    const Eigen::Ref<const Eigen::VectorXd>& za,
                                    const Eigen::Ref<const Eigen::VectorXd>& zb,
                                    Eigen::MatrixXd& k,
                                    std::vector<Eigen::MatrixXd>& dk_dlog) {
  kernel_matrix_hyper_impl(spec, difference_matrix(za, zb), k, dk_dlog);
}

Eigen::VectorXd kernel_diag(const KernelSpec& spec,
                            const Eigen::Ref<const Eigen::VectorXd>& z) {
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = spec.eval(z[i], z[i]);
  return out;
}

}  // namespace gptrack::gp
