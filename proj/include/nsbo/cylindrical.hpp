#pragma once

#include "nsbo/kernel.hpp"

#include <memory>
#include <vector>

namespace nsbo {

/// Kumaraswamy CDF F(r) = 1 - (1 - r^alpha)^beta on [0, 1]; the identity
/// transform is alpha = beta = 1.
inline double kumaraswamy_cdf(double r, double alpha, double beta) {
  if (r <= 0.0) return 0.0;
  if (r >= 1.0) return 1.0;
  return 1.0 - std::pow(1.0 - std::pow(r, alpha), beta);
}

struct CylindricalParams {
  Vector angular_weights;  // c_p, p = 0..3, normalized at evaluation
  double alpha = 1.0;      // radius warp shapes
  double beta = 1.0;
};

/// Cylindrical covariance: product of a 1-D Matern-5/2 on Kumaraswamy-warped
/// radii and an angular polynomial C_a(a1, a2) = sum_p c_p (a1' a2)^p. The
/// origin has no angular representative; whenever one input sits at the
/// origin its angle is taken from the other point, so the angular factor is
/// 1 there. Radii are normalized by sqrt(D) to land in [0, 1].
class CylindricalKernel final : public CovarianceFunction {
 public:
  explicit CylindricalKernel(int dim)
      : dim_(dim),
        variance_(1.0),
        radial_lengthscale_(0.3),
        weights_(Vector::Constant(4, 1.0)),
        alpha_(1.0),
        beta_(1.0) {}

  std::unique_ptr<CovarianceFunction> clone() const override {
    return std::make_unique<CylindricalKernel>(*this);
  }

  int dim() const override { return dim_; }
  int n_params() const override { return 8; }

  CylindricalParams cyl_params() const {
    return {weights_ / weights_.sum(), alpha_, beta_};
  }

  /// Freeze alpha and beta at 1 (the spike branch of their spike-and-slab
  /// prior). Fitting tries both branches and keeps the better one.
  void set_warp_frozen(bool frozen) { warp_frozen_ = frozen; }
  bool warp_frozen() const { return warp_frozen_; }

  int n_fit_branches() const override { return 2; }
  void set_fit_branch(int branch) override { set_warp_frozen(branch == 0); }

  std::vector<ParamSpec> param_specs() const override {
    std::vector<ParamSpec> specs;
    ParamSpec v;
    v.name = "cov.variance";
    v.transform = Transform::Softplus;
    v.prior = Uniform{std::exp(-12.0), std::exp(20.0)};
    v.lower = std::exp(-12.0);
    v.upper = std::exp(20.0);
    v.init = 1.0;
    specs.push_back(v);
    ParamSpec l;
    l.name = "cov.radial_lengthscale";
    l.transform = Transform::Softplus;
    l.prior = Uniform{std::exp(-12.0), 2.0 * std::sqrt(double(dim_))};
    l.lower = std::exp(-12.0);
    l.upper = 2.0 * std::sqrt(double(dim_));
    l.init = 0.3;
    specs.push_back(l);
    for (int p = 0; p < 4; ++p) {
      ParamSpec c;
      c.name = "cov.angular_weight[" + std::to_string(p) + "]";
      c.transform = Transform::Log;
      c.prior = LogNormal{0.0, 2.0};
      c.lower = 1e-9;
      c.upper = 1e9;
      c.init = 1.0;
      specs.push_back(c);
    }
    ParamSpec a;
    a.name = "cov.warp_alpha";
    a.transform = Transform::Log;
    a.prior = warp_frozen_ ? Hyperprior(DiracDelta{1.0})
                           : Hyperprior(SpikeSlabLog{1.0, 0.5, 1.0});
    a.lower = 0.5;
    a.upper = 1.0;
    a.init = warp_frozen_ ? 1.0 : 0.75;
    specs.push_back(a);
    ParamSpec b;
    b.name = "cov.warp_beta";
    b.prior = warp_frozen_ ? Hyperprior(DiracDelta{1.0})
                           : Hyperprior(SpikeSlabLog{1.0, 1.0, 2.0});
    b.transform = Transform::Log;
    b.lower = 1.0;
    b.upper = 2.0;
    b.init = warp_frozen_ ? 1.0 : 1.5;
    specs.push_back(b);
    return specs;
  }

  Vector params() const override {
    Vector p(8);
    p[0] = variance_;
    p[1] = radial_lengthscale_;
    p.segment(2, 4) = weights_;
    p[6] = alpha_;
    p[7] = beta_;
    return p;
  }
  void set_params(const Vector& p) override {
    variance_ = p[0];
    radial_lengthscale_ = p[1];
    weights_ = p.segment(2, 4);
    alpha_ = p[6];
    beta_ = p[7];
  }

  double eval(const Vector& xi, const Vector& xj) const override {
    double ri = radius(xi), rj = radius(xj);
    double t = angular_dot(xi, ri, xj, rj);
    return pair_value(ri, rj, t);
  }

  double variance_at(const Vector&) const override { return variance_; }

  bool origin_special() const override { return true; }

  double eval_origin(const Vector& other,
                     const Vector& angle_source) const override {
    double ro = radius(other);
    double rs = radius(angle_source);
    double t = 1.0;
    if (ro > kRadiusTol && rs > kRadiusTol)
      t = clamp(angle_source.dot(other) /
                    (angle_source.norm() * other.norm()),
                -1.0, 1.0);
    return pair_value(0.0, ro, t);
  }

  void gram(const Matrix& X, Matrix& K, std::vector<Matrix>* dK) const override;
  std::shared_ptr<const PreparedCross> prepare(const Matrix& X) const override;

 private:
  static constexpr double kRadiusTol = 1e-12;

  double radius(const Vector& x) const {
    return x.norm() / std::sqrt(double(dim_));
  }

  double angular_dot(const Vector& xi, double ri, const Vector& xj,
                     double rj) const {
    if (ri <= kRadiusTol || rj <= kRadiusTol) return 1.0;
    return clamp(xi.dot(xj) / (xi.norm() * xj.norm()), -1.0, 1.0);
  }

  double angular_poly(double t) const {
    double s = weights_.sum();
    double tp = 1.0, acc = 0.0;
    for (int p = 0; p < 4; ++p) {
      acc += weights_[p] * tp;
      tp *= t;
    }
    return acc / s;
  }

  double pair_value(double ri, double rj, double t) const {
    double df = std::abs(kumaraswamy_cdf(ri, alpha_, beta_) -
                         kumaraswamy_cdf(rj, alpha_, beta_));
    double s = detail::kSqrt5 * df / radial_lengthscale_;
    return variance_ * detail::matern52_shape(s) * angular_poly(t);
  }

  // dF/dalpha and dF/dbeta with the r -> 0, 1 limits handled.
  double dF_dalpha(double r) const {
    if (r <= kRadiusTol || r >= 1.0) return 0.0;
    double ra = std::pow(r, alpha_);
    if (ra >= 1.0) return 0.0;
    return beta_ * std::pow(1.0 - ra, beta_ - 1.0) * ra * std::log(r);
  }
  double dF_dbeta(double r) const {
    if (r <= kRadiusTol || r >= 1.0) return 0.0;
    double ra = std::pow(r, alpha_);
    double om = 1.0 - ra;
    if (om <= 0.0) return 0.0;
    return -std::pow(om, beta_) * std::log(om);
  }

  void pair_grads(double ri, double rj, double t, double* out) const {
    // out[0..7]: variance, lengthscale, c_0..c_3, alpha, beta
    double Fi = kumaraswamy_cdf(ri, alpha_, beta_);
    double Fj = kumaraswamy_cdf(rj, alpha_, beta_);
    double df = std::abs(Fi - Fj);
    double sgn = Fi > Fj ? 1.0 : (Fi < Fj ? -1.0 : 0.0);
    double s = detail::kSqrt5 * df / radial_lengthscale_;
    double M = detail::matern52_shape(s);
    double dM_ds = -s * (1.0 + s) * std::exp(-s) / 3.0;
    double A = angular_poly(t);
    out[0] = M * A;
    out[1] = variance_ * A * dM_ds * (-s / radial_lengthscale_);
    double S = weights_.sum(), tp = 1.0;
    for (int p = 0; p < 4; ++p) {
      out[2 + p] = variance_ * M * (tp - A) / S;
      tp *= t;
    }
    double common = variance_ * A * dM_ds * detail::kSqrt5 * sgn /
                    radial_lengthscale_;
    out[6] = common * (dF_dalpha(ri) - dF_dalpha(rj));
    out[7] = common * (dF_dbeta(ri) - dF_dbeta(rj));
  }

  class Prepared;
  friend class Prepared;

  int dim_;
  double variance_;
  double radial_lengthscale_;
  Vector weights_;
  double alpha_, beta_;
  bool warp_frozen_ = false;
};

inline void CylindricalKernel::gram(const Matrix& X, Matrix& K,
                                    std::vector<Matrix>* dK) const {
  const Eigen::Index n = X.rows();
  Vector radii(n);
  for (Eigen::Index i = 0; i < n; ++i)
    radii[i] = radius(X.row(i).transpose());
  K.resize(n, n);
  if (dK) {
    dK->assign(8, Matrix());
    for (auto& m : *dK) m.resize(n, n);
  }
  double g[8];
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double t = angular_dot(X.row(i).transpose(), radii[i],
                             X.row(j).transpose(), radii[j]);
      K(i, j) = K(j, i) = pair_value(radii[i], radii[j], t);
      if (dK) {
        pair_grads(radii[i], radii[j], t, g);
        for (int p = 0; p < 8; ++p) (*dK)[p](i, j) = (*dK)[p](j, i) = g[p];
      }
    }
  }
}

class CylindricalKernel::Prepared final : public PreparedCross {
 public:
  Prepared(const CylindricalKernel& k, const Matrix& X) : k_(k), X_(X) {
    radii_.resize(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      radii_[i] = k_.radius(X.row(i).transpose());
  }

  void cross(const Vector& x, Vector& c, Matrix* grad,
             Vector* dvar) const override {
    if (grad || dvar)
      throw ConfigError("cylindrical covariance has no input gradients");
    double rx = k_.radius(x);
    c.resize(X_.rows());
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
      double t = k_.angular_dot(x, rx, X_.row(i).transpose(), radii_[i]);
      c[i] = k_.pair_value(rx, radii_[i], t);
    }
  }

 private:
  CylindricalKernel k_;
  Matrix X_;
  Vector radii_;
};

inline std::shared_ptr<const PreparedCross> CylindricalKernel::prepare(
    const Matrix& X) const {
  return std::make_shared<Prepared>(*this, X);
}

}  // namespace nsbo
