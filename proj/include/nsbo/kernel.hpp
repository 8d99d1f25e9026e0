#pragma once

#include "nsbo/hyperprior.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace nsbo {

namespace detail {

inline constexpr double kSqrt5 = 2.2360679774997896;

/// Matern-5/2 correlation as a function of distance s' = sqrt(5) * d.
inline double matern52_shape(double s) {
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

/// d matern52 / d (d^2): no singularity at zero distance.
inline double matern52_shape_dsq(double s) {
  return -(5.0 / 6.0) * (1.0 + s) * std::exp(-s);
}

}  // namespace detail

/// Cross-covariance evaluator bound to a fixed training set; lets kernels
/// cache per-training-point quantities across many test points.
class PreparedCross {
 public:
  virtual ~PreparedCross() = default;
  /// c[i] = C(x, X_i). When grad != nullptr, also fills grad (n x D) with
  /// d c[i] / d x and dvar_dx with d C(x, x) / d x.
  virtual void cross(const Vector& x, Vector& c, Matrix* grad,
                     Vector* dvar_dx) const = 0;
};

/// Covariance function with hyperparameters exposed for fitting. All state
/// is immutable once parameters are set; evaluation is thread-safe.
class CovarianceFunction {
 public:
  virtual ~CovarianceFunction() = default;
  virtual std::unique_ptr<CovarianceFunction> clone() const = 0;

  virtual int dim() const = 0;
  virtual int n_params() const = 0;
  virtual std::vector<ParamSpec> param_specs() const = 0;
  virtual Vector params() const = 0;
  virtual void set_params(const Vector& p) = 0;

  virtual double eval(const Vector& xi, const Vector& xj) const = 0;

  /// Prior variance C(x, x).
  virtual double variance_at(const Vector& x) const { return eval(x, x); }

  /// Gram matrix over the rows of X; when dK != nullptr, also the per-
  /// hyperparameter derivative matrices (constrained-space gradients).
  virtual void gram(const Matrix& X, Matrix& K,
                    std::vector<Matrix>* dK) const = 0;

  virtual std::shared_ptr<const PreparedCross> prepare(const Matrix& X) const;

  /// Whether gradients of cross-covariances w.r.t. the test input are
  /// available (drives analytic vs finite-difference acquisition gradients).
  virtual bool has_x_grad() const { return false; }

  /// Swap the hyperprior attached to each lengthscale (SAAS shrinkage).
  /// Explicitly frozen (Dirac) lengthscales keep their prior.
  virtual void set_lengthscale_prior(const Hyperprior&) {}

  /// Spike-and-slab structure: number of fitting branches and the active
  /// branch (0 = spike, 1 = slab). Plain kernels have a single branch.
  virtual int n_fit_branches() const { return 1; }
  virtual void set_fit_branch(int) {}

  /// Kernels that treat the domain origin specially (cylindrical): the
  /// origin's covariance row depends on the point under comparison.
  virtual bool origin_special() const { return false; }
  /// C(origin, other) with the origin's angular representative resolved from
  /// `angle_source`.
  virtual double eval_origin(const Vector& /*other*/,
                             const Vector& /*angle_source*/) const {
    throw ConfigError("eval_origin: kernel has no origin special case");
  }
};

namespace detail {
class GenericPreparedCross final : public PreparedCross {
 public:
  GenericPreparedCross(const CovarianceFunction& cov, Matrix X)
      : cov_(cov), X_(std::move(X)) {}
  void cross(const Vector& x, Vector& c, Matrix* grad,
             Vector* dvar) const override {
    c.resize(X_.rows());
    for (Eigen::Index i = 0; i < X_.rows(); ++i)
      c[i] = cov_.eval(x, X_.row(i).transpose());
    if (grad || dvar)
      throw ConfigError("cross: kernel does not provide input gradients");
  }

 private:
  const CovarianceFunction& cov_;
  Matrix X_;
};
}  // namespace detail

inline std::shared_ptr<const PreparedCross> CovarianceFunction::prepare(
    const Matrix& X) const {
  return std::make_shared<detail::GenericPreparedCross>(*this, X);
}

// ---------------------------------------------------------------------------
// Stationary ARD kernels on the weighted Euclidean distance
//   d^2(x, y) = sum_d (x_d / lambda_d - y_d / lambda_d)^2.
// ---------------------------------------------------------------------------

enum class StationaryKind { Matern52, Gaussian };

class StationaryKernel final : public CovarianceFunction {
 public:
  StationaryKernel(StationaryKind kind, int dim, double variance = 1.0,
                   double lengthscale = 1.0)
      : kind_(kind),
        dim_(dim),
        variance_(variance),
        lengthscales_(Vector::Constant(dim, lengthscale)) {}

  std::unique_ptr<CovarianceFunction> clone() const override {
    return std::make_unique<StationaryKernel>(*this);
  }

  StationaryKind kind() const { return kind_; }
  int dim() const override { return dim_; }
  int n_params() const override { return 1 + dim_; }
  double variance() const { return variance_; }
  const Vector& lengthscales() const { return lengthscales_; }

  std::vector<ParamSpec> param_specs() const override {
    std::vector<ParamSpec> specs;
    specs.push_back(variance_spec());
    for (int d = 0; d < dim_; ++d) specs.push_back(lengthscale_spec(d));
    return specs;
  }

  Vector params() const override {
    Vector p(1 + dim_);
    p[0] = variance_;
    p.tail(dim_) = lengthscales_;
    return p;
  }
  void set_params(const Vector& p) override {
    variance_ = p[0];
    lengthscales_ = p.tail(dim_);
  }

  void set_lengthscale_prior(const Hyperprior& prior) override {
    if (lengthscale_prior_ && is_dirac(*lengthscale_prior_)) return;
    lengthscale_prior_ = prior;
  }

  double eval(const Vector& xi, const Vector& xj) const override {
    double d2 = 0.0;
    for (int d = 0; d < dim_; ++d) {
      double t = xi[d] / lengthscales_[d] - xj[d] / lengthscales_[d];
      d2 += t * t;
    }
    return variance_ * shape(d2);
  }

  double variance_at(const Vector&) const override { return variance_; }

  void gram(const Matrix& X, Matrix& K, std::vector<Matrix>* dK) const override;

  std::shared_ptr<const PreparedCross> prepare(const Matrix& X) const override;
  bool has_x_grad() const override { return true; }

  double shape(double d2) const {
    if (kind_ == StationaryKind::Gaussian) return std::exp(-0.5 * d2);
    return detail::matern52_shape(detail::kSqrt5 * std::sqrt(d2));
  }
  /// d shape / d (d^2).
  double shape_dsq(double d2) const {
    if (kind_ == StationaryKind::Gaussian) return -0.5 * std::exp(-0.5 * d2);
    return detail::matern52_shape_dsq(detail::kSqrt5 * std::sqrt(d2));
  }

 private:
  ParamSpec variance_spec() const {
    ParamSpec v;
    v.name = "cov.variance";
    v.transform = Transform::Softplus;
    v.prior = Uniform{std::exp(-12.0), std::exp(20.0)};
    v.lower = std::exp(-12.0);
    v.upper = std::exp(20.0);
    v.init = 1.0;
    return v;
  }
  ParamSpec lengthscale_spec(int d) const {
    ParamSpec l;
    l.name = "cov.lengthscale[" + std::to_string(d) + "]";
    l.transform = Transform::Softplus;
    l.prior = lengthscale_prior_.value_or(
        Hyperprior(Uniform{std::exp(-12.0), 2.0 * std::sqrt(double(dim_))}));
    l.lower = std::exp(-12.0);
    l.upper = 2.0 * std::sqrt(double(dim_));
    l.init = 0.5 * std::sqrt(double(dim_));
    return l;
  }

  class Prepared;

  StationaryKind kind_;
  int dim_;
  double variance_;
  Vector lengthscales_;
  std::optional<Hyperprior> lengthscale_prior_;
};

inline void StationaryKernel::gram(const Matrix& X, Matrix& K,
                                   std::vector<Matrix>* dK) const {
  const Eigen::Index n = X.rows();
  // pre-scaled coordinates h = x / lambda
  Matrix H = X;
  for (int d = 0; d < dim_; ++d) H.col(d) /= lengthscales_[d];
  K.resize(n, n);
  if (dK) {
    dK->assign(n_params(), Matrix());
    for (auto& m : *dK) m.resize(n, n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double d2 = 0.0;
      for (int d = 0; d < dim_; ++d) {
        double t = H(i, d) - H(j, d);
        d2 += t * t;
      }
      double sh = shape(d2);
      K(i, j) = K(j, i) = variance_ * sh;
      if (dK) {
        (*dK)[0](i, j) = (*dK)[0](j, i) = sh;  // d/d variance
        double w = variance_ * shape_dsq(d2);
        for (int d = 0; d < dim_; ++d) {
          double t = H(i, d) - H(j, d);
          double dd2 = -2.0 * t * t / lengthscales_[d];
          (*dK)[1 + d](i, j) = (*dK)[1 + d](j, i) = w * dd2;
        }
      }
    }
  }
}

class StationaryKernel::Prepared final : public PreparedCross {
 public:
  Prepared(const StationaryKernel& k, const Matrix& X) : k_(k) {
    H_ = X;
    for (int d = 0; d < k_.dim_; ++d) H_.col(d) /= k_.lengthscales_[d];
  }

  void cross(const Vector& x, Vector& c, Matrix* grad,
             Vector* dvar) const override {
    const Eigen::Index n = H_.rows();
    const int D = k_.dim_;
    Vector hx(D);
    for (int d = 0; d < D; ++d) hx[d] = x[d] / k_.lengthscales_[d];
    c.resize(n);
    if (grad) grad->resize(n, D);
    for (Eigen::Index i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (int d = 0; d < D; ++d) {
        double t = hx[d] - H_(i, d);
        d2 += t * t;
      }
      c[i] = k_.variance_ * k_.shape(d2);
      if (grad) {
        double w = k_.variance_ * k_.shape_dsq(d2);
        for (int d = 0; d < D; ++d)
          (*grad)(i, d) =
              w * 2.0 * (hx[d] - H_(i, d)) / k_.lengthscales_[d];
      }
    }
    if (dvar) *dvar = Vector::Zero(D);
  }

 private:
  StationaryKernel k_;
  Matrix H_;
};

inline std::shared_ptr<const PreparedCross> StationaryKernel::prepare(
    const Matrix& X) const {
  return std::make_shared<Prepared>(*this, X);
}

/// Matern-5/2 covariance on the weighted Euclidean distance.
inline double matern52(const Vector& xi, const Vector& xj,
                       const Vector& lengthscales, double variance) {
  for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
    if (!(lengthscales[d] > 0.0))
      throw ConfigError("matern52: lengthscales must be positive");
  double d2 = 0.0;
  for (Eigen::Index d = 0; d < xi.size(); ++d) {
    double t = xi[d] / lengthscales[d] - xj[d] / lengthscales[d];
    d2 += t * t;
  }
  return variance * detail::matern52_shape(detail::kSqrt5 * std::sqrt(d2));
}

}  // namespace nsbo
