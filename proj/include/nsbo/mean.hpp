#pragma once

#include "nsbo/hyperprior.hpp"

#include <memory>
#include <vector>

namespace nsbo {

/// Prior mean function with hyperparameters exposed for empirical-Bayes
/// fitting. Implementations are value types behind clone().
class MeanFunction {
 public:
  virtual ~MeanFunction() = default;
  virtual std::unique_ptr<MeanFunction> clone() const = 0;

  virtual int dim() const = 0;
  virtual int n_params() const = 0;
  virtual std::vector<ParamSpec> param_specs() const = 0;
  virtual Vector params() const = 0;
  virtual void set_params(const Vector& p) = 0;

  virtual double value(const Vector& x) const = 0;
  /// d value(x) / d params, written to out[0..n_params).
  virtual void param_grad(const Vector& x, double* out) const = 0;
  virtual Vector x_grad(const Vector& x) const = 0;

  /// Refresh data-dependent hyperprior bounds (the constant offset is given
  /// a uniform prior between the minimum and maximum observed values).
  virtual void set_observed_range(double /*lo*/, double /*hi*/) {}
};

class ConstantMean final : public MeanFunction {
 public:
  explicit ConstantMean(int dim, double offset = 0.0)
      : dim_(dim), offset_(offset) {}

  std::unique_ptr<MeanFunction> clone() const override {
    return std::make_unique<ConstantMean>(*this);
  }

  int dim() const override { return dim_; }
  int n_params() const override { return 1; }

  std::vector<ParamSpec> param_specs() const override {
    ParamSpec b;
    b.name = "mean.offset";
    b.transform = Transform::Identity;
    b.prior = Uniform{range_lo_, range_hi_};
    b.lower = range_lo_;
    b.upper = range_hi_;
    b.init = 0.5 * (range_lo_ + range_hi_);
    return {b};
  }

  Vector params() const override {
    Vector p(1);
    p[0] = offset_;
    return p;
  }
  void set_params(const Vector& p) override { offset_ = p[0]; }

  double value(const Vector&) const override { return offset_; }
  void param_grad(const Vector&, double* out) const override { out[0] = 1.0; }
  Vector x_grad(const Vector&) const override { return Vector::Zero(dim_); }

  void set_observed_range(double lo, double hi) override {
    if (!(hi > lo)) {  // degenerate range, widen a hair
      lo -= 0.5;
      hi += 0.5;
    }
    range_lo_ = lo;
    range_hi_ = hi;
  }

 private:
  int dim_;
  double offset_ = 0.0;
  double range_lo_ = -1.0, range_hi_ = 1.0;
};

/// Axis-aligned convex quadratic m(x) = b + sum_d a_d ([x]_d - [c0]_d)^2 with
/// non-negative weights a_d under an HS+(2) shrinkage prior.
class QuadraticMean final : public MeanFunction {
 public:
  explicit QuadraticMean(int dim)
      : dim_(dim),
        offset_(0.0),
        weights_(Vector::Constant(dim, 1e-3)),
        center_(Vector::Zero(dim)) {}

  std::unique_ptr<MeanFunction> clone() const override {
    return std::make_unique<QuadraticMean>(*this);
  }

  int dim() const override { return dim_; }
  int n_params() const override { return 1 + dim_; }

  const Vector& center() const { return center_; }
  void set_center(const Vector& c) {
    if (c.size() != dim_) throw ConfigError("QuadraticMean: center dimension");
    center_ = c;
  }

  std::vector<ParamSpec> param_specs() const override {
    std::vector<ParamSpec> specs;
    ParamSpec b;
    b.name = "mean.offset";
    b.transform = Transform::Identity;
    b.prior = Uniform{range_lo_, range_hi_};
    b.lower = range_lo_;
    b.upper = range_hi_;
    b.init = 0.5 * (range_lo_ + range_hi_);
    specs.push_back(b);
    for (int d = 0; d < dim_; ++d) {
      ParamSpec a;
      a.name = "mean.weight[" + std::to_string(d) + "]";
      a.transform = Transform::Softplus;
      a.prior = HalfHorseshoe{2.0};
      a.lower = 1e-10;
      a.upper = kInf;
      a.init = 1e-3;
      specs.push_back(a);
    }
    return specs;
  }

  Vector params() const override {
    Vector p(1 + dim_);
    p[0] = offset_;
    p.tail(dim_) = weights_;
    return p;
  }
  void set_params(const Vector& p) override {
    offset_ = p[0];
    weights_ = p.tail(dim_);
  }

  double value(const Vector& x) const override {
    double v = offset_;
    for (int d = 0; d < dim_; ++d) {
      double t = x[d] - center_[d];
      v += weights_[d] * t * t;
    }
    return v;
  }

  void param_grad(const Vector& x, double* out) const override {
    out[0] = 1.0;
    for (int d = 0; d < dim_; ++d) {
      double t = x[d] - center_[d];
      out[1 + d] = t * t;
    }
  }

  Vector x_grad(const Vector& x) const override {
    Vector g(dim_);
    for (int d = 0; d < dim_; ++d)
      g[d] = 2.0 * weights_[d] * (x[d] - center_[d]);
    return g;
  }

  void set_observed_range(double lo, double hi) override {
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    range_lo_ = lo;
    range_hi_ = hi;
  }

 private:
  int dim_;
  double offset_;
  Vector weights_;
  Vector center_;
  double range_lo_ = -1.0, range_hi_ = 1.0;
};

}  // namespace nsbo
