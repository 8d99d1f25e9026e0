#pragma once

#include "nsbo/kernel.hpp"

#include <memory>
#include <vector>

namespace nsbo {

/// Kernel shape used inside the search model; bounded in (0, 1] with k(0)=1.
enum class AnchorKernel { Gaussian, Matern52 };

/// Promising candidate points with inverse weights r_l = 1/w_l in (0, 1].
/// Smaller ratios express stronger belief that better values lie near the
/// anchor. The anchors' neighborhoods are measured with the weighted
/// Euclidean distance.
struct AnchorSet {
  Matrix anchors;  // L x D, rows inside [-1, 1]^D
  Vector ratios;   // per-anchor r_l in (0, 1]
  std::vector<AnchorKernel> kernels;  // per-anchor k_l, Gaussian by default

  static AnchorSet single(const Vector& anchor, double ratio,
                          AnchorKernel kernel = AnchorKernel::Gaussian) {
    AnchorSet s;
    s.anchors.resize(1, anchor.size());
    s.anchors.row(0) = anchor.transpose();
    s.ratios = Vector::Constant(1, ratio);
    s.kernels = {kernel};
    return s;
  }

  Eigen::Index count() const { return anchors.rows(); }

  void validate(int dim) const {
    if (anchors.rows() < 1) throw ConfigError("AnchorSet: needs L >= 1");
    if (anchors.cols() != dim) throw ConfigError("AnchorSet: dimension");
    if (ratios.size() != anchors.rows() ||
        kernels.size() != static_cast<std::size_t>(anchors.rows()))
      throw ConfigError("AnchorSet: ratios/kernels size mismatch");
    for (Eigen::Index l = 0; l < anchors.rows(); ++l) {
      if (!(ratios[l] > 0.0 && ratios[l] <= 1.0))
        throw ConfigError("AnchorSet: ratio outside (0, 1]");
      for (Eigen::Index d = 0; d < anchors.cols(); ++d)
        if (anchors(l, d) < -1.0 || anchors(l, d) > 1.0)
          throw ConfigError("AnchorSet: anchor outside the domain");
    }
  }
};

/// Settings of the shaping machinery. The ratio ties r_sigma = r_lambda and
/// the shaping distance shares the base lengthscales unless a fixed isotropic
/// shaping lengthscale is supplied (the focused variant).
struct ShapingConfig {
  Hyperprior ratio_prior = Kumaraswamy{3.164, 1000.0};
  std::optional<double> fixed_shaping_lengthscale;  // lambda_0

  static ShapingConfig fixed_ratio(double r0) {
    ShapingConfig c;
    c.ratio_prior = DiracDelta{r0};
    return c;
  }
};

namespace detail {

inline double anchor_kernel_value(AnchorKernel k, double d2) {
  if (k == AnchorKernel::Gaussian) return std::exp(-0.5 * d2);
  return matern52_shape(kSqrt5 * std::sqrt(d2));
}

inline double anchor_kernel_dsq(AnchorKernel k, double d2) {
  if (k == AnchorKernel::Gaussian) return -0.5 * std::exp(-0.5 * d2);
  return matern52_shape_dsq(kSqrt5 * std::sqrt(d2));
}

}  // namespace detail

/// Shaping function phi(x) = 1 + 1/L sum_l (1/r_l - 1) k_l(d_l(x, x0_l)).
/// Equals 1 everywhere when all ratios are 1 and decays to the uninformative
/// slab far from every anchor.
inline double shaping_phi(const Vector& x, const AnchorSet& anchors,
                          const Vector& lengthscales) {
  const Eigen::Index L = anchors.count();
  double acc = 0.0;
  for (Eigen::Index l = 0; l < L; ++l) {
    double d2 = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      double t = (x[d] - anchors.anchors(l, d)) / lengthscales[d];
      d2 += t * t;
    }
    acc += (1.0 / anchors.ratios[l] - 1.0) *
           detail::anchor_kernel_value(anchors.kernels[l], d2);
  }
  return 1.0 + acc / static_cast<double>(L);
}

/// Lengthscale mixture u_lambda(x) = 1 + 1/L sum_l (r_l - 1) k_l(d_l(x, x0_l));
/// the inverse weights set shorter lengthscales near anchors.
inline double lengthscale_mixture(const Vector& x, const AnchorSet& anchors,
                                  const Vector& lengthscales) {
  const Eigen::Index L = anchors.count();
  double acc = 0.0;
  for (Eigen::Index l = 0; l < L; ++l) {
    double d2 = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      double t = (x[d] - anchors.anchors(l, d)) / lengthscales[d];
      d2 += t * t;
    }
    acc += (anchors.ratios[l] - 1.0) *
           detail::anchor_kernel_value(anchors.kernels[l], d2);
  }
  return 1.0 + acc / static_cast<double>(L);
}

/// Spatially-varying prior covariance sigma_0^2(xi, xj) =
/// sigma_p^2 sqrt(phi(xi)) sqrt(phi(xj)); separable, hence a valid
/// covariance function. sqrt(phi) goes through exp(log(phi)/2) to stay
/// accurate for extreme ratios.
inline double prior_covariance(const Vector& xi, const Vector& xj,
                               double sigma_p_sq, const AnchorSet& anchors,
                               const Vector& lengthscales) {
  double li = 0.5 * std::log(shaping_phi(xi, anchors, lengthscales));
  double lj = 0.5 * std::log(shaping_phi(xj, anchors, lengthscales));
  return sigma_p_sq * std::exp(li) * std::exp(lj);
}

/// Warped input h_lambda(x) = u_lambda(x)^-1/2 Lambda^-1/2 x. The effective
/// lengthscale at an anchor with ratio r is sqrt(r) * lambda_d.
inline Vector warp_input(const Vector& x, const AnchorSet& anchors,
                         const Vector& base_lengthscales,
                         const Vector& shaping_lengthscales) {
  double u = lengthscale_mixture(x, anchors, shaping_lengthscales);
  double su = std::exp(0.5 * std::log(u));
  Vector h(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d)
    h[d] = x[d] / (su * base_lengthscales[d]);
  return h;
}

inline Vector warp_input(const Vector& x, const AnchorSet& anchors,
                         const Vector& lengthscales) {
  return warp_input(x, anchors, lengthscales, lengthscales);
}

/// Informative covariance C_I(xi, xj) = sigma_0^2(xi, xj) C_S(h(xi), h(xj))
/// with a unit-variance stationary base. Reduces to sigma_p^2 C_S when all
/// ratios are 1.
inline double informative_cov(const Vector& xi, const Vector& xj,
                              double sigma_p_sq, const AnchorSet& anchors,
                              const Vector& lengthscales,
                              StationaryKind base = StationaryKind::Matern52,
                              std::optional<double> shaping_lengthscale = {}) {
  Vector shaping_ls = shaping_lengthscale
                          ? Vector::Constant(xi.size(), *shaping_lengthscale)
                          : lengthscales;
  Vector hi = warp_input(xi, anchors, lengthscales, shaping_ls);
  Vector hj = warp_input(xj, anchors, lengthscales, shaping_ls);
  double d2 = (hi - hj).squaredNorm();
  double shape = base == StationaryKind::Gaussian
                     ? std::exp(-0.5 * d2)
                     : detail::matern52_shape(detail::kSqrt5 * std::sqrt(d2));
  return prior_covariance(xi, xj, sigma_p_sq, anchors, shaping_ls) * shape;
}

/// Informative covariance as a GP kernel. Hyperparameters: the scaling
/// sigma_p^2, the shared lengthscales, and (unless frozen by the prior) the
/// tied stationarity ratio r0 applied to every anchor.
class InformativeKernel final : public CovarianceFunction {
 public:
  InformativeKernel(int dim, AnchorSet anchors, ShapingConfig shaping = {},
                    StationaryKind base = StationaryKind::Matern52)
      : dim_(dim),
        base_(base),
        shaping_(std::move(shaping)),
        anchors_(std::move(anchors)),
        variance_(1.0),
        lengthscales_(Vector::Constant(dim, 0.5 * std::sqrt(double(dim)))) {
    anchors_.validate(dim);
    ratio_ = is_dirac(shaping_.ratio_prior)
                 ? std::get<DiracDelta>(shaping_.ratio_prior).value
                 : anchors_.ratios.mean();
    apply_ratio();
  }

  std::unique_ptr<CovarianceFunction> clone() const override {
    return std::make_unique<InformativeKernel>(*this);
  }

  int dim() const override { return dim_; }
  int n_params() const override { return 2 + dim_; }

  const AnchorSet& anchor_set() const { return anchors_; }
  void set_anchors(const Matrix& anchors) {
    if (anchors.rows() != anchors_.anchors.rows() ||
        anchors.cols() != dim_)
      throw ConfigError("InformativeKernel: anchor shape mismatch");
    anchors_.anchors = anchors;
  }
  double ratio() const { return ratio_; }
  const Vector& lengthscales() const { return lengthscales_; }
  double variance() const { return variance_; }

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
    for (int d = 0; d < dim_; ++d) {
      ParamSpec l;
      l.name = "cov.lengthscale[" + std::to_string(d) + "]";
      l.transform = Transform::Softplus;
      l.prior = lengthscale_prior_.value_or(
          Hyperprior(Uniform{std::exp(-12.0), 2.0 * std::sqrt(double(dim_))}));
      l.lower = std::exp(-12.0);
      l.upper = 2.0 * std::sqrt(double(dim_));
      l.init = 0.5 * std::sqrt(double(dim_));
      specs.push_back(l);
    }
    ParamSpec r;
    r.name = "cov.ratio";
    r.transform = Transform::Logistic;
    r.prior = shaping_.ratio_prior;
    r.lower = 1e-9;
    r.upper = 1.0;
    r.init = is_dirac(shaping_.ratio_prior)
                 ? std::get<DiracDelta>(shaping_.ratio_prior).value
                 : 0.1;
    specs.push_back(r);
    return specs;
  }

  Vector params() const override {
    Vector p(n_params());
    p[0] = variance_;
    p.segment(1, dim_) = lengthscales_;
    p[1 + dim_] = ratio_;
    return p;
  }
  void set_params(const Vector& p) override {
    variance_ = p[0];
    lengthscales_ = p.segment(1, dim_);
    ratio_ = p[1 + dim_];
    apply_ratio();
  }

  void set_lengthscale_prior(const Hyperprior& prior) override {
    if (lengthscale_prior_ && is_dirac(*lengthscale_prior_)) return;
    lengthscale_prior_ = prior;
  }

  double eval(const Vector& xi, const Vector& xj) const override {
    return informative_cov(xi, xj, variance_, anchors_, lengthscales_, base_,
                           shaping_.fixed_shaping_lengthscale);
  }

  double variance_at(const Vector& x) const override {
    return variance_ * shaping_phi(x, anchors_, shaping_lengthscales());
  }

  void gram(const Matrix& X, Matrix& K, std::vector<Matrix>* dK) const override;
  std::shared_ptr<const PreparedCross> prepare(const Matrix& X) const override;
  bool has_x_grad() const override { return true; }

 private:
  // Per-point quantities entering every pair term. The lambda-derivative
  // tables are only populated when the shaping distance shares the base
  // lengthscales.
  struct PointState {
    double phi, sphi, u, su;        // phi, sqrt(phi), u, sqrt(u)
    double gbar;                    // 1/L sum_l g_l, for ratio gradients
    Vector h;                       // warped input
    Vector dphi_dl, du_dl;          // optional, per base lengthscale
  };

  Vector shaping_lengthscales() const {
    return shaping_.fixed_shaping_lengthscale
               ? Vector::Constant(dim_, *shaping_.fixed_shaping_lengthscale)
               : lengthscales_;
  }

  bool shared_shaping() const {
    return !shaping_.fixed_shaping_lengthscale.has_value();
  }

  bool ratio_learned() const { return !is_dirac(shaping_.ratio_prior); }

  void apply_ratio() { anchors_.ratios.setConstant(ratio_); }

  PointState point_state(const Vector& x, bool with_lambda_grads) const;

  class Prepared;

  int dim_;
  StationaryKind base_;
  ShapingConfig shaping_;
  AnchorSet anchors_;
  double variance_;
  Vector lengthscales_;
  double ratio_;
  std::optional<Hyperprior> lengthscale_prior_;
};

inline InformativeKernel::PointState InformativeKernel::point_state(
    const Vector& x, bool with_lambda_grads) const {
  const Eigen::Index L = anchors_.count();
  const Vector shaping_ls = shaping_lengthscales();
  PointState s;
  s.gbar = 0.0;
  double phi_acc = 0.0, u_acc = 0.0;
  with_lambda_grads = with_lambda_grads && shared_shaping();
  if (with_lambda_grads) {
    s.dphi_dl = Vector::Zero(dim_);
    s.du_dl = Vector::Zero(dim_);
  }
  for (Eigen::Index l = 0; l < L; ++l) {
    double d2 = 0.0;
    for (int d = 0; d < dim_; ++d) {
      double t = (x[d] - anchors_.anchors(l, d)) / shaping_ls[d];
      d2 += t * t;
    }
    const double r = anchors_.ratios[l];
    const double g = detail::anchor_kernel_value(anchors_.kernels[l], d2);
    s.gbar += g;
    phi_acc += (1.0 / r - 1.0) * g;
    u_acc += (r - 1.0) * g;
    if (with_lambda_grads) {
      double gq = detail::anchor_kernel_dsq(anchors_.kernels[l], d2);
      for (int d = 0; d < dim_; ++d) {
        double delta = x[d] - anchors_.anchors(l, d);
        // d (d^2) / d lambda_d = -2 delta^2 / lambda^3
        double dd2 = -2.0 * delta * delta /
                     (shaping_ls[d] * shaping_ls[d] * shaping_ls[d]);
        double dg = gq * dd2;
        s.dphi_dl[d] += (1.0 / r - 1.0) * dg;
        s.du_dl[d] += (r - 1.0) * dg;
      }
    }
  }
  const double invL = 1.0 / static_cast<double>(L);
  s.gbar *= invL;
  s.phi = 1.0 + invL * phi_acc;
  s.u = 1.0 + invL * u_acc;
  s.sphi = std::exp(0.5 * std::log(s.phi));
  s.su = std::exp(0.5 * std::log(s.u));
  if (with_lambda_grads) {
    s.dphi_dl *= invL;
    s.du_dl *= invL;
  }
  s.h.resize(dim_);
  for (int d = 0; d < dim_; ++d) s.h[d] = x[d] / (s.su * lengthscales_[d]);
  return s;
}

inline void InformativeKernel::gram(const Matrix& X, Matrix& K,
                                    std::vector<Matrix>* dK) const {
  const Eigen::Index n = X.rows();
  const bool grads = dK != nullptr;
  std::vector<PointState> st;
  st.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i)
    st.push_back(point_state(X.row(i).transpose(), grads));

  K.resize(n, n);
  if (grads) {
    dK->assign(n_params(), Matrix());
    for (auto& m : *dK) m.resize(n, n);
  }

  const bool shared = shared_shaping();
  for (Eigen::Index i = 0; i < n; ++i) {
    const PointState& a = st[i];
    for (Eigen::Index j = i; j < n; ++j) {
      const PointState& b = st[j];
      double d2 = 0.0;
      for (int d = 0; d < dim_; ++d) {
        double t = a.h[d] - b.h[d];
        d2 += t * t;
      }
      double shape = base_ == StationaryKind::Gaussian
                         ? std::exp(-0.5 * d2)
                         : detail::matern52_shape(detail::kSqrt5 *
                                                  std::sqrt(d2));
      double spp = a.sphi * b.sphi;
      K(i, j) = K(j, i) = variance_ * spp * shape;
      if (!grads) continue;

      double shape_q = base_ == StationaryKind::Gaussian
                           ? -0.5 * shape
                           : detail::matern52_shape_dsq(detail::kSqrt5 *
                                                        std::sqrt(d2));
      double w = variance_ * spp * shape_q;  // times d(d^2)/d theta
      // d(d^2)/d u_i = -(sum_d delta_d h_id) / u_i
      double dot_a = 0.0, dot_b = 0.0;
      for (int d = 0; d < dim_; ++d) {
        double delta = a.h[d] - b.h[d];
        dot_a += delta * a.h[d];
        dot_b += delta * b.h[d];
      }
      double dd2_dui = -dot_a / a.u;
      double dd2_duj = dot_b / b.u;  // delta enters with opposite sign

      (*dK)[0](i, j) = (*dK)[0](j, i) = spp * shape;  // variance
      for (int d = 0; d < dim_; ++d) {
        double delta = a.h[d] - b.h[d];
        double dd2 = -2.0 * delta * delta / lengthscales_[d];
        if (shared)
          dd2 += dd2_dui * a.du_dl[d] + dd2_duj * b.du_dl[d];
        double dphi_term = 0.0;
        if (shared)
          dphi_term = variance_ * shape *
                      (b.sphi * a.dphi_dl[d] / (2.0 * a.sphi) +
                       a.sphi * b.dphi_dl[d] / (2.0 * b.sphi));
        (*dK)[1 + d](i, j) = (*dK)[1 + d](j, i) = dphi_term + w * dd2;
      }
      // tied ratio: d phi/d r = -gbar / r^2, d u/d r = gbar
      double dphi_a = -a.gbar / (ratio_ * ratio_);
      double dphi_b = -b.gbar / (ratio_ * ratio_);
      double dr = variance_ * shape *
                      (b.sphi * dphi_a / (2.0 * a.sphi) +
                       a.sphi * dphi_b / (2.0 * b.sphi)) +
                  w * (dd2_dui * a.gbar + dd2_duj * b.gbar);
      (*dK)[1 + dim_](i, j) = (*dK)[1 + dim_](j, i) = dr;
    }
  }
}

class InformativeKernel::Prepared final : public PreparedCross {
 public:
  Prepared(const InformativeKernel& k, const Matrix& X) : k_(k) {
    states_.reserve(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      states_.push_back(k_.point_state(X.row(i).transpose(), false));
  }

  void cross(const Vector& x, Vector& c, Matrix* grad,
             Vector* dvar) const override {
    const int D = k_.dim_;
    const Eigen::Index n = static_cast<Eigen::Index>(states_.size());
    PointState t = k_.point_state(x, false);

    // gradients of phi(x) and u(x) w.r.t. the test input
    Vector dphi_dx, du_dx;
    if (grad || dvar) {
      dphi_dx = Vector::Zero(D);
      du_dx = Vector::Zero(D);
      const Vector shaping_ls = k_.shaping_lengthscales();
      const Eigen::Index L = k_.anchors_.count();
      for (Eigen::Index l = 0; l < L; ++l) {
        double d2 = 0.0;
        for (int d = 0; d < D; ++d) {
          double s = (x[d] - k_.anchors_.anchors(l, d)) / shaping_ls[d];
          d2 += s * s;
        }
        double gq = detail::anchor_kernel_dsq(k_.anchors_.kernels[l], d2);
        double r = k_.anchors_.ratios[l];
        for (int d = 0; d < D; ++d) {
          double dd2 = 2.0 * (x[d] - k_.anchors_.anchors(l, d)) /
                       (shaping_ls[d] * shaping_ls[d]);
          dphi_dx[d] += (1.0 / r - 1.0) * gq * dd2;
          du_dx[d] += (r - 1.0) * gq * dd2;
        }
      }
      dphi_dx /= static_cast<double>(L);
      du_dx /= static_cast<double>(L);
    }

    c.resize(n);
    if (grad) grad->resize(n, D);
    for (Eigen::Index i = 0; i < n; ++i) {
      const PointState& b = states_[i];
      double d2 = 0.0, dot_t = 0.0;
      for (int d = 0; d < D; ++d) {
        double delta = t.h[d] - b.h[d];
        d2 += delta * delta;
        dot_t += delta * t.h[d];
      }
      double shape = k_.base_ == StationaryKind::Gaussian
                         ? std::exp(-0.5 * d2)
                         : detail::matern52_shape(detail::kSqrt5 *
                                                  std::sqrt(d2));
      c[i] = k_.variance_ * t.sphi * b.sphi * shape;
      if (grad) {
        double shape_q = k_.base_ == StationaryKind::Gaussian
                             ? -0.5 * shape
                             : detail::matern52_shape_dsq(detail::kSqrt5 *
                                                          std::sqrt(d2));
        for (int d = 0; d < D; ++d) {
          double delta = t.h[d] - b.h[d];
          double dd2 = 2.0 * delta / (t.su * k_.lengthscales_[d]) -
                       dot_t * du_dx[d] / t.u;
          (*grad)(i, d) =
              k_.variance_ * b.sphi *
              (shape * dphi_dx[d] / (2.0 * t.sphi) + t.sphi * shape_q * dd2);
        }
      }
    }
    if (dvar) *dvar = k_.variance_ * dphi_dx;
  }

 private:
  InformativeKernel k_;
  std::vector<PointState> states_;
};

inline std::shared_ptr<const PreparedCross> InformativeKernel::prepare(
    const Matrix& X) const {
  return std::make_shared<Prepared>(*this, X);
}

}  // namespace nsbo
