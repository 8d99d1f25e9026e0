#pragma once

#include "nsbo/evidence.hpp"
#include "nsbo/kernel.hpp"
#include "nsbo/mean.hpp"

#include <Eigen/Cholesky>

#include <memory>
#include <sstream>
#include <utility>
#include <vector>

namespace nsbo {

struct PosteriorPredictive {
  double mean = 0.0;
  double variance = 0.0;
};

// ---------------------------------------------------------------------------
// Flattened view over the non-frozen hyperparameters of a (mean, covariance)
// pair: unconstrained coordinates, optimizer bounds and hyperprior penalty.
// Parameters with a DiracDelta prior stay at their value and are excluded.
// ---------------------------------------------------------------------------

class ParamBinding {
 public:
  ParamBinding(MeanFunction& mean, CovarianceFunction& cov)
      : mean_(&mean), cov_(&cov) {
    rebuild();
  }

  void rebuild() {
    mean_specs_ = mean_->param_specs();
    cov_specs_ = cov_->param_specs();
    active_.clear();
    for (int i = 0; i < static_cast<int>(mean_specs_.size()); ++i)
      if (!is_dirac(mean_specs_[i].prior)) active_.push_back({true, i});
    for (int i = 0; i < static_cast<int>(cov_specs_.size()); ++i)
      if (!is_dirac(cov_specs_[i].prior)) active_.push_back({false, i});
    freeze_dirac_params();
  }

  int size() const { return static_cast<int>(active_.size()); }

  const ParamSpec& spec(int k) const {
    const auto& [is_mean, idx] = active_[k];
    return is_mean ? mean_specs_[idx] : cov_specs_[idx];
  }

  /// Current constrained values of the active parameters.
  Vector values() const {
    Vector vm = mean_->params(), vc = cov_->params();
    Vector out(size());
    for (int k = 0; k < size(); ++k) {
      const auto& [is_mean, idx] = active_[k];
      out[k] = is_mean ? vm[idx] : vc[idx];
    }
    return out;
  }

  void set_values(const Vector& vals) {
    Vector vm = mean_->params(), vc = cov_->params();
    for (int k = 0; k < size(); ++k) {
      const auto& [is_mean, idx] = active_[k];
      (is_mean ? vm[idx] : vc[idx]) = vals[k];
    }
    mean_->set_params(vm);
    cov_->set_params(vc);
  }

  Vector to_unconstrained() const {
    Vector v = values(), z(size());
    for (int k = 0; k < size(); ++k)
      z[k] = transform_invert(spec(k).transform, v[k]);
    return z;
  }

  void set_unconstrained(const Vector& z) {
    Vector v(size());
    for (int k = 0; k < size(); ++k)
      v[k] = transform_apply(spec(k).transform, z[k]);
    set_values(v);
  }

  /// Optimizer box in unconstrained coordinates (intersection of the spec
  /// bounds and the hyperprior support).
  std::pair<Vector, Vector> bounds_unconstrained() const {
    auto z_of = [](const ParamSpec& s, double v, bool upper) -> double {
      if (!std::isfinite(v)) return upper ? kInf : -kInf;
      if (s.transform != Transform::Identity && v <= 0.0) return -kInf;
      if (s.transform == Transform::Logistic && v >= 1.0) return kInf;
      return transform_invert(s.transform, v);
    };
    Vector lo(size()), hi(size());
    for (int k = 0; k < size(); ++k) {
      const ParamSpec& s = spec(k);
      auto [plo, phi] = support(s.prior);
      lo[k] = z_of(s, std::max(s.lower, plo), false);
      hi[k] = z_of(s, std::min(s.upper, phi), true);
    }
    return {lo, hi};
  }

  MeanFunction& mean() const { return *mean_; }
  CovarianceFunction& cov() const { return *cov_; }

  double log_prior() const {
    Vector v = values();
    double acc = 0.0;
    for (int k = 0; k < size(); ++k)
      acc += log_density(spec(k).prior, v[k]);
    return acc;
  }

  /// d log prior / d value, per active parameter.
  Vector log_prior_grad() const {
    Vector v = values(), g(size());
    for (int k = 0; k < size(); ++k)
      g[k] = log_density_grad(spec(k).prior, v[k]);
    return g;
  }

  /// Jacobians d value / d z at the current point.
  Vector jacobians() const {
    Vector z = to_unconstrained(), j(size());
    for (int k = 0; k < size(); ++k)
      j[k] = transform_jacobian(spec(k).transform, z[k]);
    return j;
  }

  /// Draw each active parameter from its hyperprior (restart initialization).
  Vector sample_values(Rng& rng) const {
    Vector v(size());
    for (int k = 0; k < size(); ++k) v[k] = sample(spec(k).prior, rng);
    return v;
  }

  /// Indices of the active parameters inside the full [mean | cov] gradient
  /// layout (mean params first).
  int full_index(int k) const {
    const auto& [is_mean, idx] = active_[k];
    return is_mean ? idx : static_cast<int>(mean_specs_.size()) + idx;
  }
  bool is_mean_param(int k) const { return active_[k].first; }
  int owner_index(int k) const { return active_[k].second; }

 private:
  void freeze_dirac_params() {
    Vector vm = mean_->params(), vc = cov_->params();
    bool touched = false;
    for (int i = 0; i < static_cast<int>(mean_specs_.size()); ++i)
      if (const auto* d = std::get_if<DiracDelta>(&mean_specs_[i].prior)) {
        vm[i] = d->value;
        touched = true;
      }
    for (int i = 0; i < static_cast<int>(cov_specs_.size()); ++i)
      if (const auto* d = std::get_if<DiracDelta>(&cov_specs_[i].prior)) {
        vc[i] = d->value;
        touched = true;
      }
    if (touched) {
      mean_->set_params(vm);
      cov_->set_params(vc);
    }
  }

  MeanFunction* mean_;
  CovarianceFunction* cov_;
  std::vector<ParamSpec> mean_specs_, cov_specs_;
  std::vector<std::pair<bool, int>> active_;  // (is_mean, owner index)
};

// ---------------------------------------------------------------------------
// Exact GP regression with a cached Cholesky factor of [C_n + sigma_y^2 I].
// Once conditioned, a model is immutable and safe to share across threads.
// ---------------------------------------------------------------------------

class GpModel {
 public:
  GpModel(std::shared_ptr<MeanFunction> mean,
          std::shared_ptr<CovarianceFunction> cov, double noise_variance)
      : mean_(std::move(mean)), cov_(std::move(cov)), noise_(noise_variance) {
    if (noise_ < 0.0) throw ConfigError("GpModel: negative noise variance");
    if (mean_->dim() != cov_->dim())
      throw ConfigError("GpModel: mean/covariance dimension mismatch");
  }

  const MeanFunction& mean_function() const { return *mean_; }
  const CovarianceFunction& covariance() const { return *cov_; }
  std::shared_ptr<MeanFunction> mean_ptr() const { return mean_; }
  std::shared_ptr<CovarianceFunction> cov_ptr() const { return cov_; }
  double noise_variance() const { return noise_; }
  double jitter() const { return jitter_; }
  bool conditioned() const { return conditioned_; }
  Eigen::Index train_size() const { return X_.rows(); }

  bool degraded_fit() const { return degraded_; }
  void mark_degraded() { degraded_ = true; }

  /// Build the posterior caches for an evidence set. Escalates jitter when
  /// the Gram factorization is not positive definite.
  void condition(const EvidenceSet& ev);

  PosteriorPredictive predict(const Vector& x) const;

  /// Posterior mean/variance plus their gradients w.r.t. the test input.
  void predict_with_grad(const Vector& x, PosteriorPredictive& out,
                         Vector& dmean_dx, Vector& dvar_dx) const;

  void predict_batch(const Matrix& Xtest, Vector& means, Vector& vars) const;

  /// Data-fit part of the log marginal likelihood at the conditioned state.
  double log_marginal() const { return log_marginal_; }

  /// Exact leave-one-out log predictive density from the cached factor.
  double loo_log_predictive() const;

 private:
  void factorize(const Matrix& K, Matrix& L) const;

  std::shared_ptr<MeanFunction> mean_;
  std::shared_ptr<CovarianceFunction> cov_;
  double noise_;
  bool conditioned_ = false;
  bool degraded_ = false;
  mutable double jitter_ = 0.0;

  Matrix X_;        // training inputs (permuted: origin rows last)
  Vector resid_;    // y - m
  Matrix L_;        // chol(K + (noise + jitter) I), training-time Gram
  Vector alpha_;    // (K + sigma I)^-1 resid
  double log_marginal_ = 0.0;
  std::shared_ptr<const PreparedCross> prepared_;

  // origin-sensitive kernels: head = non-origin rows, tail = origin rows
  Eigen::Index tail_ = 0;
  Matrix L_head_;
  Vector z_head_;  // L_head^-1 resid_head
};

inline void GpModel::factorize(const Matrix& K, Matrix& L) const {
  const Eigen::Index n = K.rows();
  double mean_diag = K.diagonal().mean();
  if (!(mean_diag > 0.0)) mean_diag = 1.0;
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 11; ++attempt) {
    Matrix Kj = K;
    Kj.diagonal().array() += noise_ + jitter;
    Eigen::LLT<Matrix> llt(Kj);
    if (llt.info() == Eigen::Success) {
      // LLT can "succeed" on a semidefinite matrix; insist on a positive
      // diagonal of the factor.
      Matrix Lc = llt.matrixL();
      if ((Lc.diagonal().array() > 0.0).all()) {
        L = std::move(Lc);
        jitter_ = jitter;
        return;
      }
    }
    jitter = jitter == 0.0 ? 1e-10 * mean_diag : jitter * 10.0;
  }
  std::ostringstream msg;
  msg << "Gram matrix not positive definite after jitter escalation up to "
      << jitter / 10.0 << " (n=" << n << ")";
  throw NumericalError(msg.str());
}

inline void GpModel::condition(const EvidenceSet& ev) {
  const Eigen::Index n = ev.size();
  conditioned_ = true;
  tail_ = 0;
  if (n == 0) {
    X_.resize(0, mean_->dim());
    resid_.resize(0);
    alpha_.resize(0);
    log_marginal_ = 0.0;
    prepared_.reset();
    return;
  }
  if (ev.dim() != mean_->dim())
    throw ConfigError("GpModel: evidence dimension mismatch");

  // Origin-sensitive kernels get origin rows permuted to the tail so the
  // non-origin block factorization can be reused per test point.
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  if (cov_->origin_special()) {
    std::stable_partition(order.begin(), order.end(), [&](Eigen::Index i) {
      return ev.inputs().row(i).norm() > 1e-12;
    });
    for (Eigen::Index i = 0; i < n; ++i)
      if (ev.inputs().row(order[i]).norm() <= 1e-12) ++tail_;
  }

  X_.resize(n, ev.dim());
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X_.row(i) = ev.inputs().row(order[i]);
    y[i] = ev.output(order[i]);
  }

  Vector m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = mean_->value(X_.row(i).transpose());
  resid_ = y - m;

  Matrix K;
  cov_->gram(X_, K, nullptr);
  factorize(K, L_);
  alpha_ = L_.triangularView<Eigen::Lower>().solve(resid_);
  double quad = alpha_.squaredNorm();
  log_marginal_ = -0.5 * quad -
                  L_.diagonal().array().log().sum() -
                  0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);

  prepared_ = cov_->prepare(X_);

  if (tail_ > 0) {
    const Eigen::Index head = n - tail_;
    Matrix K_head = K.topLeftCorner(head, head);
    factorize(K_head, L_head_);
    z_head_ = L_head_.triangularView<Eigen::Lower>().solve(resid_.head(head));
  }
}

inline PosteriorPredictive GpModel::predict(const Vector& x) const {
  if (!conditioned_) throw ConfigError("GpModel: predict before condition");
  const Eigen::Index n = X_.rows();
  double prior_var = cov_->variance_at(x);
  if (n == 0) return {mean_->value(x), prior_var};

  if (tail_ == 0) {
    Vector c;
    prepared_->cross(x, c, nullptr, nullptr);
    Vector v = L_.triangularView<Eigen::Lower>().solve(c);
    double var = prior_var - v.squaredNorm();
    return {mean_->value(x) + c.dot(alpha_), std::max(var, 0.0)};
  }

  // The origin's covariance row depends on the test point; rebuild the tail
  // block of the factor and fall back to block Cholesky.
  const Eigen::Index head = n - tail_;
  Matrix K_cross(head, tail_);
  for (Eigen::Index t = 0; t < tail_; ++t)
    for (Eigen::Index i = 0; i < head; ++i)
      K_cross(i, t) = cov_->eval_origin(X_.row(i).transpose(), x);
  Matrix K_tail(tail_, tail_);
  for (Eigen::Index t = 0; t < tail_; ++t)
    for (Eigen::Index s = 0; s < tail_; ++s)
      K_tail(t, s) = cov_->eval(X_.row(head + t).transpose(),
                                X_.row(head + s).transpose());
  K_tail.diagonal().array() += noise_ + jitter_;

  Matrix W = L_head_.triangularView<Eigen::Lower>().solve(K_cross);
  Matrix S = K_tail - W.transpose() * W;
  Eigen::LLT<Matrix> llt_S(S);
  if (llt_S.info() != Eigen::Success) {
    S.diagonal().array() += 1e-10 * std::max(S.trace(), 1.0);
    llt_S.compute(S);
    if (llt_S.info() != Eigen::Success)
      throw NumericalError(
          "origin block Schur complement not positive definite");
  }
  Matrix L_S = llt_S.matrixL();

  Vector c;
  prepared_->cross(x, c, nullptr, nullptr);
  Vector v_head = L_head_.triangularView<Eigen::Lower>().solve(c.head(head));
  Vector v_tail = L_S.triangularView<Eigen::Lower>().solve(
      c.tail(tail_) - W.transpose() * v_head);
  Vector z_tail = L_S.triangularView<Eigen::Lower>().solve(
      resid_.tail(tail_) - W.transpose() * z_head_);

  double mean = mean_->value(x) + v_head.dot(z_head_) + v_tail.dot(z_tail);
  double var = prior_var - v_head.squaredNorm() - v_tail.squaredNorm();
  return {mean, std::max(var, 0.0)};
}

inline void GpModel::predict_with_grad(const Vector& x,
                                       PosteriorPredictive& out,
                                       Vector& dmean_dx,
                                       Vector& dvar_dx) const {
  if (!conditioned_) throw ConfigError("GpModel: predict before condition");
  if (tail_ > 0 || !cov_->has_x_grad())
    throw ConfigError("GpModel: analytic input gradients unavailable");
  const Eigen::Index n = X_.rows();
  if (n == 0) {
    out = {mean_->value(x), cov_->variance_at(x)};
    dmean_dx = mean_->x_grad(x);
    dvar_dx = Vector::Zero(x.size());
    return;
  }
  Vector c, dprior;
  Matrix Jc;
  prepared_->cross(x, c, &Jc, &dprior);
  Vector v = L_.triangularView<Eigen::Lower>().solve(c);
  Vector kinv_c = v;
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(kinv_c);
  out.mean = mean_->value(x) + c.dot(alpha_);
  out.variance = std::max(cov_->variance_at(x) - v.squaredNorm(), 0.0);
  dmean_dx = mean_->x_grad(x) + Jc.transpose() * alpha_;
  dvar_dx = dprior - 2.0 * (Jc.transpose() * kinv_c);
}

inline void GpModel::predict_batch(const Matrix& Xtest, Vector& means,
                                   Vector& vars) const {
  const Eigen::Index m = Xtest.rows();
  means.resize(m);
  vars.resize(m);
  if (tail_ > 0 || X_.rows() == 0) {
    for (Eigen::Index i = 0; i < m; ++i) {
      auto p = predict(Xtest.row(i).transpose());
      means[i] = p.mean;
      vars[i] = p.variance;
    }
    return;
  }
  const Eigen::Index n = X_.rows();
  Matrix C(n, m);
  Vector c;
  for (Eigen::Index i = 0; i < m; ++i) {
    prepared_->cross(Xtest.row(i).transpose(), c, nullptr, nullptr);
    C.col(i) = c;
  }
  Matrix V = L_.triangularView<Eigen::Lower>().solve(C);
  for (Eigen::Index i = 0; i < m; ++i) {
    Vector x = Xtest.row(i).transpose();
    means[i] = mean_->value(x) + C.col(i).dot(alpha_);
    vars[i] = std::max(cov_->variance_at(x) - V.col(i).squaredNorm(), 0.0);
  }
}

inline double GpModel::loo_log_predictive() const {
  if (!conditioned_ || X_.rows() < 3)
    throw ConfigError("loo_log_predictive: needs >= 3 conditioned points");
  const Eigen::Index n = X_.rows();
  Matrix Kinv = Matrix::Identity(n, n);
  L_.triangularView<Eigen::Lower>().solveInPlace(Kinv);
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double var_i = 1.0 / Kinv(i, i);
    double err_i = alpha_[i] * var_i;  // y_i - loo mean
    acc += -0.5 * std::log(2.0 * M_PI * var_i) - 0.5 * err_i * err_i / var_i;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Penalized log marginal likelihood and its gradient in the unconstrained
// hyperparameter coordinates of `binding`.
// ---------------------------------------------------------------------------

struct LogMarginal {
  double value = 0.0;
  Vector grad;  // w.r.t. unconstrained active parameters
};

inline LogMarginal log_marginal_likelihood(const ParamBinding& binding,
                                           double noise,
                                           const EvidenceSet& ev,
                                           bool include_priors = true,
                                           bool with_grad = true) {
  MeanFunction& mean = binding.mean();
  CovarianceFunction& cov = binding.cov();
  const Eigen::Index n = ev.size();
  if (n == 0)
    throw ConfigError("log_marginal_likelihood: evidence must be non-empty");
  const Matrix& X = ev.inputs();

  Vector m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = mean.value(X.row(i).transpose());
  Vector resid = ev.outputs() - m;

  Matrix K;
  std::vector<Matrix> dK;
  cov.gram(X, K, with_grad ? &dK : nullptr);

  // same jitter policy as conditioning
  double mean_diag = K.diagonal().mean();
  if (!(mean_diag > 0.0)) mean_diag = 1.0;
  double jitter = 0.0;
  Eigen::LLT<Matrix> llt;
  for (int attempt = 0;; ++attempt) {
    Matrix Kj = K;
    Kj.diagonal().array() += noise + jitter;
    llt.compute(Kj);
    if (llt.info() == Eigen::Success &&
        (Matrix(llt.matrixL()).diagonal().array() > 0.0).all())
      break;
    if (attempt > 11) {
      std::ostringstream msg;
      msg << "log_marginal_likelihood: Gram not positive definite, jitter "
          << jitter;
      throw NumericalError(msg.str());
    }
    jitter = jitter == 0.0 ? 1e-10 * mean_diag : jitter * 10.0;
  }
  Matrix L = llt.matrixL();
  Vector alpha = L.triangularView<Eigen::Lower>().solve(resid);
  double quad = alpha.squaredNorm();
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);

  LogMarginal out;
  out.value = -0.5 * quad - L.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  if (include_priors) out.value += binding.log_prior();
  if (!with_grad) return out;

  // dL/dtheta = 0.5 tr((alpha alpha' - K^-1) dK/dtheta) for covariance
  // parameters, (dm/dtheta)' alpha for mean parameters.
  Matrix A = Matrix::Identity(n, n);
  llt.solveInPlace(A);
  A = (alpha * alpha.transpose() - A).eval();

  const int n_mean = mean.n_params();
  Vector full(n_mean + cov.n_params());
  std::vector<double> mg(n_mean);
  full.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    mean.param_grad(X.row(i).transpose(), mg.data());
    for (int p = 0; p < n_mean; ++p) full[p] += mg[p] * alpha[i];
  }
  for (int p = 0; p < cov.n_params(); ++p)
    full[n_mean + p] = 0.5 * A.cwiseProduct(dK[p]).sum();

  out.grad.resize(binding.size());
  Vector prior_grad =
      include_priors ? binding.log_prior_grad() : Vector::Zero(binding.size());
  Vector jac = binding.jacobians();
  for (int k = 0; k < binding.size(); ++k)
    out.grad[k] = (full[binding.full_index(k)] + prior_grad[k]) * jac[k];
  return out;
}

/// Convenience overload building a temporary binding.
inline LogMarginal log_marginal_likelihood(MeanFunction& mean,
                                           CovarianceFunction& cov,
                                           double noise, const EvidenceSet& ev,
                                           bool include_priors = true) {
  ParamBinding binding(mean, cov);
  return log_marginal_likelihood(binding, noise, ev, include_priors);
}

}  // namespace nsbo
