#pragma once

#include "nsbo/gp.hpp"
#include "nsbo/lbfgsb.hpp"
#include "nsbo/sobol.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

namespace nsbo {

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

/// EI(x) = sigma tau(z), tau(z) = z Phi(z) + N(z; 0, 1),
/// z = (f_best - m) / sigma; collapses to max(0, f_best - m) when sigma = 0.
inline double expected_improvement(const PosteriorPredictive& post,
                                   double f_best) {
  double sigma = std::sqrt(std::max(post.variance, 0.0));
  if (sigma <= 0.0) return std::max(0.0, f_best - post.mean);
  double z = (f_best - post.mean) / sigma;
  double tau = z * normal_cdf(z) + normal_pdf(z);
  return sigma * std::max(tau, 0.0);
}

/// Lower confidence bound m - beta sigma; a value to minimize.
inline double lcb(const PosteriorPredictive& post, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("lcb: beta must be positive");
  return post.mean - beta * std::sqrt(std::max(post.variance, 0.0));
}

enum class AcquisitionKind { EI, LCB, GWEI, GKEI };

/// Settings of the acquisition step: utility kind, LCB confidence factor,
/// the belief prior of the weighted variants, and candidate counts.
struct AcquisitionConfig {
  AcquisitionKind kind = AcquisitionKind::EI;
  std::optional<double> beta;  // LCB only; no endorsed default
  Vector prior_location;       // GWEI/GKEI location
  double prior_stddev = 0.5;   // 25% of the [-1, 1] domain
  double zeta = 1.0;           // prior decay
  int step = 1;                // acquisition index n >= 1
  int n_sobol = 20000;
  int n_heuristic = 10;
  int n_starts = 20;
  double perturb_std = 0.04;   // 0.02 x domain width
};

/// Belief weight pi(x)^(zeta/n). GWEI uses the normalized Gaussian density
/// (known to underflow in high dimensions); GKEI drops the normalizing
/// constant so the factor is 1 at the prior location.
inline double belief_log_weight(const AcquisitionConfig& cfg,
                                const Vector& x) {
  double q = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    double t = (x[d] - cfg.prior_location[d]) / cfg.prior_stddev;
    q += t * t;
  }
  double logpi = -0.5 * q;
  if (cfg.kind == AcquisitionKind::GWEI)
    logpi -= static_cast<double>(x.size()) *
             std::log(cfg.prior_stddev * std::sqrt(2.0 * M_PI));
  return logpi * cfg.zeta / static_cast<double>(cfg.step);
}

inline double weighted_ei(const PosteriorPredictive& post, double f_best,
                          const AcquisitionConfig& cfg, const Vector& x) {
  if (cfg.step < 1) throw ConfigError("weighted_ei: step must be >= 1");
  return expected_improvement(post, f_best) *
         std::exp(belief_log_weight(cfg, x));
}

/// Utility in "larger is better" orientation (LCB is negated).
inline double acquisition_value(const AcquisitionConfig& cfg,
                                const PosteriorPredictive& post, double f_best,
                                const Vector& x) {
  switch (cfg.kind) {
    case AcquisitionKind::EI: return expected_improvement(post, f_best);
    case AcquisitionKind::LCB:
      if (!cfg.beta) throw ConfigError("LCB requires a user-supplied beta");
      return -lcb(post, *cfg.beta);
    case AcquisitionKind::GWEI:
    case AcquisitionKind::GKEI: return weighted_ei(post, f_best, cfg, x);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Trust region (TuRBO-1 style schedule).
// ---------------------------------------------------------------------------

struct TrustRegionConfig {
  double min_side = 0.015625;  // 2^-7 x domain width
  double max_side = 1.6;
  double init_side = 0.8;
  int success_tolerance = 3;
  int failure_tolerance = 10;
};

struct TrustRegionState {
  Vector center;
  double side = 0.8;
  int success_count = 0;
  int failure_count = 0;
};

/// Consecutive successes double the side length, consecutive failures halve
/// it (clamped); any switch resets the opposing counter. The center follows
/// the incumbent.
inline TrustRegionState trust_region_update(TrustRegionState state,
                                            bool observed_improvement,
                                            const TrustRegionConfig& cfg,
                                            const Vector& incumbent) {
  if (observed_improvement) {
    ++state.success_count;
    state.failure_count = 0;
    if (state.success_count >= cfg.success_tolerance) {
      state.side = std::min(2.0 * state.side, cfg.max_side);
      state.success_count = 0;
      state.failure_count = 0;
    }
  } else {
    ++state.failure_count;
    state.success_count = 0;
    if (state.failure_count >= cfg.failure_tolerance) {
      state.side = std::max(0.5 * state.side, cfg.min_side);
      state.success_count = 0;
      state.failure_count = 0;
    }
  }
  state.center = incumbent;
  return state;
}

struct Box {
  Vector lo, hi;
};

inline Box domain_box(int dim) {
  return {Vector::Constant(dim, -1.0), Vector::Constant(dim, 1.0)};
}

/// Axis-aligned trust-region box, intersected with the domain.
inline Box trust_region_box(const TrustRegionState& state) {
  const Eigen::Index dim = state.center.size();
  Box box;
  box.lo.resize(dim);
  box.hi.resize(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    box.lo[d] = std::max(state.center[d] - 0.5 * state.side, -1.0);
    box.hi[d] = std::min(state.center[d] + 0.5 * state.side, 1.0);
  }
  return box;
}

// ---------------------------------------------------------------------------
// Candidate generation: a scrambled Sobol cloud plus small Gaussian
// perturbations of the incumbent, all inside the active box.
// ---------------------------------------------------------------------------

inline Matrix generate_candidates(std::uint64_t seed, const Vector& incumbent,
                                  int dim, const std::optional<Box>& trust,
                                  const AcquisitionConfig& cfg) {
  Box box = trust ? *trust : domain_box(dim);
  const int total = cfg.n_heuristic + cfg.n_sobol;
  Matrix out(total, dim);

  Rng rng(hash_combine(seed, 0x70u));
  for (int i = 0; i < cfg.n_heuristic; ++i)
    for (int d = 0; d < dim; ++d)
      out(i, d) = clamp(incumbent[d] + cfg.perturb_std * rng.normal(),
                        box.lo[d], box.hi[d]);

  SobolSequence sobol(dim, hash_combine(seed, 0x50b01u), /*scramble=*/true);
  for (int i = 0; i < cfg.n_sobol; ++i) {
    Vector u = sobol.point(i);
    for (int d = 0; d < dim; ++d)
      out(cfg.n_heuristic + i, d) =
          box.lo[d] + u[d] * (box.hi[d] - box.lo[d]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-start gradient-based acquisition maximization.
// ---------------------------------------------------------------------------

struct AcquisitionResult {
  Vector x;
  double value = -kInf;
  /// Every gradient run failed; the best raw candidate was returned.
  bool fallback_raw = false;
};

namespace detail {

/// Gradient of the acquisition w.r.t. x from posterior gradients.
inline void acquisition_grad(const AcquisitionConfig& cfg,
                             const PosteriorPredictive& post, double f_best,
                             const Vector& x, const Vector& dmean,
                             const Vector& dvar, Vector& grad) {
  const Eigen::Index D = x.size();
  double sigma = std::sqrt(std::max(post.variance, 0.0));
  if (cfg.kind == AcquisitionKind::LCB) {
    grad = -dmean;
    if (sigma > 1e-15) grad += (*cfg.beta / (2.0 * sigma)) * dvar;
    return;
  }
  Vector dei(D);
  if (sigma <= 1e-15) {
    dei = post.mean < f_best ? Vector(-dmean) : Vector(Vector::Zero(D));
  } else {
    double z = (f_best - post.mean) / sigma;
    // dEI = -Phi(z) dm + N(z) dsigma
    dei = -normal_cdf(z) * dmean + normal_pdf(z) / (2.0 * sigma) * dvar;
  }
  if (cfg.kind == AcquisitionKind::EI) {
    grad = dei;
    return;
  }
  double w = std::exp(belief_log_weight(cfg, x));
  double ei = expected_improvement(post, f_best);
  double decay = cfg.zeta / static_cast<double>(cfg.step);
  Vector dlogpi(D);
  for (Eigen::Index d = 0; d < D; ++d)
    dlogpi[d] = -(x[d] - cfg.prior_location[d]) /
                (cfg.prior_stddev * cfg.prior_stddev);
  grad = w * dei + ei * w * decay * dlogpi;
}

}  // namespace detail

/// Scores all candidates, refines the best n_starts of them with bounded
/// gradient ascent, and returns the overall argmax. Never returns a value
/// below the best raw candidate; ties resolve to the lowest candidate index.
inline AcquisitionResult maximize_acquisition(const GpModel& model,
                                              double f_best,
                                              const AcquisitionConfig& cfg,
                                              const Matrix& candidates,
                                              const std::optional<Box>& trust =
                                                  {}) {
  const Eigen::Index m = candidates.rows();
  const int D = static_cast<int>(candidates.cols());
  if (m == 0) throw ConfigError("maximize_acquisition: no candidates");
  Box box = trust ? *trust : domain_box(D);

  Vector means, vars;
  model.predict_batch(candidates, means, vars);
  Vector scores(m);
  for (Eigen::Index i = 0; i < m; ++i)
    scores[i] = acquisition_value(cfg, {means[i], vars[i]}, f_best,
                                  candidates.row(i).transpose());

  Eigen::Index best_raw = 0;
  for (Eigen::Index i = 1; i < m; ++i)
    if (scores[i] > scores[best_raw]) best_raw = i;

  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  const int n_starts = std::min<int>(cfg.n_starts, static_cast<int>(m));
  std::partial_sort(order.begin(), order.begin() + n_starts, order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });

  const bool analytic =
      model.covariance().has_x_grad() && model.train_size() > 0;
  auto objective = [&](const Vector& x, Vector& grad) -> double {
    if (analytic) {
      PosteriorPredictive post;
      Vector dmean, dvar;
      model.predict_with_grad(x, post, dmean, dvar);
      detail::acquisition_grad(cfg, post, f_best, x, dmean, dvar, grad);
      grad = -grad;
      return -acquisition_value(cfg, post, f_best, x);
    }
    // central differences for kernels without input gradients
    double h = 1e-6;
    for (int d = 0; d < D; ++d) {
      Vector xp = x, xm = x;
      xp[d] = std::min(x[d] + h, box.hi[d]);
      xm[d] = std::max(x[d] - h, box.lo[d]);
      double fp = acquisition_value(
          cfg, model.predict(xp), f_best, xp);
      double fm = acquisition_value(
          cfg, model.predict(xm), f_best, xm);
      grad[d] = xp[d] > xm[d] ? -(fp - fm) / (xp[d] - xm[d]) : 0.0;
    }
    return -acquisition_value(cfg, model.predict(x), f_best, x);
  };

  AcquisitionResult res;
  res.x = candidates.row(best_raw).transpose();
  res.value = scores[best_raw];

  LbfgsbOptions lopts;
  lopts.max_iters = 100;
  lopts.pg_tol = 1e-8;
  bool any_refined = false;
  for (int s = 0; s < n_starts; ++s) {
    Vector x0 = candidates.row(order[s]).transpose();
    LbfgsbResult r = lbfgsb_minimize(objective, x0, box.lo, box.hi, lopts);
    if (r.failed) continue;
    any_refined = true;
    if (-r.f > res.value) {
      res.value = -r.f;
      res.x = r.x;
    }
  }
  res.fallback_raw = !any_refined;
  return res;
}

}  // namespace nsbo
