#pragma once

#include "nsbo/gp.hpp"
#include "nsbo/lbfgsb.hpp"

#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace nsbo {

struct FitOptions {
  int restarts = 5;     // 1 warm/default start + (restarts - 1) prior draws
  int max_iters = 1000; // per-restart optimizer cap
  double pg_tol = 1e-5;
};

/// Previous-step optimum used to warm-start the first restart.
struct WarmStart {
  Vector mean_params;
  Vector cov_params;
};

struct FitResult {
  std::shared_ptr<MeanFunction> mean;
  std::shared_ptr<CovarianceFunction> cov;
  double penalized_nll = kInf;
  /// Every restart failed numerically; the best feasible initialization was
  /// returned instead of an optimized point.
  bool degraded = false;
};

namespace detail {

struct RestartOutcome {
  Vector z;
  double f = kInf;
  bool failed = true;
};

inline RestartOutcome run_restart(ParamBinding& binding, double noise,
                                  const EvidenceSet& ev, const Vector& z0,
                                  const Vector& lo, const Vector& hi,
                                  const FitOptions& opts) {
  auto objective = [&](const Vector& z, Vector& grad) -> double {
    binding.set_unconstrained(z);
    grad.setZero(z.size());
    try {
      LogMarginal lm = log_marginal_likelihood(binding, noise, ev, true, true);
      grad = -lm.grad;
      return -lm.value;
    } catch (const NumericalError&) {
      return kInf;
    }
  };
  LbfgsbOptions lopts;
  lopts.max_iters = opts.max_iters;
  lopts.pg_tol = opts.pg_tol;
  LbfgsbResult r = lbfgsb_minimize(objective, z0, lo, hi, lopts);
  RestartOutcome out;
  out.z = r.x;
  out.f = r.f;
  out.failed = r.failed;
  return out;
}

}  // namespace detail

/// Empirical-Bayes hyperparameter fitting: minimizes the penalized negative
/// log marginal likelihood over the unconstrained reparameterized
/// coordinates, restarting from the previous optimum (or defaults) plus
/// hyperprior draws. Covariances with a spike-and-slab prior are fitted once
/// per branch and the better penalized likelihood wins.
inline FitResult fit_empirical_bayes(
    const MeanFunction& mean_template, const CovarianceFunction& cov_template,
    double noise, const EvidenceSet& ev, const FitOptions& opts, Rng& rng,
    const std::optional<WarmStart>& warm = {}) {
  if (ev.empty())
    throw ConfigError("fit_empirical_bayes: evidence must be non-empty");

  FitResult best;
  bool have_best = false;

  const int n_branches = cov_template.n_fit_branches();
  for (int branch = 0; branch < n_branches; ++branch) {
    auto mean = std::shared_ptr<MeanFunction>(mean_template.clone());
    auto cov = std::shared_ptr<CovarianceFunction>(cov_template.clone());
    cov->set_fit_branch(branch);
    mean->set_observed_range(ev.outputs().minCoeff(), ev.outputs().maxCoeff());
    ParamBinding binding(*mean, *cov);
    auto [lo, hi] = binding.bounds_unconstrained();

    auto clamp_z = [&](Vector z) {
      for (Eigen::Index i = 0; i < z.size(); ++i)
        z[i] = clamp(z[i], lo[i], hi[i]);
      return z;
    };

    // initializations: warm/defaults first, then hyperprior draws
    std::vector<Vector> inits;
    if (warm && warm->mean_params.size() == mean->n_params() &&
        warm->cov_params.size() == cov->n_params()) {
      mean->set_params(warm->mean_params);
      cov->set_params(warm->cov_params);
      binding.rebuild();  // re-freeze Dirac parameters
      inits.push_back(clamp_z(binding.to_unconstrained()));
    } else {
      Vector defaults(binding.size());
      for (int k = 0; k < binding.size(); ++k)
        defaults[k] = binding.spec(k).init;
      binding.set_values(defaults);
      inits.push_back(clamp_z(binding.to_unconstrained()));
    }
    for (int r = 1; r < opts.restarts; ++r) {
      binding.set_values(binding.sample_values(rng));
      inits.push_back(clamp_z(binding.to_unconstrained()));
    }

    detail::RestartOutcome branch_best;
    for (const Vector& z0 : inits) {
      detail::RestartOutcome out =
          detail::run_restart(binding, noise, ev, z0, lo, hi, opts);
      if (!out.failed && out.f < branch_best.f) branch_best = out;
    }

    bool branch_degraded = branch_best.failed;
    if (branch_degraded) {
      // all restarts failed: keep the best feasible initialization
      for (const Vector& z0 : inits) {
        binding.set_unconstrained(z0);
        double f = kInf;
        try {
          f = -log_marginal_likelihood(binding, noise, ev, true, false).value;
        } catch (const NumericalError&) {
        }
        if (f < branch_best.f) {
          branch_best.z = z0;
          branch_best.f = f;
          branch_best.failed = false;
        }
      }
      if (branch_best.failed) branch_best.z = inits.front();
    }

    binding.set_unconstrained(branch_best.z);
    if (!have_best || branch_best.f < best.penalized_nll) {
      best.mean = mean;
      best.cov = cov;
      best.penalized_nll = branch_best.f;
      best.degraded = branch_degraded;
      have_best = true;
    }
  }
  return best;
}

/// Fits the conditioned model for a fit result.
inline GpModel condition_fit(const FitResult& fit, double noise,
                             const EvidenceSet& ev) {
  GpModel model(fit.mean, fit.cov, noise);
  if (fit.degraded) model.mark_degraded();
  model.condition(ev);
  return model;
}

struct SaasSelection {
  FitResult fit;
  double tau = 1.0;
  std::vector<double> loo_scores;  // aligned with the tau list
};

/// SAAS model selection: one empirical-Bayes fit per global shrinkage tau
/// with a half-Cauchy hyperprior on the inverse squared lengthscales; the
/// model with the highest exact leave-one-out log predictive density wins,
/// ties broken toward weaker shrinkage (larger tau).
inline SaasSelection fit_saas_selection(
    const MeanFunction& mean_template, const CovarianceFunction& cov_template,
    double noise, const EvidenceSet& ev,
    const std::vector<double>& taus = {1.0, 1e-1, 1e-2, 1e-3},
    const FitOptions& opts = {}, Rng rng = Rng(0),
    const std::optional<WarmStart>& warm = {}) {
  if (ev.size() < 3)
    throw ConfigError(
        "fit_saas_selection: leave-one-out needs at least 3 points");
  if (taus.empty()) throw ConfigError("fit_saas_selection: empty tau list");

  SaasSelection sel;
  double best_loo = -kInf;
  // identical RNG stream per tau so equal models stay bitwise equal
  Rng base = rng.fork(0x5aa5);
  for (double tau : taus) {
    auto cov = std::shared_ptr<CovarianceFunction>(cov_template.clone());
    cov->set_lengthscale_prior(HalfCauchyInvSq{tau});
    Rng stream = base;
    FitResult fit =
        fit_empirical_bayes(mean_template, *cov, noise, ev, opts, stream, warm);
    GpModel model = condition_fit(fit, noise, ev);
    double loo = model.loo_log_predictive();
    sel.loo_scores.push_back(loo);
    if (loo > best_loo) {
      best_loo = loo;
      sel.fit = std::move(fit);
      sel.tau = tau;
    }
  }
  return sel;
}

}  // namespace nsbo
