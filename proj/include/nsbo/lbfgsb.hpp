#pragma once

#include "nsbo/common.hpp"

#include <deque>
#include <functional>

namespace nsbo {

struct LbfgsbOptions {
  int max_iters = 1000;
  double pg_tol = 1e-5;     // projected-gradient infinity norm
  double f_tol = 1e-10;     // relative objective decrease
  int history = 10;
  double armijo_c1 = 1e-4;
  double min_step = 1e-16;
};

struct LbfgsbResult {
  Vector x;
  double f = kInf;
  int iters = 0;
  bool converged = false;
  /// True when no finite objective value was ever obtained.
  bool failed = false;
};

/// Box-constrained quasi-Newton minimizer: limited-memory BFGS directions
/// with a projected backtracking (Armijo) line search. The objective callback
/// returns f and fills the gradient.
inline LbfgsbResult lbfgsb_minimize(
    const std::function<double(const Vector&, Vector&)>& fg, Vector x0,
    const Vector& lower, const Vector& upper, const LbfgsbOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  auto project = [&](Vector v) {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = clamp(v[i], lower[i], upper[i]);
    return v;
  };

  LbfgsbResult res;
  Vector x = project(std::move(x0));
  Vector g(n);
  double f = fg(x, g);
  if (!std::isfinite(f)) {
    res.x = x;
    res.f = f;
    res.failed = true;
    return res;
  }

  // projected gradient: zero out components pushing through an active bound
  auto proj_grad_norm = [&](const Vector& xx, const Vector& gg) {
    double norm = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double gi = gg[i];
      if (xx[i] <= lower[i] && gi > 0.0) gi = 0.0;
      if (xx[i] >= upper[i] && gi < 0.0) gi = 0.0;
      norm = std::max(norm, std::abs(gi));
    }
    return norm;
  };

  std::deque<std::pair<Vector, Vector>> memory;  // (s, y)
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    if (proj_grad_norm(x, g) <= opts.pg_tol) {
      res.converged = true;
      break;
    }

    // two-loop recursion
    Vector q = g;
    std::vector<double> alphas(memory.size());
    for (Eigen::Index k = static_cast<Eigen::Index>(memory.size()) - 1; k >= 0;
         --k) {
      const auto& [s, y] = memory[k];
      double rho = 1.0 / y.dot(s);
      alphas[k] = rho * s.dot(q);
      q -= alphas[k] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, y] = memory[k];
      double rho = 1.0 / y.dot(s);
      q += (alphas[k] - rho * y.dot(q)) * s;
    }
    Vector dir = -q;
    if (dir.dot(g) >= 0.0) {  // not a descent direction, reset
      memory.clear();
      dir = -g;
    }

    // backtracking with quadratic interpolation over the projected path
    double step = 1.0;
    Vector x_new;
    double f_new = kInf;
    Vector g_new(n);
    bool accepted = false;
    while (step >= opts.min_step) {
      x_new = project(x + step * dir);
      Vector dx = x_new - x;
      if (dx.squaredNorm() == 0.0) break;  // fully blocked by the box
      double pred = g.dot(dx);
      if (pred < 0.0) {
        f_new = fg(x_new, g_new);
        if (std::isfinite(f_new) && f_new <= f + opts.armijo_c1 * pred) {
          accepted = true;
          break;
        }
        if (std::isfinite(f_new)) {
          // minimizer of the quadratic through f, pred and f_new
          double denom = 2.0 * (f_new - f - pred);
          double trial = denom > 0.0 ? -pred * step / denom : 0.5 * step;
          step = clamp(trial, 0.1 * step, 0.5 * step);
          continue;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      // a stale curvature metric can defeat the line search far from a
      // stationary point; drop the memory and retry along -g before
      // declaring convergence
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      res.converged = proj_grad_norm(x, g) <= 1e2 * opts.pg_tol;
      break;
    }

    Vector s = x_new - x;
    Vector yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      memory.emplace_back(std::move(s), std::move(yv));
      if (static_cast<int>(memory.size()) > opts.history) memory.pop_front();
    }

    double decrease = f - f_new;
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    if (decrease <= opts.f_tol * (std::abs(f) + 1.0)) {
      ++iter;
      res.converged = true;
      break;
    }
  }

  res.x = std::move(x);
  res.f = f;
  res.iters = iter;
  return res;
}

}  // namespace nsbo
