#pragma once

#include "nsbo/common.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <variant>

namespace nsbo {

// ---------------------------------------------------------------------------
// Smooth monotone reparameterizations between an unconstrained coordinate z
// and a constrained hyperparameter value.
// ---------------------------------------------------------------------------

enum class Transform {
  Identity,
  Softplus,  // (0, inf)
  Log,       // (0, inf), used by cylindrical-specific hyperparameters
  Logistic,  // (0, 1), used by stationarity ratios
};

inline double transform_apply(Transform t, double z) {
  switch (t) {
    case Transform::Identity: return z;
    case Transform::Softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
    case Transform::Log: return std::exp(z);
    case Transform::Logistic: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

inline double transform_invert(Transform t, double value) {
  switch (t) {
    case Transform::Identity: return value;
    case Transform::Softplus:
      return value > 30.0 ? value : std::log(std::expm1(value));
    case Transform::Log: return std::log(value);
    case Transform::Logistic: return std::log(value / (1.0 - value));
  }
  return value;
}

/// d value / d z.
inline double transform_jacobian(Transform t, double z) {
  switch (t) {
    case Transform::Identity: return 1.0;
    case Transform::Softplus: return 1.0 / (1.0 + std::exp(-z));
    case Transform::Log: return std::exp(z);
    case Transform::Logistic: {
      double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Hyperprior densities. log_density is evaluated on the constrained value
// and is -inf outside the support, so a rejected step never turns into a
// crash during optimization.
// ---------------------------------------------------------------------------

struct Uniform {
  double lo, hi;
};

/// p(r; a, b) = a b r^{a-1} (1 - r^a)^{b-1} on (0, 1).
struct Kumaraswamy {
  double a, b;
};

/// Half-Cauchy with scale tau on [0, inf).
struct HalfCauchy {
  double tau;
};

/// Half-Cauchy with scale tau placed on value^-2. Sparsity-inducing prior for
/// lengthscales: short lengthscales are only kept when the data insist.
struct HalfCauchyInvSq {
  double tau;
};

/// HS+(scale). No closed form; the log-density penalty uses the midpoint of
/// the standard tight integral bounds, which is accurate enough for ranking
/// penalized likelihoods.
struct HalfHorseshoe {
  double scale;
};

struct LogNormal {
  double mu, sigma;
};

/// Spike at `spike`, slab uniform on the log scale over [lo, hi]. The spike
/// branch is handled structurally during fitting (parameter frozen); the
/// density below is the slab part.
struct SpikeSlabLog {
  double spike, lo, hi;
};

struct DiracDelta {
  double value;
};

using Hyperprior = std::variant<Uniform, Kumaraswamy, HalfCauchy,
                                HalfCauchyInvSq, HalfHorseshoe, LogNormal,
                                SpikeSlabLog, DiracDelta>;

namespace detail {
// Midpoint of the Carvalho-Polson-Scott bounds for the half-horseshoe with
// unit scale: p(x) in (K/2 log(1+4/x^2), K log(1+2/x^2)), K = (2 pi^3)^-1/2,
// doubled onto the positive half-line.
inline double half_horseshoe_density(double x) {
  constexpr double kK = 0.12698727305748626;  // 1/sqrt(2 pi^3)
  double x2 = x * x;
  double lower = kK * std::log1p(4.0 / x2);  // 2 * K/2
  double upper = 2.0 * kK * std::log1p(2.0 / x2);
  return 0.5 * (lower + upper);
}

inline double half_horseshoe_density_grad(double x) {
  constexpr double kK = 0.12698727305748626;
  auto dlog1p = [x](double c) {  // d/dx log(1 + c/x^2)
    return -2.0 * c / (x * x * x + c * x);
  };
  return 0.5 * (kK * dlog1p(4.0) + 2.0 * kK * dlog1p(2.0));
}
}  // namespace detail

inline double log_density(const Hyperprior& prior, double x) {
  return std::visit(
      [x](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          if (x < p.lo || x > p.hi) return -kInf;
          return -std::log(p.hi - p.lo);
        } else if constexpr (std::is_same_v<T, Kumaraswamy>) {
          if (x <= 0.0 || x >= 1.0) return -kInf;
          double xa = std::pow(x, p.a);
          return std::log(p.a * p.b) + (p.a - 1.0) * std::log(x) +
                 (p.b - 1.0) * std::log1p(-xa);
        } else if constexpr (std::is_same_v<T, HalfCauchy>) {
          if (x < 0.0) return -kInf;
          double u = x / p.tau;
          return std::log(2.0 / (M_PI * p.tau)) - std::log1p(u * u);
        } else if constexpr (std::is_same_v<T, HalfCauchyInvSq>) {
          if (x <= 0.0) return -kInf;
          double u = 1.0 / (x * x);
          double v = u / p.tau;
          return std::log(2.0 / (M_PI * p.tau)) - std::log1p(v * v);
        } else if constexpr (std::is_same_v<T, HalfHorseshoe>) {
          if (x <= 0.0) return -kInf;
          return std::log(detail::half_horseshoe_density(x / p.scale) /
                          p.scale);
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          if (x <= 0.0) return -kInf;
          double d = (std::log(x) - p.mu) / p.sigma;
          return -std::log(x * p.sigma) - 0.5 * std::log(2.0 * M_PI) -
                 0.5 * d * d;
        } else if constexpr (std::is_same_v<T, SpikeSlabLog>) {
          if (x < p.lo || x > p.hi) return -kInf;
          return -std::log(x) - std::log(std::log(p.hi / p.lo));
        } else {  // DiracDelta
          return x == p.value ? 0.0 : -kInf;
        }
      },
      prior);
}

/// d/dx log p(x), finite only in the interior of the support.
inline double log_density_grad(const Hyperprior& prior, double x) {
  return std::visit(
      [x](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, Kumaraswamy>) {
          double xa = std::pow(x, p.a);
          return (p.a - 1.0) / x -
                 (p.b - 1.0) * p.a * xa / (x * (1.0 - xa));
        } else if constexpr (std::is_same_v<T, HalfCauchy>) {
          return -2.0 * x / (p.tau * p.tau + x * x);
        } else if constexpr (std::is_same_v<T, HalfCauchyInvSq>) {
          double u = 1.0 / (x * x);
          double dlp_du = -2.0 * u / (p.tau * p.tau + u * u);
          return dlp_du * (-2.0 * u / x);
        } else if constexpr (std::is_same_v<T, HalfHorseshoe>) {
          double s = x / p.scale;
          return detail::half_horseshoe_density_grad(s) /
                 (detail::half_horseshoe_density(s) * p.scale);
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          double d = (std::log(x) - p.mu) / p.sigma;
          return -(1.0 + d / p.sigma) / x;
        } else if constexpr (std::is_same_v<T, SpikeSlabLog>) {
          return -1.0 / x;
        } else {  // DiracDelta
          return 0.0;
        }
      },
      prior);
}

inline double sample(const Hyperprior& prior, Rng& rng) {
  return std::visit(
      [&rng](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          return rng.uniform(p.lo, p.hi);
        } else if constexpr (std::is_same_v<T, Kumaraswamy>) {
          double u = rng.uniform();
          return std::pow(1.0 - std::pow(1.0 - u, 1.0 / p.b), 1.0 / p.a);
        } else if constexpr (std::is_same_v<T, HalfCauchy>) {
          return p.tau * std::tan(0.5 * M_PI * rng.uniform());
        } else if constexpr (std::is_same_v<T, HalfCauchyInvSq>) {
          double u = p.tau * std::tan(0.5 * M_PI * rng.uniform());
          return 1.0 / std::sqrt(std::max(u, 1e-12));
        } else if constexpr (std::is_same_v<T, HalfHorseshoe>) {
          double lambda = std::tan(0.5 * M_PI * rng.uniform());
          return std::abs(p.scale * lambda * rng.normal());
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          return std::exp(p.mu + p.sigma * rng.normal());
        } else if constexpr (std::is_same_v<T, SpikeSlabLog>) {
          if (rng.uniform() < 0.5) return p.spike;
          return std::exp(rng.uniform(std::log(p.lo), std::log(p.hi)));
        } else {  // DiracDelta
          return p.value;
        }
      },
      prior);
}

/// Constrained-space box implied by the support (used as optimizer bounds).
inline std::pair<double, double> support(const Hyperprior& prior) {
  return std::visit(
      [](const auto& p) -> std::pair<double, double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          return {p.lo, p.hi};
        } else if constexpr (std::is_same_v<T, Kumaraswamy>) {
          return {1e-9, 1.0 - 1e-9};
        } else if constexpr (std::is_same_v<T, SpikeSlabLog>) {
          return {p.lo, p.hi};
        } else if constexpr (std::is_same_v<T, DiracDelta>) {
          return {p.value, p.value};
        } else {
          return {0.0, kInf};
        }
      },
      prior);
}

inline bool is_dirac(const Hyperprior& prior) {
  return std::holds_alternative<DiracDelta>(prior);
}

// ---------------------------------------------------------------------------
// Descriptor for one hyperparameter: its reparameterization, hyperprior and
// optimizer box in constrained space. DiracDelta freezes the parameter and
// removes it from the optimization vector.
// ---------------------------------------------------------------------------

struct ParamSpec {
  std::string name;
  Transform transform = Transform::Softplus;
  Hyperprior prior = Uniform{1e-6, 1e6};
  double lower = 0.0;   // constrained-space bounds (intersection with prior
  double upper = kInf;  // support is taken by the fitting layer)
  double init = 1.0;
};

}  // namespace nsbo
