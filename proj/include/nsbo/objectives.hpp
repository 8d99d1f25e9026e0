#pragma once

#include "nsbo/common.hpp"

#include <cctype>
#include <functional>
#include <optional>
#include <string>

namespace nsbo {

enum class ObjectiveFamily {
  QBranin,
  SQBranin,
  SSQBranin,
  Rosenbrock,
  S35Rosenbrock,
  S50Rosenbrock,
  S65Rosenbrock,
  Levy,
  StyblinskiTang,
  External,
};

/// log(y + offset) for non-negative observations; models are estimated on
/// this scale while performance metrics stay on the raw scale.
inline constexpr double kDefaultLogOffset = 1e-8;

inline double log_transform(double y, double offset = kDefaultLogOffset) {
  if (y < 0.0)
    throw std::invalid_argument("log_transform: negative observation");
  return std::log(y + offset);
}

namespace detail {

// original-coordinate formulas -----------------------------------------------

inline double qbranin_block(double x1, double x2) {
  double a = x2 - 5.1 / (4.0 * M_PI * M_PI) * x1 * x1 + 5.0 / M_PI * x1 - 6.0;
  return a * a + 10.0 * (1.0 - 1.0 / (8.0 * M_PI)) * std::cos(x1) + 10.0 +
         5.0 * x1 * x1;
}

/// Higher-dimensional QBranin by additive repetition over consecutive
/// coordinate pairs.
inline double qbranin_raw(const Vector& x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d + 1 < x.size(); d += 2)
    acc += qbranin_block(x[d], x[d + 1]);
  return acc;
}

inline double rosenbrock_raw(const Vector& x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d + 1 < x.size(); ++d) {
    double a = x[d + 1] - x[d] * x[d];
    double b = x[d] - 1.0;
    acc += 100.0 * a * a + b * b;
  }
  return acc;
}

inline double levy_raw(const Vector& x) {
  const Eigen::Index D = x.size();
  auto w = [&](Eigen::Index d) { return 1.0 + (x[d] - 1.0) / 4.0; };
  double s1 = std::sin(M_PI * w(0));
  double acc = s1 * s1;
  for (Eigen::Index d = 0; d + 1 < D; ++d) {
    double wd = w(d);
    double s = std::sin(M_PI * wd + 1.0);
    acc += (wd - 1.0) * (wd - 1.0) * (1.0 + 10.0 * s * s);
  }
  double wD = w(D - 1);
  double s2 = std::sin(2.0 * M_PI * wD);
  acc += (wD - 1.0) * (wD - 1.0) * (1.0 + s2 * s2);
  return acc;
}

inline double styblinski_tang_raw(const Vector& x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    double v = x[d];
    acc += v * v * v * v - 16.0 * v * v + 5.0 * v;
  }
  return 0.5 * acc;
}

/// Per-dimension Styblinski-Tang minimizer (root of 2x^3 - 16x + 5/2).
inline constexpr double kStybTangRoot = -2.9035340277711771;

struct FamilyInfo {
  ObjectiveFamily base;
  double orig_center, orig_half;  // affine map [-1,1] -> original domain
  double (*raw)(const Vector&);
};

inline FamilyInfo family_info(ObjectiveFamily base) {
  switch (base) {
    case ObjectiveFamily::QBranin:
      // [-5,10] x [0,15]: both coordinates have half-width 7.5
      return {base, kNaN, 7.5, &qbranin_raw};
    case ObjectiveFamily::Rosenbrock:
      return {base, 2.5, 7.5, &rosenbrock_raw};
    case ObjectiveFamily::Levy:
      return {base, 0.0, 10.0, &levy_raw};
    case ObjectiveFamily::StyblinskiTang:
      return {base, 0.0, 5.0, &styblinski_tang_raw};
    default:
      throw ConfigError("family_info: not a base family");
  }
}

/// Raw objective in transformed coordinates (before shift/normalization).
inline double raw_transformed(ObjectiveFamily base, const Vector& t) {
  FamilyInfo info = family_info(base);
  Vector orig(t.size());
  if (base == ObjectiveFamily::QBranin) {
    for (Eigen::Index d = 0; d < t.size(); ++d)
      orig[d] = (d % 2 == 0 ? 2.5 : 7.5) + 7.5 * t[d];
  } else {
    for (Eigen::Index d = 0; d < t.size(); ++d)
      orig[d] = info.orig_center + info.orig_half * t[d];
  }
  return info.raw(orig);
}

inline Vector base_minimizer(ObjectiveFamily base, int dim) {
  Vector m(dim);
  switch (base) {
    case ObjectiveFamily::QBranin:
      for (int d = 0; d < dim; ++d) m[d] = d % 2 == 0 ? -1.0 / 3.0 : -0.2;
      break;
    case ObjectiveFamily::Rosenbrock: m.setConstant(-0.2); break;
    case ObjectiveFamily::Levy: m.setConstant(0.1); break;
    case ObjectiveFamily::StyblinskiTang:
      m.setConstant(kStybTangRoot / 5.0);
      break;
    default: throw ConfigError("base_minimizer: not a base family");
  }
  return m;
}

}  // namespace detail

/// A benchmark objective on [-1, 1]^D, shifted and normalized so that
/// f(x*) = 0 and f(0) = 100.
struct ObjectiveSpec {
  ObjectiveFamily family = ObjectiveFamily::External;
  ObjectiveFamily base = ObjectiveFamily::External;
  int dim = 0;
  std::string name;
  Vector shift;          // transformed-space input shift
  Vector minimizer;      // transformed coordinates (empty if unknown)
  double norm_offset = 0.0;
  double norm_scale = 1.0;
  std::optional<double> f_star;  // normalized optimum value
  std::function<double(const Vector&)> external;
};

inline double evaluate(const ObjectiveSpec& spec, const Vector& x) {
  if (x.size() != spec.dim)
    throw ConfigError("objective: dimension mismatch");
  if (spec.family == ObjectiveFamily::External) return spec.external(x);
  Vector t = spec.shift.size() ? Vector(x - spec.shift) : x;
  return (detail::raw_transformed(spec.base, t) - spec.norm_offset) *
         spec.norm_scale;
}

/// Builds a spec for a base family with a transformed-space shift vector.
/// The shifted minimizer must stay inside the domain.
inline ObjectiveSpec shift_variant(ObjectiveFamily base, int dim,
                                   const Vector& shift,
                                   const std::string& name) {
  if (dim < 2) throw ConfigError("objective: dimension must be >= 2");
  if (base == ObjectiveFamily::QBranin && dim % 2 != 0)
    throw ConfigError("QBranin: additive repetition needs an even dimension");
  if (shift.size() != dim) throw ConfigError("shift_variant: shift dimension");

  ObjectiveSpec spec;
  spec.family = base;  // refined by make_objective for the named variants
  spec.base = base;
  spec.dim = dim;
  spec.name = name;
  spec.shift = shift;
  spec.minimizer = detail::base_minimizer(base, dim) + shift;
  for (int d = 0; d < dim; ++d)
    if (spec.minimizer[d] < -1.0 || spec.minimizer[d] > 1.0)
      throw ConfigError("shift_variant: minimizer pushed outside the domain");

  double f_min =
      detail::raw_transformed(base, detail::base_minimizer(base, dim));
  double f_origin = detail::raw_transformed(base, Vector(-shift));
  if (!(f_origin > f_min))
    throw ConfigError("shift_variant: degenerate normalization");
  spec.norm_offset = f_min;
  spec.norm_scale = 100.0 / (f_origin - f_min);
  spec.f_star = 0.0;
  return spec;
}

inline ObjectiveSpec make_objective(ObjectiveFamily family, int dim) {
  auto uniform_shift = [dim](ObjectiveFamily base, double s,
                             const std::string& name) {
    return shift_variant(base, dim, Vector::Constant(dim, s), name);
  };
  ObjectiveSpec spec;
  switch (family) {
    case ObjectiveFamily::QBranin:
      spec = uniform_shift(ObjectiveFamily::QBranin, 0.0, "qbranin");
      break;
    case ObjectiveFamily::SQBranin:
      // inputs shifted by 2 in the original space (half-width 7.5)
      spec = uniform_shift(ObjectiveFamily::QBranin, -2.0 / 7.5, "sqbranin");
      break;
    case ObjectiveFamily::SSQBranin:
      spec = uniform_shift(ObjectiveFamily::QBranin, -3.0 / 7.5, "ssqbranin");
      break;
    case ObjectiveFamily::Rosenbrock:
      spec = uniform_shift(ObjectiveFamily::Rosenbrock, 0.0, "rosenbrock");
      break;
    case ObjectiveFamily::S35Rosenbrock:
      spec = uniform_shift(ObjectiveFamily::Rosenbrock, 0.55, "s35rosenbrock");
      break;
    case ObjectiveFamily::S50Rosenbrock:
      spec = uniform_shift(ObjectiveFamily::Rosenbrock, 0.70, "s50rosenbrock");
      break;
    case ObjectiveFamily::S65Rosenbrock:
      spec = uniform_shift(ObjectiveFamily::Rosenbrock, 0.85, "s65rosenbrock");
      break;
    case ObjectiveFamily::Levy:
      spec = uniform_shift(ObjectiveFamily::Levy, 0.0, "levy");
      break;
    case ObjectiveFamily::StyblinskiTang:
      spec = uniform_shift(ObjectiveFamily::StyblinskiTang, 0.0,
                           "styblinskitang");
      break;
    case ObjectiveFamily::External:
      throw ConfigError("make_objective: External needs make_external");
  }
  spec.family = family;
  return spec;
}

/// External objectives plug in as a raw function handle; normalized
/// improvement is only available when the optimum is declared.
inline ObjectiveSpec make_external(std::function<double(const Vector&)> fn,
                                   int dim, const std::string& name,
                                   std::optional<Vector> minimizer = {},
                                   std::optional<double> f_star = {}) {
  ObjectiveSpec spec;
  spec.family = ObjectiveFamily::External;
  spec.base = ObjectiveFamily::External;
  spec.dim = dim;
  spec.name = name;
  spec.external = std::move(fn);
  if (minimizer) spec.minimizer = *minimizer;
  spec.f_star = f_star;
  return spec;
}

inline ObjectiveFamily parse_objective_family(std::string tag) {
  std::string t;
  for (char c : tag)
    if (c != '-' && c != '_') t += static_cast<char>(std::tolower(c));
  if (t == "qbranin") return ObjectiveFamily::QBranin;
  if (t == "sqbranin") return ObjectiveFamily::SQBranin;
  if (t == "ssqbranin") return ObjectiveFamily::SSQBranin;
  if (t == "rosenbrock") return ObjectiveFamily::Rosenbrock;
  if (t == "s35rosenbrock") return ObjectiveFamily::S35Rosenbrock;
  if (t == "s50rosenbrock") return ObjectiveFamily::S50Rosenbrock;
  if (t == "s65rosenbrock") return ObjectiveFamily::S65Rosenbrock;
  if (t == "levy") return ObjectiveFamily::Levy;
  if (t == "styblinskitang") return ObjectiveFamily::StyblinskiTang;
  throw ConfigError("unknown objective family: " + tag);
}

}  // namespace nsbo
