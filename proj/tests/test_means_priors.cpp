#include "nsbo/gp.hpp"
#include "nsbo/hyperprior.hpp"
#include "nsbo/informative.hpp"
#include "nsbo/mean.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace nsbo;

TEST_CASE("mean functions") {
  SECTION("degenerate quadratic is the constant mean") {
    QuadraticMean qm(3);
    Vector p(4);
    p << 1.7, 0.0, 0.0, 0.0;
    qm.set_params(p);
    Vector x(3);
    x << 0.5, -0.2, 0.9;
    CHECK(qm.value(x) == 1.7);
  }
  SECTION("center evaluation returns the offset") {
    QuadraticMean qm(2);
    Vector c(2);
    c << 0.3, -0.4;
    qm.set_center(c);
    Vector p(3);
    p << -2.5, 1.0, 4.0;
    qm.set_params(p);
    CHECK(qm.value(c) == -2.5);
  }
  SECTION("hand-evaluated quadratic") {
    QuadraticMean qm(2);
    Vector p(3);
    p << 0.0, 1.0, 2.0;
    qm.set_params(p);
    Vector x(2);
    x << 1.0, 1.0;
    CHECK(qm.value(x) == Catch::Approx(3.0));
  }
  SECTION("parameter gradient") {
    QuadraticMean qm(2);
    Vector p(3);
    p << 0.5, 1.5, 0.25;
    qm.set_params(p);
    Vector x(2);
    x << 0.4, -0.8;
    double out[3];
    qm.param_grad(x, out);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == Catch::Approx(0.16));
    CHECK(out[2] == Catch::Approx(0.64));
    Vector g = qm.x_grad(x);
    CHECK(g[0] == Catch::Approx(2.0 * 1.5 * 0.4));
  }
  SECTION("convexity: weights stay non-negative through the transform") {
    QuadraticMean qm(4);
    for (const ParamSpec& s : qm.param_specs())
      if (s.name.rfind("mean.weight", 0) == 0) {
        CHECK(s.transform == Transform::Softplus);
        for (double z : {-40.0, -3.0, 0.0, 5.0})
          CHECK(transform_apply(s.transform, z) >= 0.0);
      }
  }
}

TEST_CASE("hyperprior densities") {
  SECTION("uniform is flat inside and -inf outside") {
    Uniform u{std::exp(-12.0), std::exp(20.0)};
    double inside1 = log_density(u, 1.0);
    double inside2 = log_density(u, 1000.0);
    CHECK(inside1 == inside2);
    CHECK(log_density(u, std::exp(21.0)) == -kInf);
    CHECK(log_density(u, 0.0) == -kInf);
  }

  SECTION("kumaraswamy matches the closed form on a grid") {
    Kumaraswamy k{3.164, 1000.0};
    for (double r = 0.01; r < 1.0; r += 0.013) {
      double direct = std::log(k.a * k.b) + (k.a - 1.0) * std::log(r) +
                      (k.b - 1.0) * std::log(1.0 - std::pow(r, k.a));
      CHECK(log_density(k, r) == Catch::Approx(direct).margin(1e-12));
    }
  }

  SECTION("kumaraswamy(3.164, 1000) peaks near 0.1") {
    Kumaraswamy k{3.164, 1000.0};
    double at_mode = log_density(k, 0.1);
    CHECK(at_mode > log_density(k, 0.5));
    CHECK(at_mode > log_density(k, 0.01));
  }

  SECTION("continuous families integrate to 1") {
    auto integral = [](const Hyperprior& p, double lo, double hi) {
      return oracles::simpson(
          [&](double x) { return std::exp(log_density(p, x)); }, lo, hi,
          20000);
    };
    // heavy-tailed families are integrated in log space
    auto log_integral = [](const Hyperprior& p, double lo, double hi) {
      return oracles::simpson(
          [&](double u) {
            double x = std::exp(u);
            return std::exp(log_density(p, x)) * x;
          },
          std::log(lo), std::log(hi), 20000);
    };
    CHECK(integral(Uniform{0.5, 4.0}, 0.5, 4.0) ==
          Catch::Approx(1.0).margin(1e-3));
    CHECK(integral(Kumaraswamy{3.164, 1000.0}, 1e-9, 1.0 - 1e-9) ==
          Catch::Approx(1.0).margin(1e-3));
    CHECK(integral(Kumaraswamy{1.467, 10.0}, 1e-9, 1.0 - 1e-9) ==
          Catch::Approx(1.0).margin(1e-3));
    CHECK(log_integral(HalfCauchy{1.0}, 1e-12, 1e9) ==
          Catch::Approx(1.0).margin(1e-3));
    CHECK(log_integral(LogNormal{0.0, 2.0}, 1e-12, 1e9) ==
          Catch::Approx(1.0).margin(1e-3));
  }

  SECTION("gradients match finite differences") {
    std::vector<std::pair<Hyperprior, double>> cases = {
        {Kumaraswamy{3.164, 1000.0}, 0.23},
        {HalfCauchy{0.5}, 1.7},
        {HalfCauchyInvSq{0.1}, 0.9},
        {HalfHorseshoe{2.0}, 0.6},
        {LogNormal{0.0, 2.0}, 3.1},
        {SpikeSlabLog{1.0, 0.5, 1.0}, 0.8}};
    for (const auto& [prior, x] : cases) {
      double h = 1e-6;
      double fd =
          (log_density(prior, x + h) - log_density(prior, x - h)) / (2 * h);
      CHECK(log_density_grad(prior, x) ==
            Catch::Approx(fd).epsilon(1e-4).margin(1e-6));
    }
  }

  SECTION("out-of-support values are rejected, not fatal") {
    CHECK(log_density(Kumaraswamy{2.0, 5.0}, -0.5) == -kInf);
    CHECK(log_density(Kumaraswamy{2.0, 5.0}, 1.5) == -kInf);
    CHECK(log_density(LogNormal{0.0, 1.0}, -1.0) == -kInf);
    CHECK(log_density(HalfCauchy{1.0}, -2.0) == -kInf);
  }

  SECTION("sampling lands in the support") {
    Rng rng(79);
    std::vector<Hyperprior> priors = {
        Uniform{0.1, 2.0},       Kumaraswamy{3.164, 1000.0},
        HalfCauchy{1.0},         HalfCauchyInvSq{0.1},
        HalfHorseshoe{2.0},      LogNormal{0.0, 2.0},
        SpikeSlabLog{1.0, 0.5, 1.0}};
    for (const Hyperprior& p : priors) {
      auto [lo, hi] = support(p);
      for (int i = 0; i < 50; ++i) {
        double v = sample(p, rng);
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("dirac-frozen parameters leave the optimization vector") {
  ConstantMean mean(2);
  AnchorSet anchors = AnchorSet::single(Vector::Zero(2), 0.1);
  InformativeKernel with_dirac(2, anchors, ShapingConfig::fixed_ratio(0.1));
  InformativeKernel with_kumar(2, anchors, ShapingConfig{});
  ParamBinding frozen(mean, with_dirac);
  ParamBinding learned(mean, with_kumar);
  CHECK(learned.size() == frozen.size() + 1);
  CHECK(with_dirac.ratio() == 0.1);
}

TEST_CASE("transforms round-trip") {
  for (Transform t : {Transform::Identity, Transform::Softplus, Transform::Log,
                      Transform::Logistic}) {
    for (double z : {-4.0, -0.3, 0.0, 1.5, 8.0}) {
      double v = transform_apply(t, z);
      CHECK(transform_invert(t, v) == Catch::Approx(z).margin(1e-9));
      double h = 1e-6;
      double fd =
          (transform_apply(t, z + h) - transform_apply(t, z - h)) / (2 * h);
      CHECK(transform_jacobian(t, z) == Catch::Approx(fd).epsilon(1e-5));
    }
  }
}
