#include "nsbo/cylindrical.hpp"
#include "nsbo/informative.hpp"
#include "nsbo/kernel.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace nsbo;

namespace {
Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("matern52 pointwise values") {
  Vector ls = Vector::Constant(2, 0.7);
  Vector x = vec2(0.3, -0.4), y = vec2(-0.1, 0.2);

  SECTION("zero distance gives the prior variance") {
    CHECK(matern52(x, x, ls, 2.5) == Catch::Approx(2.5));
  }
  SECTION("unit weighted distance") {
    // hand evaluation of (1 + sqrt5 + 5/3) exp(-sqrt5)
    Vector unit_ls = Vector::Constant(2, 1.0);
    Vector a = vec2(0.0, 0.0), b = vec2(1.0, 0.0);
    CHECK(matern52(a, b, unit_ls, 1.0) ==
          Catch::Approx(0.52399410883182031).epsilon(1e-12));
  }
  SECTION("argument swap") {
    CHECK(matern52(x, y, ls, 1.3) == matern52(y, x, ls, 1.3));
  }
  SECTION("positive lengthscales required") {
    Vector bad = vec2(1.0, 0.0);
    CHECK_THROWS_AS(matern52(x, y, bad, 1.0), ConfigError);
  }
}

TEST_CASE("shaping function") {
  Vector ls = Vector::Constant(2, 0.5);
  Vector anchor = vec2(0.2, -0.3);

  SECTION("unit ratios give phi = 1 everywhere") {
    AnchorSet anchors = AnchorSet::single(anchor, 1.0);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      Vector x = oracles::random_points(rng, 1, 2).row(0).transpose();
      CHECK(shaping_phi(x, anchors, ls) == 1.0);
    }
  }
  SECTION("value at the anchor is 1 + (1/r - 1)") {
    AnchorSet anchors = AnchorSet::single(anchor, 0.1);
    CHECK(shaping_phi(anchor, anchors, ls) == Catch::Approx(10.0));
  }
  SECTION("decays to 1 far from all anchors") {
    AnchorSet anchors = AnchorSet::single(vec2(-1.0, -1.0), 0.05);
    Vector ls_short = Vector::Constant(2, 0.05);
    CHECK(shaping_phi(vec2(1.0, 1.0), anchors, ls_short) ==
          Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("multi-anchor mixture averages the kernels") {
    AnchorSet anchors;
    anchors.anchors.resize(2, 2);
    anchors.anchors.row(0) = vec2(0.5, 0.5).transpose();
    anchors.anchors.row(1) = vec2(-0.5, -0.5).transpose();
    anchors.ratios = Vector::Constant(2, 0.2);
    anchors.kernels = {AnchorKernel::Gaussian, AnchorKernel::Gaussian};
    double at_first = shaping_phi(vec2(0.5, 0.5), anchors, ls);
    // the aligned kernel contributes 4/2 = 2; the far one almost nothing
    CHECK(at_first == Catch::Approx(3.0).margin(0.05));
  }
}

TEST_CASE("prior covariance") {
  Vector ls = Vector::Constant(2, 0.5);
  Vector anchor = vec2(0.0, 0.0);

  SECTION("stationary recovery at r = 1") {
    AnchorSet anchors = AnchorSet::single(anchor, 1.0);
    Rng rng(5);
    for (int i = 0; i < 10; ++i) {
      Matrix P = oracles::random_points(rng, 2, 2);
      CHECK(prior_covariance(P.row(0).transpose(), P.row(1).transpose(), 1.7,
                             anchors, ls) == Catch::Approx(1.7));
    }
  }
  SECTION("amplification at the anchor") {
    AnchorSet anchors = AnchorSet::single(anchor, 0.1);
    CHECK(prior_covariance(anchor, anchor, 1.0, anchors, ls) ==
          Catch::Approx(10.0));
  }
  SECTION("profile decreases monotonically to sigma_p^2") {
    Vector ls_short = Vector::Constant(2, 0.2);
    for (double r : {0.9, 0.5, 0.1}) {
      AnchorSet anchors = AnchorSet::single(anchor, r);
      double prev = kInf;
      for (double t = 0.0; t <= 1.0; t += 0.05) {
        Vector x = vec2(t, 0.0);
        double v = prior_covariance(x, x, 1.0, anchors, ls_short);
        CHECK(v <= prev + 1e-12);
        CHECK(v >= 1.0 - 1e-12);
        prev = v;
      }
      CHECK(prior_covariance(vec2(1.0, 0.0), vec2(1.0, 0.0), 1.0, anchors,
                             ls_short) == Catch::Approx(1.0).margin(1e-3));
    }
  }
  SECTION("variance profile is maximized at the anchor") {
    AnchorSet anchors = AnchorSet::single(vec2(0.4, -0.2), 0.2);
    double at_anchor =
        prior_covariance(vec2(0.4, -0.2), vec2(0.4, -0.2), 1.0, anchors, ls);
    for (double a = -1.0; a <= 1.0; a += 0.05)
      for (double b = -1.0; b <= 1.0; b += 0.05)
        CHECK(prior_covariance(vec2(a, b), vec2(a, b), 1.0, anchors, ls) <=
              at_anchor + 1e-12);
  }
}

TEST_CASE("input warping") {
  Vector ls = vec2(0.5, 2.0);
  Vector anchor = vec2(0.1, 0.3);

  SECTION("r = 1 reduces to plain anisotropic scaling") {
    AnchorSet anchors = AnchorSet::single(anchor, 1.0);
    Vector x = vec2(0.8, -0.6);
    Vector h = warp_input(x, anchors, ls);
    CHECK(h[0] == x[0] / ls[0]);
    CHECK(h[1] == x[1] / ls[1]);
  }
  SECTION("at the anchor the mixture equals the ratio") {
    AnchorSet anchors = AnchorSet::single(anchor, 0.25);
    CHECK(lengthscale_mixture(anchor, anchors, ls) == Catch::Approx(0.25));
    // local metric scales distances by 1/sqrt(r): h = x / (sqrt(r) lambda)
    Vector h = warp_input(anchor, anchors, ls);
    CHECK(h[0] == Catch::Approx(anchor[0] / (0.5 * ls[0])));
  }
  SECTION("far from anchors the mixture returns to 1") {
    AnchorSet anchors = AnchorSet::single(vec2(-1.0, -1.0), 0.1);
    Vector ls_short = Vector::Constant(2, 0.05);
    CHECK(lengthscale_mixture(vec2(1.0, 1.0), anchors, ls_short) ==
          Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("informative covariance") {
  SECTION("stationarity recovery at r0 = 1") {
    const int D = 3;
    Rng rng(11);
    AnchorSet anchors =
        AnchorSet::single(oracles::random_points(rng, 1, D).row(0).transpose(),
                          1.0);
    InformativeKernel inf(D, anchors, ShapingConfig::fixed_ratio(1.0));
    StationaryKernel stat(StationaryKind::Matern52, D);
    Vector p(2 + D);
    p[0] = 1.9;
    p.segment(1, D) << 0.4, 0.9, 1.5;
    p[1 + D] = 1.0;
    inf.set_params(p);
    stat.set_params(p.head(1 + D));
    Matrix X = oracles::random_points(rng, 25, D);
    Matrix Ki, Ks;
    inf.gram(X, Ki, nullptr);
    stat.gram(X, Ks, nullptr);
    CHECK((Ki - Ks).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SECTION("prior variance at a single anchor is sigma_p^2 / r") {
    const int D = 2;
    Vector anchor = vec2(0.3, 0.3);
    InformativeKernel inf(D, AnchorSet::single(anchor, 0.1),
                          ShapingConfig::fixed_ratio(0.1));
    Vector p(4);
    p << 2.0, 0.6, 0.6, 0.1;
    inf.set_params(p);
    CHECK(inf.eval(anchor, anchor) == Catch::Approx(20.0));
    CHECK(inf.variance_at(anchor) == Catch::Approx(20.0));
  }

  SECTION("random Gram matrices stay positive semidefinite") {
    Rng rng(17);
    for (int rep = 0; rep < 25; ++rep) {
      int D = 1 + static_cast<int>(rng.uniform(0, 20));
      int L = 1 + static_cast<int>(rng.uniform(0, 3));
      AnchorSet anchors;
      anchors.anchors = oracles::random_points(rng, L, D);
      anchors.ratios = Vector::Constant(L, rng.uniform(0.01, 1.0));
      anchors.kernels.assign(L, rep % 2 == 0 ? AnchorKernel::Gaussian
                                             : AnchorKernel::Matern52);
      InformativeKernel inf(D, anchors,
                            ShapingConfig::fixed_ratio(anchors.ratios[0]));
      Vector p = inf.params();
      p[0] = std::exp(rng.uniform(-2.0, 2.0));
      for (int d = 0; d < D; ++d) p[1 + d] = rng.uniform(0.05, 2.0);
      inf.set_params(p);
      int n = 5 + static_cast<int>(rng.uniform(0, 26));
      Matrix X = oracles::random_points(rng, n, D);
      Matrix K;
      inf.gram(X, K, nullptr);
      CHECK(oracles::min_eigenvalue(K) >= -1e-8 * K.trace());
    }
  }

  SECTION("kernels are symmetric under argument swap") {
    Rng rng(23);
    const int D = 4;
    InformativeKernel inf(
        D, AnchorSet::single(oracles::random_points(rng, 1, D).row(0), 0.3),
        ShapingConfig::fixed_ratio(0.3));
    CylindricalKernel cyl(D);
    StationaryKernel stat(StationaryKind::Gaussian, D, 1.2, 0.8);
    for (int rep = 0; rep < 30; ++rep) {
      Vector a = oracles::random_points(rng, 1, D).row(0).transpose();
      Vector b = oracles::random_points(rng, 1, D).row(0).transpose();
      CHECK(inf.eval(a, b) == inf.eval(b, a));
      CHECK(cyl.eval(a, b) == cyl.eval(b, a));
      CHECK(stat.eval(a, b) == stat.eval(b, a));
    }
  }

  SECTION("focused variant decouples the shaping lengthscale") {
    const int D = 2;
    ShapingConfig shaping = ShapingConfig::fixed_ratio(0.1);
    shaping.fixed_shaping_lengthscale = 0.1 * std::sqrt(2.0);
    InformativeKernel inf(D, AnchorSet::single(vec2(0, 0), 0.1), shaping);
    // the ratio parameter is frozen, lengthscales + variance remain
    ConstantMean mean(D);
    ParamBinding binding(mean, inf);
    bool has_ratio = false;
    for (int k = 0; k < binding.size(); ++k)
      if (binding.spec(k).name == "cov.ratio") has_ratio = true;
    CHECK_FALSE(has_ratio);
  }
}

TEST_CASE("cylindrical covariance") {
  const int D = 3;
  CylindricalKernel cyl(D);

  SECTION("kumaraswamy CDF") {
    CHECK(kumaraswamy_cdf(0.0, 0.7, 1.3) == 0.0);
    CHECK(kumaraswamy_cdf(1.0, 0.7, 1.3) == 1.0);
    // identity transform at alpha = beta = 1
    for (double r = 0.0; r <= 1.0; r += 0.1)
      CHECK(kumaraswamy_cdf(r, 1.0, 1.0) == Catch::Approx(r).margin(1e-15));
    // monotone increasing for admissible shapes
    for (double a : {0.5, 0.75, 1.0})
      for (double b : {1.0, 1.5, 2.0}) {
        double prev = -1.0;
        for (double r = 0.0; r <= 1.0; r += 0.02) {
          double v = kumaraswamy_cdf(r, a, b);
          CHECK(v > prev - 1e-15);
          prev = v;
        }
      }
  }

  SECTION("aligned angles give angular factor 1") {
    Vector x(3);
    x << 0.2, 0.1, -0.3;
    Vector y = 2.0 * x;  // same direction, different radius
    Vector p = cyl.params();
    p.segment(2, 4) << 0.4, 1.2, 0.1, 2.2;  // unnormalized weights
    cyl.set_params(p);
    double v = cyl.eval(x, y);
    // radius-only factor: evaluate with the radial part isolated via a
    // same-radius pair at aligned angles
    double dfr = std::abs(kumaraswamy_cdf(x.norm() / std::sqrt(3.0), 1, 1) -
                          kumaraswamy_cdf(y.norm() / std::sqrt(3.0), 1, 1));
    double s = 2.2360679774997896 * dfr / p[1];
    double radial = p[0] * (1 + s + s * s / 3) * std::exp(-s);
    CHECK(v == Catch::Approx(radial).epsilon(1e-12));
  }

  SECTION("origin takes the angle of the other point") {
    Vector origin = Vector::Zero(D);
    Vector x(3);
    x << 0.4, -0.2, 0.6;
    double v = cyl.eval(origin, x);
    double from_origin_rule = cyl.eval_origin(x, x);
    CHECK(v == Catch::Approx(from_origin_rule));
    // both at the origin: angular factor 1, full variance
    CHECK(cyl.eval(origin, origin) == Catch::Approx(cyl.params()[0]));
  }

  SECTION("per-test-point origin rows") {
    Vector x(3), probe(3);
    x << 0.5, 0.0, 0.0;
    probe << 0.0, 0.5, 0.0;  // orthogonal to x
    Vector p = cyl.params();
    p.segment(2, 4) << 1.0, 1.0, 1.0, 1.0;
    cyl.set_params(p);
    double aligned = cyl.eval_origin(x, x);
    double orthogonal = cyl.eval_origin(x, probe);
    CHECK(aligned > orthogonal);  // angular polynomial at t=1 vs t=0
  }

  SECTION("Gram is positive semidefinite away from the origin") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
      Vector p = cyl.params();
      p[0] = std::exp(rng.uniform(-1.0, 2.0));
      p[1] = rng.uniform(0.1, 1.0);
      for (int q = 0; q < 4; ++q) p[2 + q] = std::exp(rng.uniform(-2.0, 2.0));
      p[6] = rng.uniform(0.5, 1.0);
      p[7] = rng.uniform(1.0, 2.0);
      cyl.set_params(p);
      Matrix X = oracles::random_points(rng, 20, D);
      Matrix K;
      cyl.gram(X, K, nullptr);
      CHECK(oracles::min_eigenvalue(K) >= -1e-8 * K.trace());
    }
  }
}
