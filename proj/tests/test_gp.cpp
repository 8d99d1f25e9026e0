#include "nsbo/cylindrical.hpp"
#include "nsbo/gp.hpp"
#include "nsbo/informative.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace nsbo;

namespace {

EvidenceSet random_evidence(Rng& rng, int n, int dim,
                            bool include_origin = false) {
  EvidenceSet ev(dim);
  for (int i = 0; i < n; ++i) {
    Vector x = include_origin && i == 0
                   ? Vector(Vector::Zero(dim))
                   : Vector(oracles::random_points(rng, 1, dim)
                                .row(0)
                                .transpose());
    ev.add(x, rng.normal());
  }
  return ev;
}

}  // namespace

TEST_CASE("posterior prediction") {
  SECTION("empty evidence recovers the prior") {
    auto mean = std::make_shared<ConstantMean>(2, 0.7);
    Vector p(1);
    p << 0.7;
    mean->set_params(p);
    auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, 2,
                                                  1.3, 0.5);
    GpModel model(mean, cov, 1e-3);
    model.condition(EvidenceSet(2));
    Vector x(2);
    x << 0.2, -0.4;
    auto post = model.predict(x);
    CHECK(post.mean == 0.7);
    CHECK(post.variance == 1.3);
  }

  SECTION("noise-free interpolation at an observed point") {
    auto mean = std::make_shared<ConstantMean>(2);
    auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, 2,
                                                  1.0, 0.8);
    EvidenceSet ev(2);
    Vector x1(2);
    x1 << 0.3, -0.1;
    ev.add(x1, 2.5);
    GpModel model(mean, cov, 0.0);
    model.condition(ev);
    auto post = model.predict(x1);
    CHECK(post.mean == Catch::Approx(2.5).margin(1e-9));
    CHECK(post.variance == Catch::Approx(0.0).margin(1e-9));
  }

  SECTION("matches the naive-inverse oracle") {
    Rng rng(41);
    auto mean = std::make_shared<ConstantMean>(3, 0.2);
    auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, 3,
                                                  1.4, 0.7);
    EvidenceSet ev = random_evidence(rng, 8, 3);
    GpModel model(mean, cov, 1e-3);
    model.condition(ev);
    for (int rep = 0; rep < 20; ++rep) {
      Vector x = oracles::random_points(rng, 1, 3).row(0).transpose();
      auto post = model.predict(x);
      auto ref = oracles::naive_predict(*mean, *cov, 1e-3, ev.inputs(),
                                        ev.outputs(), x);
      CHECK(post.mean == Catch::Approx(ref.mean).epsilon(1e-8));
      CHECK(post.variance ==
            Catch::Approx(ref.variance).epsilon(1e-8).margin(1e-10));
    }
  }

  SECTION("cylindrical origin handling matches a full per-point rebuild") {
    Rng rng(43);
    auto mean = std::make_shared<ConstantMean>(3, 0.0);
    auto cov = std::make_shared<CylindricalKernel>(3);
    Vector p = cov->params();
    p.segment(2, 4) << 0.4, 1.1, 0.2, 0.9;
    p[6] = 0.8;
    p[7] = 1.4;
    cov->set_params(p);
    EvidenceSet ev = random_evidence(rng, 9, 3, /*include_origin=*/true);
    GpModel model(mean, cov, 1e-3);
    model.condition(ev);
    for (int rep = 0; rep < 20; ++rep) {
      Vector x = oracles::random_points(rng, 1, 3).row(0).transpose();
      auto post = model.predict(x);
      auto ref = oracles::naive_predict_origin(*mean, *cov, 1e-3, ev.inputs(),
                                               ev.outputs(), x);
      CHECK(post.mean == Catch::Approx(ref.mean).epsilon(1e-8));
      CHECK(post.variance ==
            Catch::Approx(ref.variance).epsilon(1e-8).margin(1e-10));
    }
  }

  SECTION("posterior variance never exceeds the prior variance") {
    Rng rng(47);
    auto mean = std::make_shared<ConstantMean>(4);
    AnchorSet anchors = AnchorSet::single(
        oracles::random_points(rng, 1, 4).row(0).transpose(), 0.15);
    auto cov = std::make_shared<InformativeKernel>(
        4, anchors, ShapingConfig::fixed_ratio(0.15));
    EvidenceSet ev = random_evidence(rng, 20, 4);
    GpModel model(mean, cov, 1e-3);
    model.condition(ev);
    for (int rep = 0; rep < 200; ++rep) {
      Vector x = oracles::random_points(rng, 1, 4).row(0).transpose();
      auto post = model.predict(x);
      CHECK(post.variance <= cov->variance_at(x) + 1e-8);
      CHECK(post.variance >= 0.0);
    }
  }

  SECTION("duplicate noise-free observation leaves the mean unchanged") {
    Rng rng(53);
    auto mean = std::make_shared<ConstantMean>(2);
    auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, 2,
                                                  1.0, 0.6);
    EvidenceSet ev = random_evidence(rng, 6, 2);
    GpModel before(mean, cov, 0.0);
    before.condition(ev);
    EvidenceSet dup = ev;
    dup.add(ev.point(2), ev.output(2));
    GpModel after(mean, cov, 0.0);
    after.condition(dup);
    CHECK(after.jitter() > 0.0);  // exact duplicate needs the escalation
    for (int rep = 0; rep < 30; ++rep) {
      Vector x = oracles::random_points(rng, 1, 2).row(0).transpose();
      CHECK(after.predict(x).mean ==
            Catch::Approx(before.predict(x).mean).margin(1e-6));
    }
  }

  SECTION("predictions are invariant to evidence permutation") {
    Rng rng(59);
    auto mean = std::make_shared<ConstantMean>(3);
    auto cov = std::make_shared<StationaryKernel>(StationaryKind::Gaussian, 3,
                                                  1.1, 0.9);
    EvidenceSet ev = random_evidence(rng, 10, 3);
    EvidenceSet perm(3);
    std::vector<int> order = {7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
    for (int i : order) perm.add(ev.point(i), ev.output(i));
    GpModel a(mean, cov, 1e-3), b(mean, cov, 1e-3);
    a.condition(ev);
    b.condition(perm);
    for (int rep = 0; rep < 20; ++rep) {
      Vector x = oracles::random_points(rng, 1, 3).row(0).transpose();
      CHECK(a.predict(x).mean ==
            Catch::Approx(b.predict(x).mean).margin(1e-10));
      CHECK(a.predict(x).variance ==
            Catch::Approx(b.predict(x).variance).margin(1e-10));
    }
  }

  SECTION("analytic input gradients match finite differences") {
    Rng rng(61);
    auto mean = std::make_shared<QuadraticMean>(3);
    Vector mp(4);
    mp << 0.3, 0.5, 0.1, 0.9;
    mean->set_params(mp);
    AnchorSet anchors = AnchorSet::single(
        oracles::random_points(rng, 1, 3).row(0).transpose(), 0.2);
    auto cov = std::make_shared<InformativeKernel>(
        3, anchors, ShapingConfig::fixed_ratio(0.2));
    EvidenceSet ev = random_evidence(rng, 12, 3);
    GpModel model(mean, cov, 1e-3);
    model.condition(ev);
    for (int rep = 0; rep < 10; ++rep) {
      Vector x = 0.8 * oracles::random_points(rng, 1, 3).row(0).transpose();
      PosteriorPredictive post;
      Vector dmean, dvar;
      model.predict_with_grad(x, post, dmean, dvar);
      Vector fd_mean = oracles::finite_difference(
          [&](const Vector& q) { return model.predict(q).mean; }, x, 1e-6);
      Vector fd_var = oracles::finite_difference(
          [&](const Vector& q) { return model.predict(q).variance; }, x, 1e-6);
      for (int d = 0; d < 3; ++d) {
        CHECK(dmean[d] == Catch::Approx(fd_mean[d]).epsilon(1e-4).margin(1e-6));
        CHECK(dvar[d] == Catch::Approx(fd_var[d]).epsilon(1e-4).margin(1e-6));
      }
    }
  }
}

TEST_CASE("log marginal likelihood") {
  SECTION("single standard-normal observation at zero") {
    // m = 0, C(x,x) = 1, sigma_y = 0, y = 0, no hyperprior penalty
    auto mean = std::make_shared<ConstantMean>(1, 0.0);
    auto cov =
        std::make_shared<StationaryKernel>(StationaryKind::Matern52, 1, 1.0);
    EvidenceSet ev(1);
    ev.add(Vector::Zero(1), 0.0);
    LogMarginal lm = log_marginal_likelihood(*mean, *cov, 0.0, ev,
                                             /*include_priors=*/false);
    CHECK(lm.value == Catch::Approx(-0.5 * std::log(2.0 * M_PI)));
  }

  SECTION("empty evidence is a precondition error") {
    auto mean = std::make_shared<ConstantMean>(1);
    auto cov =
        std::make_shared<StationaryKernel>(StationaryKind::Matern52, 1, 1.0);
    CHECK_THROWS_AS(
        log_marginal_likelihood(*mean, *cov, 1e-3, EvidenceSet(1)),
        ConfigError);
  }

  SECTION("doubling the noise variance changes the value") {
    Rng rng(67);
    auto mean = std::make_shared<ConstantMean>(2);
    auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, 2,
                                                  1.0, 0.7);
    EvidenceSet ev = random_evidence(rng, 7, 2);
    double a = log_marginal_likelihood(*mean, *cov, 1e-3, ev).value;
    double b = log_marginal_likelihood(*mean, *cov, 2e-3, ev).value;
    CHECK(a != b);
  }

  SECTION("gradient matches central finite differences") {
    Rng rng(71);
    const int D = 2;
    EvidenceSet ev = random_evidence(rng, 5, D);

    auto check_family = [&](std::shared_ptr<MeanFunction> mean,
                            std::shared_ptr<CovarianceFunction> cov,
                            const EvidenceSet& data) {
      ParamBinding binding(*mean, *cov);
      Vector z0 = binding.to_unconstrained();
      LogMarginal lm = log_marginal_likelihood(binding, 1e-3, data);
      Vector fd = oracles::finite_difference(
          [&](const Vector& z) {
            binding.set_unconstrained(z);
            return log_marginal_likelihood(binding, 1e-3, data, true, false)
                .value;
          },
          z0, 1e-5);
      binding.set_unconstrained(z0);
      for (int k = 0; k < binding.size(); ++k) {
        INFO(binding.spec(k).name);
        CHECK(lm.grad[k] ==
              Catch::Approx(fd[k]).epsilon(1e-4).margin(1e-7));
      }
    };

    SECTION("stationary matern with constant mean") {
      auto mean = std::make_shared<ConstantMean>(D, 0.1);
      mean->set_observed_range(-2.0, 2.0);
      auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52,
                                                    D, 1.3, 0.8);
      check_family(mean, cov, ev);
    }
    SECTION("gaussian kernel with quadratic mean") {
      auto mean = std::make_shared<QuadraticMean>(D);
      mean->set_observed_range(-2.0, 2.0);
      Vector mp(1 + D);
      mp << 0.2, 0.4, 1.1;
      mean->set_params(mp);
      auto cov = std::make_shared<StationaryKernel>(StationaryKind::Gaussian,
                                                    D, 0.9, 0.5);
      check_family(mean, cov, ev);
    }
    SECTION("informative covariance, shared shaping lengthscales") {
      auto mean = std::make_shared<ConstantMean>(D, -0.1);
      mean->set_observed_range(-2.0, 2.0);
      AnchorSet anchors = AnchorSet::single(
          oracles::random_points(rng, 1, D).row(0).transpose(), 0.3);
      auto cov = std::make_shared<InformativeKernel>(D, anchors);
      Vector cp = cov->params();
      cp[0] = 1.2;
      cp.segment(1, D) << 0.7, 1.1;
      cp[1 + D] = 0.3;
      cov->set_params(cp);
      check_family(mean, cov, ev);
    }
    SECTION("cylindrical with the origin in the evidence") {
      EvidenceSet ev_origin = random_evidence(rng, 6, D, true);
      auto mean = std::make_shared<ConstantMean>(D, 0.0);
      mean->set_observed_range(-2.0, 2.0);
      auto cov = std::make_shared<CylindricalKernel>(D);
      Vector cp = cov->params();
      cp[0] = 1.1;
      cp[1] = 0.4;
      cp.segment(2, 4) << 0.5, 1.4, 0.8, 0.3;
      cp[6] = 0.7;
      cp[7] = 1.6;
      cov->set_params(cp);
      check_family(mean, cov, ev_origin);
    }
  }

  SECTION("degenerate Gram reports the jitter level") {
    // identical points with zero noise exhaust the escalation only if the
    // kernel itself is broken; instead check that conditioning succeeds and
    // records a positive jitter for an exactly singular Gram
    auto mean = std::make_shared<ConstantMean>(1);
    auto cov =
        std::make_shared<StationaryKernel>(StationaryKind::Gaussian, 1, 1.0);
    EvidenceSet ev(1);
    for (int i = 0; i < 4; ++i) ev.add(Vector::Zero(1), 1.0);
    GpModel model(mean, cov, 0.0);
    model.condition(ev);
    CHECK(model.jitter() > 0.0);
  }
}

TEST_CASE("exact leave-one-out") {
  Rng rng(73);
  auto mean = std::make_shared<ConstantMean>(2, 0.0);
  auto cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, 2,
                                                1.0, 0.8);
  EvidenceSet ev = random_evidence(rng, 8, 2);
  GpModel model(mean, cov, 1e-2);
  model.condition(ev);

  // brute-force LOO: refit on n-1 points, evaluate the held-out density
  double brute = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    EvidenceSet rest(2);
    for (Eigen::Index j = 0; j < ev.size(); ++j)
      if (j != i) rest.add(ev.point(j), ev.output(j));
    GpModel sub(mean, cov, 1e-2);
    sub.condition(rest);
    auto post = sub.predict(ev.point(i));
    double var = post.variance + 1e-2;  // predictive of the noisy value
    double err = ev.output(i) - post.mean;
    brute += -0.5 * std::log(2.0 * M_PI * var) - 0.5 * err * err / var;
  }
  CHECK(model.loo_log_predictive() == Catch::Approx(brute).epsilon(1e-6));

  CHECK_THROWS_AS(
      [&] {
        EvidenceSet tiny(2);
        tiny.add(Vector::Zero(2), 0.0);
        tiny.add(Vector::Ones(2), 1.0);
        GpModel m2(mean, cov, 1e-2);
        m2.condition(tiny);
        return m2.loo_log_predictive();
      }(),
      ConfigError);
}
