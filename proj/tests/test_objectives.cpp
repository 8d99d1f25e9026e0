#include "nsbo/objectives.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace nsbo;

namespace {
const std::vector<ObjectiveFamily> kAllFamilies = {
    ObjectiveFamily::QBranin,       ObjectiveFamily::SQBranin,
    ObjectiveFamily::SSQBranin,     ObjectiveFamily::Rosenbrock,
    ObjectiveFamily::S35Rosenbrock, ObjectiveFamily::S50Rosenbrock,
    ObjectiveFamily::S65Rosenbrock, ObjectiveFamily::Levy,
    ObjectiveFamily::StyblinskiTang};
}

TEST_CASE("normalization pins") {
  for (ObjectiveFamily family : kAllFamilies) {
    for (int dim : {2, 20}) {
      ObjectiveSpec spec = make_objective(family, dim);
      INFO(spec.name << " D=" << dim);
      CHECK(std::abs(evaluate(spec, Vector::Zero(dim)) - 100.0) <= 1e-6);
      CHECK(std::abs(evaluate(spec, spec.minimizer)) <= 1e-6);
      for (int d = 0; d < dim; ++d) {
        CHECK(spec.minimizer[d] >= -1.0);
        CHECK(spec.minimizer[d] <= 1.0);
      }
    }
  }
}

TEST_CASE("known minimizers in transformed coordinates") {
  auto minimizer_is = [](ObjectiveFamily f, int dim, double coord) {
    ObjectiveSpec spec = make_objective(f, dim);
    for (int d = 0; d < dim; ++d)
      CHECK(spec.minimizer[d] == Catch::Approx(coord).margin(5e-3));
  };
  minimizer_is(ObjectiveFamily::Rosenbrock, 4, -0.2);
  minimizer_is(ObjectiveFamily::Levy, 4, 0.1);
  minimizer_is(ObjectiveFamily::StyblinskiTang, 4, -0.58);
  minimizer_is(ObjectiveFamily::S35Rosenbrock, 4, 0.35);
  minimizer_is(ObjectiveFamily::S50Rosenbrock, 4, 0.50);
  minimizer_is(ObjectiveFamily::S65Rosenbrock, 4, 0.65);
}

TEST_CASE("random search confirms non-negativity of the 2-D objectives") {
  Rng rng(107);
  for (ObjectiveFamily family : kAllFamilies) {
    ObjectiveSpec spec = make_objective(family, 2);
    INFO(spec.name);
    double lowest = kInf;
    for (int i = 0; i < 100000; ++i) {
      Vector x = oracles::random_points(rng, 1, 2).row(0).transpose();
      lowest = std::min(lowest, evaluate(spec, x));
    }
    CHECK(lowest >= -1e-6);
  }
}

TEST_CASE("styblinski-tang per-dimension minimizer by grid refinement") {
  // refine the quartic's stationary point in original coordinates
  auto g = [](double x) {
    return 0.5 * (x * x * x * x - 16.0 * x * x + 5.0 * x);
  };
  double lo = -5.0, hi = 0.0;
  for (int round = 0; round < 40; ++round) {
    double best = kInf, best_x = lo;
    for (int i = 0; i <= 200; ++i) {
      double x = lo + (hi - lo) * i / 200.0;
      if (g(x) < best) {
        best = g(x);
        best_x = x;
      }
    }
    double w = (hi - lo) / 50.0;
    lo = best_x - w;
    hi = best_x + w;
  }
  double root = 0.5 * (lo + hi);
  CHECK(root == Catch::Approx(-2.903534).margin(1e-5));
  CHECK(g(root) == Catch::Approx(-39.16616570377142).margin(1e-9));
  // and the transformed minimizer sits near -0.58
  ObjectiveSpec spec = make_objective(ObjectiveFamily::StyblinskiTang, 2);
  CHECK(spec.minimizer[0] == Catch::Approx(root / 5.0).margin(1e-7));
}

TEST_CASE("log transform") {
  CHECK(log_transform(0.0, 1e-8) == Catch::Approx(std::log(1e-8)));
  CHECK(log_transform(100.0) == Catch::Approx(4.6051701860880914));
  CHECK_THROWS_AS(log_transform(-0.1), std::invalid_argument);
  Rng rng(109);
  for (int i = 0; i < 200; ++i) {
    double a = rng.uniform(0.0, 50.0), b = a + rng.uniform(0.0, 50.0) + 1e-9;
    CHECK(log_transform(a) < log_transform(b));
  }
}

TEST_CASE("shift variants") {
  SECTION("zero shift is the base objective") {
    ObjectiveSpec base = make_objective(ObjectiveFamily::Rosenbrock, 3);
    ObjectiveSpec shifted = shift_variant(ObjectiveFamily::Rosenbrock, 3,
                                          Vector::Zero(3), "rosenbrock");
    Rng rng(113);
    for (int i = 0; i < 50; ++i) {
      Vector x = oracles::random_points(rng, 1, 3).row(0).transpose();
      CHECK(evaluate(base, x) == evaluate(shifted, x));
    }
  }
  SECTION("S35 and S65 minimizers are symmetric about 0.5") {
    ObjectiveSpec a = make_objective(ObjectiveFamily::S35Rosenbrock, 4);
    ObjectiveSpec b = make_objective(ObjectiveFamily::S65Rosenbrock, 4);
    for (int d = 0; d < 4; ++d)
      CHECK(0.5 * (a.minimizer[d] + b.minimizer[d]) ==
            Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("minimizer pushed outside the domain is rejected") {
    CHECK_THROWS_AS(shift_variant(ObjectiveFamily::Rosenbrock, 3,
                                  Vector::Constant(3, 1.5), "bad"),
                    ConfigError);
  }
  SECTION("shifted variants keep f(0) = 100") {
    ObjectiveSpec spec = make_objective(ObjectiveFamily::SQBranin, 6);
    CHECK(evaluate(spec, Vector::Zero(6)) == Catch::Approx(100.0));
    CHECK(std::abs(evaluate(spec, spec.minimizer)) <= 1e-6);
  }
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(make_objective(ObjectiveFamily::QBranin, 5), ConfigError);
  CHECK_THROWS_AS(parse_objective_family("nope"), ConfigError);
  ObjectiveSpec spec = make_objective(ObjectiveFamily::Levy, 3);
  CHECK_THROWS_AS(evaluate(spec, Vector::Zero(2)), ConfigError);
}

TEST_CASE("external objectives plug in") {
  auto fn = [](const Vector& x) { return x.squaredNorm(); };
  ObjectiveSpec spec =
      make_external(fn, 3, "sphere", Vector(Vector::Zero(3)), 0.0);
  Vector x(3);
  x << 0.5, 0.0, -0.5;
  CHECK(evaluate(spec, x) == Catch::Approx(0.5));
  CHECK(spec.f_star.value() == 0.0);
}
