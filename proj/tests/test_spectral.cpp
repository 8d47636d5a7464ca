#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spdesmc/rng.hpp"
#include "spdesmc/spectral.hpp"

using namespace spdesmc;

TEST_CASE("build_grid matches the paper discretization") {
  const auto g = SpectralGrid::build(20.0 * M_PI, 256);
  CHECK(g.dx() == doctest::Approx(0.2454369).epsilon(1e-6));
  CHECK(g.nodes()[0] == doctest::Approx(-10.0 * M_PI));
  CHECK(g.size() == 256);
}

TEST_CASE("build_grid small grid nodes") {
  const auto g = SpectralGrid::build(1.0, 4);
  REQUIRE(g.size() == 4);
  CHECK(g.nodes()[0] == doctest::Approx(-0.5));
  CHECK(g.nodes()[1] == doctest::Approx(-0.25));
  CHECK(g.nodes()[2] == doctest::Approx(0.0));
  CHECK(g.nodes()[3] == doctest::Approx(0.25));
}

TEST_CASE("build_grid rejects bad input") {
  CHECK_THROWS_AS(SpectralGrid::build(20.0 * M_PI, 255), std::invalid_argument);
  CHECK_THROWS_AS(SpectralGrid::build(-1.0, 256), std::invalid_argument);
  CHECK_THROWS_AS(SpectralGrid::build(1.0, 2), std::invalid_argument);
}

TEST_CASE("transforms are mutually inverse") {
  const auto g = SpectralGrid::build(7.5, 64);
  RngStream rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const ArrayXd x = rng.normal_vector(64);
    const ArrayXd back = g.to_field(g.to_modes(x));
    CHECK((back - x).abs().maxCoeff() < 1e-12);
    const ArrayXd modes = g.to_modes(x);
    const ArrayXd modes_back = g.to_modes(g.to_field(modes));
    CHECK((modes_back - modes).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("constant field maps to the constant mode") {
  const auto g = SpectralGrid::build(3.0, 16);
  const ArrayXd field = ArrayXd::Constant(16, 2.5);
  const ArrayXd modes = g.to_modes(field);
  CHECK(modes[0] == doctest::Approx(2.5 * std::sqrt(3.0)).epsilon(1e-12));
  for (int k = 1; k < 16; ++k) CHECK(std::abs(modes[k]) < 1e-12);
}

TEST_CASE("Parseval identity against the quadrature inner product") {
  const auto g = SpectralGrid::build(11.0, 128);
  RngStream rng(7);
  for (int rep = 0; rep < 1000; ++rep) {
    const ArrayXd x = rng.normal_vector(128);
    const ArrayXd y = rng.normal_vector(128);
    const double quad = (x * y).sum() * g.dx();  // L2 inner product by quadrature
    const double spectral = (g.to_modes(x) * g.to_modes(y)).sum();
    const double bound = 1e-10 * std::sqrt((x * x).sum() * g.dx()) *
                         std::sqrt((y * y).sum() * g.dx());
    CHECK(std::abs(quad - spectral) <= bound + 1e-14);
  }
}

TEST_CASE("matern spectrum at the paper parameters") {
  const auto g = SpectralGrid::build(20.0 * M_PI, 256);
  const ArrayXd q = matern_spectrum(3e5, 5e-5, 1.0, 1.0, g);
  // direct evaluation of the eigenvalue formula at l = 1
  const double w = 2.0 * M_PI;
  const double expected = 9e10 * std::pow(4e8 + w * w, -1.5);
  CHECK(q[1] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1.125e-2).epsilon(1e-3));
  CHECK(q[2] == q[1]);  // cosine/sine pair shares its frequency value

  SUBCASE("nonincreasing in frequency") {
    double prev = q[0];
    for (int k = 1; k < 256; k += 2) {
      CHECK(q[k] <= prev + 1e-18);
      prev = q[k];
    }
  }
  SUBCASE("rho -> infinity limit") {
    const ArrayXd qinf = matern_spectrum(3e5, 1e12, 1.0, 1.0, g);
    for (int l = 1; l <= 4; ++l) {
      const double limit = 9e10 * std::pow(2.0 * M_PI * l, -3.0);
      CHECK(qinf[2 * l - 1] == doctest::Approx(limit).epsilon(1e-6));
    }
  }
  SUBCASE("invalid parameters") {
    CHECK_THROWS_AS(matern_spectrum(-1.0, 5e-5, 1.0, 1.0, g), std::invalid_argument);
    CHECK_THROWS_AS(matern_spectrum(3e5, 0.0, 1.0, 1.0, g), std::invalid_argument);
  }
}

TEST_CASE("semigroup factors") {
  const auto g = SpectralGrid::build(4.0, 8);
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, matern_spectrum(1.0, 1.0, 1.0, 1.0, g));
  const ArrayXd f = semigroup_factors(dyn, 0.02);
  for (int k = 0; k < 8; ++k) CHECK(f[k] == doctest::Approx(0.9801987).epsilon(1e-6));
  CHECK((semigroup_factors(dyn, 0.0) == 1.0).all());
  const ArrayXd c1 = semigroup_factors(dyn, 0.01);
  const ArrayXd c2 = semigroup_factors(dyn, 0.02);
  CHECK(((c1 * c1) - c2).abs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(semigroup_factors(dyn, -0.1), std::invalid_argument);
}

TEST_CASE("ou_step_variance") {
  const auto g = SpectralGrid::build(4.0, 8);
  ArrayXd q(8);
  q << 1.0, 0.9, 0.9, 0.5, 0.5, 0.25, 0.25, 0.125;
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, q);

  CHECK((ou_step_variance(dyn, 0.0) == 0.0).all());
  const ArrayXd v = ou_step_variance(dyn, 0.02);
  for (int k = 0; k < 8; ++k) CHECK(v[k] == doctest::Approx(q[k] * 0.0196053).epsilon(1e-5));
  const ArrayXd vinf = ou_step_variance(dyn, 1e4);
  for (int k = 0; k < 8; ++k) CHECK(vinf[k] == doctest::Approx(q[k] / 2.0).epsilon(1e-12));

  SUBCASE("matches quadrature of the stochastic convolution variance") {
    ArrayXd a(8);
    a << 1.0, 2.0, 0.5, 3.0, 1.5, 0.25, 4.0, 2.5;
    const LinearDynamics general(a, q);
    const double delta = 0.37;
    const ArrayXd got = ou_step_variance(general, delta);
    for (int l = 0; l < 8; ++l) {
      const double ref = oracle::simpson(
          [&](double s) { return std::exp(-2.0 * a[l] * s) * q[l]; }, 0.0, delta, 2000);
      CHECK(got[l] == doctest::Approx(ref).epsilon(1e-8));
    }
  }
}

TEST_CASE("dynamics validation") {
  ArrayXd a = ArrayXd::Constant(4, 1.0), q = ArrayXd::Constant(4, 0.5);
  CHECK_NOTHROW(LinearDynamics(a, q));
  a[2] = 0.0;
  CHECK_THROWS_AS(LinearDynamics(a, q), std::invalid_argument);
  a[2] = 1.0;
  q[1] = -0.1;
  CHECK_THROWS_AS(LinearDynamics(a, q), std::invalid_argument);
}
