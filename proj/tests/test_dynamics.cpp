#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spdesmc/dynamics.hpp"
#include "spdesmc/guides.hpp"
#include "spdesmc/rng.hpp"

using namespace spdesmc;

namespace {

// guide stub returning a fixed score, for Psi-quadrature checks
class ConstantScoreGuide : public Guide {
 public:
  ConstantScoreGuide(std::vector<double> times, ArrayXd value)
      : Guide(std::move(times)), value_(std::move(value)) {}
  void score_into(int, double, const ArrayXd&, ArrayXd& out) const override { out = value_; }
  double log_g(int, double, const ArrayXd&) const override { return 0.0; }

 private:
  ArrayXd value_;
};

AmariParams paper_params(double delta) {
  AmariParams p;
  p.amp = 4.0;
  p.B = 1.5;
  p.eta = 10.0;
  p.zeta = 0.5;
  p.delta = delta;
  return p;
}

}  // namespace

TEST_CASE("activation properties") {
  const AmariParams p = paper_params(0.0);
  CHECK(activation(p, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(activation(p, 1e3) == doctest::Approx(std::exp(0.5) / (1.0 + std::exp(0.5))).epsilon(1e-9));
  CHECK(activation(p, 1e3) == doctest::Approx(0.62246).epsilon(1e-4));
  CHECK(activation(p, -1e3) == doctest::Approx(-1.0 / (1.0 + std::exp(0.5))).epsilon(1e-9));
  double prev = activation(p, -1.0);
  for (double x = -0.9; x < 1.0; x += 0.1) {
    const double cur = activation(p, x);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("connectivity kernel values") {
  AmariParams p = paper_params(0.0);
  CHECK(amari_kernel(p, 0.0) ==
        doctest::Approx(4.0 / std::sqrt(M_PI) * (1.0 - 1.0 / 1.5)).epsilon(1e-12));
  CHECK(amari_kernel(p, 0.0) == doctest::Approx(0.75225).epsilon(1e-4));

  SUBCASE("wrapped-distance table is symmetric") {
    const auto g = SpectralGrid::build(20.0 * M_PI, 64);
    p.delta = 0.5;
    const double L = g.domain_length();
    for (int k = 1; k < 64; ++k) {
      const double r1 = std::min(k * g.dx(), L - k * g.dx());
      const double r2 = std::min((64 - k) * g.dx(), L - (64 - k) * g.dx());
      CHECK(amari_kernel(p, r1) == doctest::Approx(amari_kernel(p, r2)).epsilon(1e-14));
    }
  }
  SUBCASE("B = 1 cancels the two Gaussians") {
    p.B = 1.0;
    p.delta = 0.0;
    for (double r = 0.0; r < 3.0; r += 0.37) CHECK(std::abs(amari_kernel(p, r)) < 1e-15);
  }
}

TEST_CASE("apply_F against the quadrature double loop") {
  const auto g = SpectralGrid::build(20.0 * M_PI, 64);
  RngStream rng(11);
  for (double delta : {0.0, 0.5}) {
    const AmariParams p = paper_params(delta);
    const Drift drift = Drift::amari(p, g);
    const ArrayXd field = 0.5 * rng.normal_vector(64);
    const ArrayXd fast = drift.apply_field(g, field);

    ArrayXd slow(64);
    const double L = g.domain_length();
    for (int i = 0; i < 64; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 64; ++j) {
        const double dist = std::abs(g.nodes()[i] - g.nodes()[j]);
        const double wrapped = std::min(dist, L - dist);
        acc += amari_kernel(p, wrapped) * activation(p, field[j]);
      }
      slow[i] = acc * g.dx();
    }
    const double scale = slow.abs().maxCoeff();
    CHECK((fast - slow).abs().maxCoeff() / scale < 1e-8);
  }
}

TEST_CASE("mode-space drift equals the transformed field-space drift") {
  const auto g = SpectralGrid::build(20.0 * M_PI, 64);
  RngStream rng(29);
  for (double delta : {0.0, 0.5}) {
    const Drift drift = Drift::amari(paper_params(delta), g);
    const ArrayXd modes = rng.normal_vector(64);
    const ArrayXd fused = drift.apply_modes(g, modes);
    const ArrayXd via_field = g.to_modes(drift.apply_field(g, g.to_field(modes)));
    const double scale = via_field.abs().maxCoeff();
    CHECK((fused - via_field).abs().maxCoeff() / scale < 1e-12);
  }
}

TEST_CASE("zero field is a fixed point of the Amari drift") {
  const auto g = SpectralGrid::build(20.0 * M_PI, 32);
  const Drift drift = Drift::amari(paper_params(0.5), g);
  CHECK(drift.apply_field(g, ArrayXd::Zero(32)).abs().maxCoeff() < 1e-14);
  CHECK(drift.apply_modes(g, ArrayXd::Zero(32)).abs().maxCoeff() < 1e-14);
  CHECK(Drift::zero().apply_modes(g, ArrayXd::Random(32)).abs().maxCoeff() == 0.0);
}

TEST_CASE("exp_euler_step") {
  const auto g = SpectralGrid::build(4.0, 8);
  ArrayXd q = ArrayXd::Constant(8, 0.3);
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, q);
  RngStream rng(3);
  const ArrayXd x = rng.normal_vector(8);
  const ArrayXd zero = ArrayXd::Zero(8);

  SUBCASE("pure decay") {
    const ArrayXd next = exp_euler_step(x, 0.02, zero, nullptr, zero, dyn);
    CHECK((next - 0.9801987 * x).abs().maxCoeff() < 1e-6);
  }
  SUBCASE("continuity at small steps") {
    const ArrayXd next = exp_euler_step(x, 1e-12, zero, nullptr, zero, dyn);
    CHECK((next - x).abs().maxCoeff() < 1e-10);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(exp_euler_step(x, -0.1, zero, nullptr, zero, dyn), std::invalid_argument);
    CHECK_THROWS_AS(exp_euler_step(x, 0.1, ArrayXd::Zero(7), nullptr, zero, dyn),
                    std::invalid_argument);
  }
  SUBCASE("one-step noise variance over 1e5 draws") {
    RngStream noise_rng(99);
    const double delta = 0.25;
    const ArrayXd v = ou_step_variance(dyn, delta);
    const int N = 100000;
    ArrayXd sum = ArrayXd::Zero(8), sum_sq = ArrayXd::Zero(8);
    for (int rep = 0; rep < N; ++rep) {
      const ArrayXd z = noise_rng.normal_vector(8);
      const ArrayXd next = exp_euler_step(zero, delta, zero, nullptr, z, dyn);
      sum += next;
      sum_sq += next * next;
    }
    const ArrayXd var = sum_sq / N - (sum / N).square();
    for (int l = 0; l < 8; ++l) {
      const double mc_sigma = v[l] * std::sqrt(2.0 / (N - 1));
      CHECK(std::abs(var[l] - v[l]) < 3.0 * mc_sigma);
    }
  }
}

TEST_CASE("time grid construction") {
  const TimeGrid tg = TimeGrid::uniform({1.0, 2.0, 3.5}, 0.4);
  CHECK(tg.n_intervals() == 3);
  CHECK(tg.substeps[0] == 3);
  CHECK(tg.dt[0] == doctest::Approx(1.0 / 3.0));
  CHECK(tg.substeps[2] == 4);
  CHECK(tg.total_steps() == 3 + 3 + 4);
  CHECK(tg.interval_start(1) == 0.0);
  CHECK(tg.interval_start(3) == 2.0);
  CHECK_THROWS_AS(TimeGrid::uniform({1.0, 1.0}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid::uniform({1.0, 2.0}, 0.0), std::invalid_argument);
}

TEST_CASE("simulate_path log Psi accounting") {
  const auto g = SpectralGrid::build(4.0, 8);
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, ArrayXd::Constant(8, 0.3));
  const TimeGrid tg = TimeGrid::uniform({1.0}, 1.0);  // a single step
  const Simulator sim(g, dyn, tg);
  RngStream rng(5);
  const ArrayXd x0 = rng.normal_vector(8);
  MatrixXd rec(1, 8);
  rng.fill_normal(rec);

  SUBCASE("zero drift gives log Psi = 0 exactly") {
    ConstantScoreGuide guide({1.0}, ArrayXd::Constant(8, 0.7));
    double log_psi = 0.0;
    sim.run_interval(1, x0, Drift::zero(), &guide, rec, log_psi);
    CHECK(log_psi == 0.0);
  }
  SUBCASE("no guide gives log Psi = 0") {
    const Drift drift = Drift::custom([](const ArrayXd& x) { return ArrayXd(0.1 * x); });
    double log_psi = 0.0;
    sim.run_interval(1, x0, drift, nullptr, rec, log_psi);
    CHECK(log_psi == 0.0);
  }
  SUBCASE("single step equals dt <F, G>") {
    const ArrayXd fval = ArrayXd::Constant(8, 0.25);
    const ArrayXd gval = ArrayXd::Constant(8, -0.5);
    const Drift drift = Drift::custom([fval](const ArrayXd&) { return fval; });
    ConstantScoreGuide guide({1.0}, gval);
    double log_psi = 0.0;
    sim.run_interval(1, x0, drift, &guide, rec, log_psi);
    CHECK(log_psi == doctest::Approx(1.0 * (fval * gval).sum()).epsilon(1e-14));
  }
}

TEST_CASE("zero-drift marginals match the analytic OU law") {
  const auto g = SpectralGrid::build(4.0, 8);
  ArrayXd q(8);
  q << 1.0, 0.8, 0.8, 0.5, 0.5, 0.3, 0.3, 0.2;
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, q);
  const TimeGrid tg = TimeGrid::uniform({0.5}, 0.05);
  const Simulator sim(g, dyn, tg);
  const ArrayXd x0 = ArrayXd::Constant(8, 1.5);

  const int N = 100000;
  ArrayXd sum = ArrayXd::Zero(8), sum_sq = ArrayXd::Zero(8);
  RngStream rng(123);
  MatrixXd rec(tg.substeps[0], 8);
  for (int rep = 0; rep < N; ++rep) {
    rng.fill_normal(rec);
    double log_psi = 0.0;
    const ArrayXd xt = sim.run_interval(1, x0, Drift::zero(), nullptr, rec, log_psi);
    sum += xt;
    sum_sq += xt * xt;
  }
  const ArrayXd mean = sum / N;
  const ArrayXd var = sum_sq / N - mean.square();
  const double t = 0.5;
  for (int l = 0; l < 8; ++l) {
    const double mean_ref = std::exp(-t) * x0[l];
    const double var_ref = q[l] * (1.0 - std::exp(-2.0 * t)) / 2.0;
    CHECK(std::abs(mean[l] - mean_ref) < 4.0 * std::sqrt(var_ref / N));
    CHECK(std::abs(var[l] - var_ref) < 4.0 * var_ref * std::sqrt(2.0 / (N - 1)));
  }
}
