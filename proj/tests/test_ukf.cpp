#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spdesmc/ukf.hpp"

using namespace spdesmc;

namespace {

Dataset ou_dataset(int M, int n, int m, double dt, std::uint64_t seed) {
  const SpectralGrid grid = SpectralGrid::build(8.0, M);
  ArrayXd q(M);
  for (int l = 0; l < M; ++l) q[l] = 0.7 / (1.0 + grid.freq_of_mode(l));
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, q);

  Dataset ds;
  ds.domain_length = 8.0;
  ds.M = M;
  ds.dt = dt;
  ds.seed = seed;
  for (int i = 1; i <= n; ++i) ds.times.push_back(0.5 * i);
  ds.cell_centers = equispaced_centers(8.0, m);
  ds.cell_width = 1.0;
  ds.sigma_scale = 0.01;
  const ObservationScheme scheme = ds.scheme(grid);
  const TimeGrid tg = TimeGrid::uniform(ds.times, dt);
  const Simulator sim(grid, dyn, tg);
  RngStream path_rng(seed, {kStreamTruthPath});
  RngStream obs_rng(seed, {kStreamObsNoise});
  ds.y.resize(n, m);
  ds.x_true.resize(n, M);
  ArrayXd state = ArrayXd::Zero(M);
  double lp = 0.0;
  for (int i = 1; i <= n; ++i) {
    MatrixXd rec(tg.substeps[i - 1], M);
    path_rng.fill_normal(rec);
    state = sim.run_interval(i, state, Drift::zero(), nullptr, rec, lp);
    ds.x_true.row(i - 1) = state.matrix().transpose();
    ds.y.row(i - 1) = observe(scheme, state, obs_rng).transpose();
  }
  return ds;
}

LinearDynamics ou_dynamics(const Dataset& ds, const SpectralGrid& grid) {
  ArrayXd q(ds.M);
  for (int l = 0; l < ds.M; ++l) q[l] = 0.7 / (1.0 + grid.freq_of_mode(l));
  return LinearDynamics::constant_a(1.0, q);
}

}  // namespace

TEST_CASE("sigma points") {
  UkfConfig cfg;
  SUBCASE("zero covariance collapses onto the mean") {
    const ArrayXd mean = ArrayXd::LinSpaced(4, -1.0, 2.0);
    const auto sp = sigma_points(mean, MatrixXd::Zero(4, 4), cfg);
    for (int p = 0; p < sp.points.rows(); ++p)
      CHECK((sp.points.row(p).transpose().array() - mean).abs().maxCoeff() < 1e-7);
    CHECK(std::abs(sp.wm.sum() - 1.0) < 1e-9);
  }
  SUBCASE("weights sum to one") {
    const auto sp = sigma_points(ArrayXd::Zero(6), MatrixXd::Identity(6, 6), cfg);
    CHECK(std::abs(sp.wm.sum() - 1.0) < 1e-9);
    // weighted mean reproduces the mean exactly
    Eigen::VectorXd wm = Eigen::VectorXd::Zero(6);
    for (int p = 0; p < sp.points.rows(); ++p) wm += sp.wm[p] * sp.points.row(p).transpose();
    CHECK(wm.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("unit spread with kappa = -1, alpha = 1 on M = 2") {
    UkfConfig unit;
    unit.alpha_u = 1.0;
    unit.kappa_u = -1.0;
    const ArrayXd mean = ArrayXd::Constant(2, 0.5);
    const auto sp = sigma_points(mean, MatrixXd::Identity(2, 2), unit);
    CHECK(sp.points.row(1)[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(sp.points.row(1)[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sp.points.row(2)[1] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(sp.points.row(3)[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(sp.points.row(4)[1] == doctest::Approx(-0.5).epsilon(1e-12));
  }
}

TEST_CASE("ukf predict on the linear model") {
  const Dataset ds = ou_dataset(8, 2, 2, 0.1, 301);
  const SpectralGrid grid = SpectralGrid::build(8.0, 8);
  const LinearDynamics dyn = ou_dynamics(ds, grid);
  const TimeGrid tg = TimeGrid::uniform(ds.times, ds.dt);
  const Simulator sim(grid, dyn, tg);
  UkfConfig cfg;

  SUBCASE("matches the exact Kalman prediction") {
    UkfState s;
    RngStream rng(2);
    s.mean = rng.normal_vector(8);
    MatrixXd A(8, 8);
    rng.fill_normal(A);
    s.cov = A * A.transpose() / 8.0 + 0.1 * MatrixXd::Identity(8, 8);
    const UkfState pred = ukf_predict(s, 1, sim, Drift::zero(), cfg);

    // exact OU prediction over the whole interval
    const ArrayXd dec = semigroup_factors(dyn, 0.5);
    const ArrayXd v = ou_step_variance(dyn, 0.5);
    const Eigen::VectorXd mean_ref = (dec * s.mean).matrix();
    const MatrixXd cov_ref =
        dec.matrix().asDiagonal() * s.cov * dec.matrix().asDiagonal() + MatrixXd(v.matrix().asDiagonal());
    CHECK((pred.mean.matrix() - mean_ref).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((pred.cov - cov_ref).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("pure contraction without noise") {
    const LinearDynamics noiseless = LinearDynamics::constant_a(1.0, ArrayXd::Zero(8));
    const Simulator sim0(grid, noiseless, tg);
    UkfState s;
    s.mean = ArrayXd::Constant(8, 1.0);
    s.cov = 0.2 * MatrixXd::Identity(8, 8);
    const UkfState pred = ukf_predict(s, 1, sim0, Drift::zero(), cfg);
    CHECK((pred.cov - 0.2 * std::exp(-1.0) * MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <
          1e-7);
    CHECK((pred.mean - std::exp(-0.5) * 1.0).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("ukf update") {
  const Dataset ds = ou_dataset(8, 1, 2, 0.1, 302);
  const SpectralGrid grid = SpectralGrid::build(8.0, 8);
  const ObservationScheme scheme = ds.scheme(grid);
  RngStream rng(3);
  UkfState s;
  s.mean = rng.normal_vector(8);
  MatrixXd A(8, 8);
  rng.fill_normal(A);
  s.cov = A * A.transpose() / 8.0 + 0.05 * MatrixXd::Identity(8, 8);

  SUBCASE("huge noise leaves the state alone") {
    ObservationScheme wide = scheme;
    wide.Sigma = 1e12 * MatrixXd::Identity(2, 2);
    wide.sigma_llt.compute(wide.Sigma);
    const UkfState post = ukf_update(s, wide, ds.y.row(0).transpose());
    CHECK((post.mean - s.mean).abs().maxCoeff() < 1e-6);
    CHECK((post.cov - s.cov).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("exact observation of all modes pins the mean") {
    ObservationScheme exact = scheme;
    exact.L = MatrixXd::Identity(8, 8);
    exact.Sigma = 1e-12 * MatrixXd::Identity(8, 8);
    exact.sigma_llt.compute(exact.Sigma);
    Eigen::VectorXd y = rng.normal_vector(8).matrix();
    const UkfState post = ukf_update(s, exact, y);
    CHECK((post.mean.matrix() - y).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("symmetry after update") {
    const UkfState post = ukf_update(s, scheme, ds.y.row(0).transpose());
    CHECK((post.cov - post.cov.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("ukf equals the Kalman filter on zero drift") {
  const Dataset ds = ou_dataset(8, 6, 2, 0.05, 303);
  const SpectralGrid grid = SpectralGrid::build(8.0, 8);
  const LinearDynamics dyn = ou_dynamics(ds, grid);
  const ObservationScheme scheme = ds.scheme(grid);
  UkfConfig cfg;
  const UkfResult ur = run_ukf(ds, grid, dyn, Drift::zero(), cfg);
  const auto kal = oracle::kalman_ou(dyn.a, dyn.q, Eigen::VectorXd::Zero(8), MatrixXd::Zero(8, 8),
                                     ds.times, scheme.L, scheme.Sigma, ds.y);
  for (int i = 0; i < 6; ++i) {
    CHECK((ur.filter.mean_modes.row(i).transpose() - kal.filt_mean[i]).cwiseAbs().maxCoeff() <
          1e-8);
    CHECK((ur.covariances[i] - kal.filt_cov[i]).cwiseAbs().maxCoeff() < 1e-8);
  }
}
