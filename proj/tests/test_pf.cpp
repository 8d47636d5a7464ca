#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "spdesmc/particle_filter.hpp"
#include "spdesmc/smoother.hpp"

using namespace spdesmc;

namespace {

Dataset linear_dataset(int M, int n, int m, double dt, std::uint64_t seed) {
  // zero-drift data: OU truth observed through local averages
  const SpectralGrid grid = SpectralGrid::build(8.0, M);
  ArrayXd q(M);
  for (int l = 0; l < M; ++l) q[l] = 0.8 / (1.0 + grid.freq_of_mode(l));
  const LinearDynamics dyn = LinearDynamics::constant_a(1.0, q);

  Dataset ds;
  ds.domain_length = 8.0;
  ds.M = M;
  ds.dt = dt;
  ds.seed = seed;
  for (int i = 1; i <= n; ++i) ds.times.push_back(double(i));
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
  double log_psi = 0.0;
  for (int i = 1; i <= n; ++i) {
    MatrixXd rec(tg.substeps[i - 1], M);
    path_rng.fill_normal(rec);
    state = sim.run_interval(i, state, Drift::zero(), nullptr, rec, log_psi);
    ds.x_true.row(i - 1) = state.matrix().transpose();
    ds.y.row(i - 1) = observe(scheme, state, obs_rng).transpose();
  }
  return ds;
}

LinearDynamics dataset_dynamics(const Dataset& ds, const SpectralGrid& grid) {
  ArrayXd q(ds.M);
  for (int l = 0; l < ds.M; ++l) q[l] = 0.8 / (1.0 + grid.freq_of_mode(l));
  return LinearDynamics::constant_a(1.0, q);
}

}  // namespace

TEST_CASE("effective sample size") {
  Eigen::VectorXd lw(4);
  lw << 0.3, 0.3, 0.3, 0.3;
  CHECK(ess_from_log_weights(lw) == doctest::Approx(4.0).epsilon(1e-12));
  lw << 0.0, -1e30, -1e30, -1e30;
  CHECK(ess_from_log_weights(lw) == doctest::Approx(1.0).epsilon(1e-12));
  lw << std::log(0.5), std::log(0.5), -1e30, -1e30;
  CHECK(ess_from_log_weights(lw) == doctest::Approx(2.0).epsilon(1e-12));
  lw.setConstant(-std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(ess_from_log_weights(lw), std::invalid_argument);
}

TEST_CASE("systematic resampling") {
  RngStream rng(3);
  SUBCASE("degenerate weights") {
    Eigen::VectorXd w(4);
    w << 1.0, 0.0, 0.0, 0.0;
    const auto parents = systematic_resample(w, rng);
    for (int p : parents) CHECK(p == 0);
  }
  SUBCASE("uniform weights keep everyone") {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(4, 0.25);
    const auto parents = systematic_resample(w, rng);
    CHECK(parents == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("deterministic offspring counts") {
    // w = (0.7, 0.3) at J = 10 gives counts {7, 3} for every uniform offset
    Eigen::VectorXd w2(10);
    w2 << 0.7, 0.3, 0, 0, 0, 0, 0, 0, 0, 0;
    std::map<int, int> counts;
    for (int rep = 0; rep < 25; ++rep) {
      RngStream r3(1000 + rep);
      counts.clear();
      for (int p : systematic_resample(w2, r3)) counts[p]++;
      CHECK(counts[0] == 7);
      CHECK(counts[1] == 3);
    }
  }
  SUBCASE("offspring counts stay within one of J w_j and ascending order") {
    RngStream gen(9);
    Eigen::VectorXd lw = gen.normal_vector(16).matrix();
    const Eigen::VectorXd w = normalized_weights(lw);
    RngStream r4(77);
    const auto parents = systematic_resample(w, r4);
    std::map<int, int> counts;
    for (size_t k = 1; k < parents.size(); ++k) CHECK(parents[k] >= parents[k - 1]);
    for (int p : parents) counts[p]++;
    for (int j = 0; j < 16; ++j) {
      const double expected = 16 * w[j];
      CHECK(counts[j] >= std::floor(expected) - 1e-9);
      CHECK(counts[j] <= std::ceil(expected) + 1e-9);
    }
  }
  SUBCASE("unnormalized input is rejected") {
    Eigen::VectorXd w(3);
    w << 0.5, 0.4, 0.3;
    CHECK_THROWS_AS(systematic_resample(w, rng), std::invalid_argument);
  }
}

TEST_CASE("temperature adaptation") {
  SUBCASE("equal weights jump straight to one") {
    Eigen::VectorXd ll = Eigen::VectorXd::Constant(8, 2.5);
    CHECK(adapt_temperature(ll, 0.0, 0.9, 8) == 1.0);
  }
  SUBCASE("high ESS at one returns exactly one") {
    Eigen::VectorXd ll(4);
    ll << 0.01, 0.0, -0.01, 0.0;
    CHECK(adapt_temperature(ll, 0.3, 0.5, 4) == 1.0);
  }
  SUBCASE("two-particle bisection against the closed form") {
    Eigen::VectorXd ll(2);
    ll << 1.0, 0.0;  // Lambda = (e, 1)
    // ESS(delta) = 1.8 solves (u+1)^2 = 1.8 (u^2+1), u = e^delta -> u = 2
    const double psi = adapt_temperature(ll, 0.0, 0.9, 2);
    CHECK(psi == doctest::Approx(std::log(2.0)).epsilon(2e-6));
  }
  SUBCASE("monotone progression reaching exactly one") {
    RngStream rng(5);
    Eigen::VectorXd ll = (3.0 * rng.normal_vector(32)).matrix();
    double psi = 0.0;
    int stages = 0;
    while (psi < 1.0) {
      const double next = adapt_temperature(ll, psi, 0.75, 32);
      CHECK(next > psi);
      psi = next;
      REQUIRE(++stages < 200);
    }
    CHECK(psi == 1.0);
  }
}

TEST_CASE("guided interval increments") {
  const Dataset ds = linear_dataset(16, 2, 2, 0.1, 101);
  const SpectralGrid grid = SpectralGrid::build(ds.domain_length, ds.M);
  const LinearDynamics dyn = dataset_dynamics(ds, grid);
  const ObservationScheme scheme = ds.scheme(grid);
  const TimeGrid tg = TimeGrid::uniform(ds.times, ds.dt);
  const Simulator sim(grid, dyn, tg);
  const OneStepGuide guide(scheme, ds.y, dyn);

  SUBCASE("zero drift and common start give zero-variance increments") {
    const int J = 32;
    MatrixXd starts = MatrixXd::Zero(J, 16);
    const IntervalRun run = gpf_interval(sim, Drift::zero(), &guide, scheme,
                                         ds.y.row(0).transpose(), PfFlavor::Gpf1, 1, starts, 7);
    const double mean = run.log_increments.mean();
    double var = 0.0;
    for (int j = 0; j < J; ++j) var += std::pow(run.log_increments[j] - mean, 2);
    var /= J;
    CHECK(var <= 1e-20);
    CHECK(mean == doctest::Approx(guide.log_g(1, 0.0, ArrayXd::Zero(16))).epsilon(1e-12));
  }
  SUBCASE("bootstrap increments are observation densities") {
    const int J = 8;
    MatrixXd starts = MatrixXd::Zero(J, 16);
    const IntervalRun run = gpf_interval(sim, Drift::zero(), nullptr, scheme,
                                         ds.y.row(0).transpose(), PfFlavor::Bootstrap, 1, starts, 7);
    for (int j = 0; j < J; ++j) {
      const ArrayXd end = run.end_states.row(j).transpose().array();
      CHECK(run.log_increments[j] ==
            doctest::Approx(log_obs_density(scheme, end, ds.y.row(0).transpose())).epsilon(1e-12));
    }
  }
  SUBCASE("worker count does not change the draw") {
    MatrixXd starts = MatrixXd::Zero(6, 16);
    const IntervalRun a = gpf_interval(sim, Drift::zero(), &guide, scheme,
                                       ds.y.row(0).transpose(), PfFlavor::Gpf1, 1, starts, 7, 1);
    const IntervalRun b = gpf_interval(sim, Drift::zero(), &guide, scheme,
                                       ds.y.row(0).transpose(), PfFlavor::Gpf1, 1, starts, 7, 2);
    CHECK((a.end_states - b.end_states).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.log_increments - b.log_increments).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("filter runs deterministically and tempering reaches one") {
  const Dataset ds = linear_dataset(16, 3, 2, 0.1, 102);
  const SpectralGrid grid = SpectralGrid::build(ds.domain_length, ds.M);
  const LinearDynamics dyn = dataset_dynamics(ds, grid);

  FilterConfig fc;
  fc.flavor = PfFlavor::Gpf1;
  fc.J = 24;
  fc.alpha = 0.75;
  fc.n_move = 3;
  fc.beta = 0.2;
  fc.seed = 11;

  const FilterResult a = run_filter(ds, grid, dyn, Drift::zero(), fc);
  const FilterResult b = run_filter(ds, grid, dyn, Drift::zero(), fc);
  CHECK((a.mean_modes - b.mean_modes).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.log_evidence == b.log_evidence);

  fc.workers = 2;
  const FilterResult c = run_filter(ds, grid, dyn, Drift::zero(), fc);
  CHECK((a.mean_modes - c.mean_modes).cwiseAbs().maxCoeff() == 0.0);

  for (const auto& stages : a.schedules) {
    REQUIRE(!stages.empty());
    double prev = 0.0;
    for (const auto& st : stages) {
      CHECK(st.psi > prev);
      prev = st.psi;
      CHECK(st.post_resample_ess == doctest::Approx(double(fc.J)).epsilon(1e-12));
    }
    CHECK(stages.back().psi == 1.0);
  }
  CHECK(a.rel_errors.size() == 3);
}

TEST_CASE("filter mean tracks the Kalman filter on the linear model") {
  const Dataset ds = linear_dataset(8, 3, 2, 0.05, 103);
  const SpectralGrid grid = SpectralGrid::build(ds.domain_length, ds.M);
  const LinearDynamics dyn = dataset_dynamics(ds, grid);
  const ObservationScheme scheme = ds.scheme(grid);

  FilterConfig fc;
  fc.flavor = PfFlavor::Gpf1;
  fc.J = 1500;
  fc.n_move = 2;
  fc.beta = 0.5;
  fc.seed = 12;
  fc.workers = 2;
  const FilterResult fr = run_filter(ds, grid, dyn, Drift::zero(), fc);

  const auto kal = oracle::kalman_ou(dyn.a, dyn.q, Eigen::VectorXd::Zero(8), MatrixXd::Zero(8, 8),
                                     ds.times, scheme.L, scheme.Sigma, ds.y);
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd diff = fr.mean_modes.row(i).transpose() - kal.filt_mean[i];
    const double bound = 4.0 * std::sqrt(kal.filt_cov[i].trace() / fc.J);
    CHECK(diff.norm() < bound);
  }
}

TEST_CASE("pCN moves preserve the noise law when the target is flat") {
  // Lambda is constant for zero drift started from a common state, so every
  // move is accepted and the record must stay standard normal.
  RngStream rng(55);
  const int rows = 80, cols = 800;  // 64k entries
  MatrixXd w(rows, cols);
  rng.fill_normal(w);
  const double beta = 0.3;
  const int n_moves = 10000;
  for (int mv = 0; mv < n_moves; ++mv) w = pcn_propose(w, beta, rng);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / (rows * cols - 1);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}
