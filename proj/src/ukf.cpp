#include "spdesmc/ukf.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace spdesmc {

SigmaPoints sigma_points(const ArrayXd& mean, const MatrixXd& cov, const UkfConfig& cfg) {
  const int M = static_cast<int>(mean.size());
  const double lambda = cfg.alpha_u * cfg.alpha_u * (M + cfg.kappa_u) - M;
  const double spread = M + lambda;

  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    llt.compute(cov + cfg.jitter * MatrixXd::Identity(M, M));
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("ukf: covariance indefinite after jitter");
  }
  const MatrixXd root = llt.matrixL();

  SigmaPoints sp;
  sp.points.resize(2 * M + 1, M);
  sp.points.row(0) = mean.matrix().transpose();
  const double scale = std::sqrt(spread);
  for (int k = 0; k < M; ++k) {
    sp.points.row(1 + k) = (mean.matrix() + scale * root.col(k)).transpose();
    sp.points.row(1 + M + k) = (mean.matrix() - scale * root.col(k)).transpose();
  }
  sp.wm.resize(2 * M + 1);
  sp.wc.resize(2 * M + 1);
  sp.wm[0] = lambda / spread;
  sp.wc[0] = lambda / spread + (1.0 - cfg.alpha_u * cfg.alpha_u + cfg.beta_u);
  for (int k = 1; k <= 2 * M; ++k) sp.wm[k] = sp.wc[k] = 0.5 / spread;
  return sp;
}

UkfState ukf_predict(const UkfState& state, int interval, const Simulator& sim,
                     const Drift& drift, const UkfConfig& cfg) {
  const TimeGrid& tg = sim.time_grid();
  const int sub = tg.substeps[interval - 1];
  const double dt = tg.dt[interval - 1];
  const LinearDynamics& dyn = sim.dynamics();
  const ArrayXd decay = semigroup_factors(dyn, dt);
  const ArrayXd phi = phi_factors(dyn, dt);
  const ArrayXd qstep = ou_step_variance(dyn, dt);
  const int M = dyn.size();

  UkfState s = state;
  for (int k = 0; k < sub; ++k) {
    SigmaPoints sp = sigma_points(s.mean, s.cov, cfg);
    for (int p = 0; p < sp.points.rows(); ++p) {
      const ArrayXd x = sp.points.row(p).transpose().array();
      ArrayXd next = decay * x;
      if (!drift.is_zero()) next += phi * drift.apply_modes(sim.grid(), x);
      sp.points.row(p) = next.matrix().transpose();
    }
    ArrayXd mean = ArrayXd::Zero(M);
    for (int p = 0; p < sp.points.rows(); ++p)
      mean += sp.wm[p] * sp.points.row(p).transpose().array();
    MatrixXd cov = qstep.matrix().asDiagonal();
    for (int p = 0; p < sp.points.rows(); ++p) {
      const Eigen::VectorXd d = sp.points.row(p).transpose() - mean.matrix();
      cov += sp.wc[p] * d * d.transpose();
    }
    s.mean = mean;
    s.cov = 0.5 * (cov + cov.transpose());
  }
  return s;
}

UkfState ukf_update(const UkfState& state, const ObservationScheme& scheme,
                    const Eigen::VectorXd& y_row) {
  const MatrixXd& L = scheme.L;
  const MatrixXd S = L * state.cov * L.transpose() + scheme.Sigma;
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("ukf: innovation covariance not SPD");
  const MatrixXd K = llt.solve(L * state.cov).transpose();

  UkfState out;
  out.mean = (state.mean.matrix() + K * (y_row - L * state.mean.matrix())).array();
  const MatrixXd A = MatrixXd::Identity(state.cov.rows(), state.cov.cols()) - K * L;
  MatrixXd cov = A * state.cov * A.transpose() + K * scheme.Sigma * K.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

UkfResult run_ukf(const Dataset& ds, const SpectralGrid& grid, const LinearDynamics& dyn,
                  const Drift& drift, const UkfConfig& cfg, const ArrayXd& x0,
                  const MatrixXd& cov0) {
  const ObservationScheme scheme = ds.scheme(grid);
  const TimeGrid tg = TimeGrid::uniform(ds.times, ds.dt);
  const Simulator sim(grid, dyn, tg);
  const int M = grid.size();

  UkfState s;
  s.mean = x0.size() ? x0 : ArrayXd::Zero(M);
  s.cov = cov0.size() ? cov0 : MatrixXd::Zero(M, M);

  UkfResult out;
  out.filter.method = "ukf";
  out.filter.times = ds.times;
  out.filter.mean_modes.resize(scheme.n(), M);
  for (int i = 1; i <= scheme.n(); ++i) {
    s = ukf_predict(s, i, sim, drift, cfg);
    s = ukf_update(s, scheme, ds.y.row(i - 1).transpose());
    out.filter.mean_modes.row(i - 1) = s.mean.matrix().transpose();
    out.covariances.push_back(s.cov);
    if (ds.has_truth())
      out.filter.rel_errors.push_back(relative_error(
          s.mean, ds.x_true.row(i - 1).transpose().array()));
  }
  return out;
}

}  // namespace spdesmc
