#include "spdesmc/smoother.hpp"

#include <cmath>
#include <stdexcept>

namespace spdesmc {

MatrixXd pcn_propose(const MatrixXd& W, double beta, RngStream& rng) {
  if (beta <= 0.0 || beta > 1.0) throw std::invalid_argument("pcn_propose: beta must lie in (0,1]");
  const double keep = std::sqrt(1.0 - beta * beta);
  MatrixXd out(W.rows(), W.cols());
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < W.cols(); ++j) out(i, j) = keep * W(i, j) + beta * rng.normal();
  return out;
}

namespace {

Drift drift_from_theta_helper(const std::array<double, 4>& theta, double known_B,
                              const SpectralGrid& grid) {
  AmariParams p;
  p.eta = theta[kEta];
  p.zeta = theta[kZeta];
  p.amp = theta[kAmp];
  p.delta = theta[kDelta];
  p.B = known_B;
  return Drift::amari(p, grid);
}

}  // namespace

std::pair<MatrixXd, double> solution_map(const ArrayXd& x0, const MatrixXd& W, const Drift& drift,
                                         const Simulator& sim, const Guide& guide) {
  MatrixXd path(sim.time_grid().total_steps(), sim.grid().size());
  double log_psi = 0.0;
  sim.run_all(x0, drift, &guide, W, log_psi, &path);
  return {std::move(path), log_psi};
}

std::pair<MatrixXd, double> solution_map(const ArrayXd& x0, const MatrixXd& W,
                                         const std::array<double, 4>& theta, double known_B,
                                         const Simulator& sim, const Guide& guide) {
  return solution_map(x0, W, drift_from_theta_helper(theta, known_B, sim.grid()), sim, guide);
}

SmootherResult run_smoother(const Dataset& ds, const SpectralGrid& grid,
                            const LinearDynamics& dyn, const SmootherConfig& cfg) {
  if (cfg.iters <= 0 || cfg.burnin < 0 || cfg.burnin >= cfg.iters)
    throw std::invalid_argument("smoother: need 0 <= burnin < iters");
  if (cfg.beta <= 0.0 || cfg.beta > 1.0 || cfg.beta0 <= 0.0 || cfg.beta0 > 1.0)
    throw std::invalid_argument("smoother: step sizes must lie in (0,1]");

  const ObservationScheme scheme = ds.scheme(grid);
  const TimeGrid tg = TimeGrid::uniform(ds.times, ds.dt);
  const Simulator sim(grid, dyn, tg);
  const int M = grid.size();
  const int total = tg.total_steps();
  const double known_B = ds.theta_true.B;

  std::unique_ptr<Guide> guide;
  if (cfg.guide == GuideKind::Direct)
    guide = std::make_unique<DirectGuide>(scheme, ds.y, dyn);
  else
    guide = std::make_unique<RiccatiGuide>(scheme, ds.y, dyn, tg, cfg.rk4_step);

  // nu0: centered Gaussian with the stationary per-mode variances q/(2a)
  const ArrayXd nu0_sd = (dyn.q / (2.0 * dyn.a)).sqrt();

  RngStream rng(cfg.seed, {kStreamMcmc});

  auto make_drift = [&](const std::array<double, 4>& theta) {
    return cfg.drift_factory ? cfg.drift_factory(theta)
                             : drift_from_theta_helper(theta, known_B, grid);
  };

  ChainState chain;
  chain.W.resize(total, M);
  rng.fill_normal(chain.W);
  if (cfg.sample_x0) {
    chain.x0 = nu0_sd * rng.normal_vector(M);
  } else {
    chain.x0 = cfg.x0.size() ? cfg.x0 : ArrayXd::Zero(M);
  }
  chain.theta = cfg.theta_init;
  chain.log_step.fill(cfg.s0);
  std::tie(chain.path, chain.log_psi) =
      solution_map(chain.x0, chain.W, make_drift(chain.theta), sim, *guide);
  chain.log_g0 = guide->log_g(1, 0.0, chain.x0);
  double log_rho = cfg.log_rho ? cfg.log_rho(chain.x0) : 0.0;

  SmootherResult res;
  res.theta_trace.resize(cfg.iters, 4);
  if (cfg.sample_x0) res.x0_trace.resize(cfg.iters, M);
  res.log_psi_trace.resize(cfg.iters);
  res.accept_flags.setZero(cfg.iters, 6);
  res.grid_times.reserve(total);
  for (int i = 1; i <= tg.n_intervals(); ++i)
    for (int k = 1; k <= tg.substeps[i - 1]; ++k)
      res.grid_times.push_back(tg.interval_start(i) + k * tg.dt[i - 1]);

  MatrixXd mean_path_acc = MatrixXd::Zero(total, M);
  int mean_path_count = 0;
  const int mean_window_start = cfg.iters - std::min(cfg.final_mean_window, cfg.iters);

  std::array<long, 6> accept_counts{};
  std::array<long, 6> accept_totals{};
  std::array<double, 4> theta_sum{};
  std::array<double, 4> theta_sq_sum{};
  long post_count = 0;

  for (int it = 1; it <= cfg.iters; ++it) {
    // 1. pCN update of the driving noise
    {
      MatrixXd w_prop = pcn_propose(chain.W, cfg.beta, rng);
      auto [path_prop, log_psi_prop] =
          solution_map(chain.x0, w_prop, make_drift(chain.theta), sim, *guide);
      if (it > cfg.burnin) ++accept_totals[0];
      if (std::log(rng.uniform()) < log_psi_prop - chain.log_psi) {
        chain.W.swap(w_prop);
        chain.path.swap(path_prop);
        chain.log_psi = log_psi_prop;
        res.accept_flags(it - 1, 0) = 1;
        if (it > cfg.burnin) ++accept_counts[0];
      }
    }

    // 2. Gibbs update of x0 given the noise
    if (cfg.sample_x0) {
      const double keep = std::sqrt(1.0 - cfg.beta0 * cfg.beta0);
      const ArrayXd x0_prop = keep * chain.x0 + cfg.beta0 * (nu0_sd * rng.normal_vector(M));
      auto [path_prop, log_psi_prop] =
          solution_map(x0_prop, chain.W, make_drift(chain.theta), sim, *guide);
      const double log_g0_prop = guide->log_g(1, 0.0, x0_prop);
      const double log_rho_prop = cfg.log_rho ? cfg.log_rho(x0_prop) : 0.0;
      if (std::isnan(log_rho_prop)) throw std::runtime_error("x0 update: non-finite prior density");
      const double log_ratio = (log_rho_prop - log_rho) + (log_g0_prop - chain.log_g0) +
                               (log_psi_prop - chain.log_psi);
      if (it > cfg.burnin) ++accept_totals[1];
      if (std::log(rng.uniform()) < log_ratio) {
        chain.x0 = x0_prop;
        chain.path.swap(path_prop);
        chain.log_psi = log_psi_prop;
        chain.log_g0 = log_g0_prop;
        log_rho = log_rho_prop;
        res.accept_flags(it - 1, 1) = 1;
        if (it > cfg.burnin) ++accept_counts[1];
      }
    }

    // 3. adaptive scaling Metropolis, one coordinate at a time
    if (cfg.sample_theta) {
      for (int c = 0; c < 4; ++c) {
        std::array<double, 4> theta_prop = chain.theta;
        theta_prop[c] += std::exp(chain.log_step[c]) * rng.normal();
        double accept_prob = 0.0;
        bool in_box = theta_prop[c] >= cfg.prior_box[c][0] && theta_prop[c] <= cfg.prior_box[c][1];
        MatrixXd path_prop;
        double log_psi_prop = 0.0;
        if (in_box) {
          std::tie(path_prop, log_psi_prop) =
              solution_map(chain.x0, chain.W, make_drift(theta_prop), sim, *guide);
          double log_ratio = log_psi_prop - chain.log_psi;  // flat prior inside the box
          if (!cfg.cancel_g_theta) {
            // A and Q do not depend on theta here, so this difference is zero;
            // the hook stays for models where the guide must be rebuilt.
            log_ratio += guide->log_g(1, 0.0, chain.x0) - chain.log_g0;
          }
          accept_prob = std::exp(std::min(0.0, log_ratio));
        }
        if (it > cfg.burnin) ++accept_totals[2 + c];
        if (in_box && rng.uniform() < accept_prob) {
          chain.theta = theta_prop;
          chain.path.swap(path_prop);
          chain.log_psi = log_psi_prop;
          res.accept_flags(it - 1, 2 + c) = 1;
          if (it > cfg.burnin) ++accept_counts[2 + c];
        }
        chain.log_step[c] += std::pow(double(it), -2.0 / 3.0) * (accept_prob - 0.234);
      }
    }

    for (int c = 0; c < 4; ++c) res.theta_trace(it - 1, c) = chain.theta[c];
    if (cfg.sample_x0) res.x0_trace.row(it - 1) = chain.x0.matrix().transpose();
    res.log_psi_trace[it - 1] = chain.log_psi;

    if (it > cfg.burnin) {
      ++post_count;
      for (int c = 0; c < 4; ++c) {
        theta_sum[c] += chain.theta[c];
        theta_sq_sum[c] += chain.theta[c] * chain.theta[c];
      }
      if (cfg.thinning > 0 && (it - cfg.burnin) % cfg.thinning == 0) {
        res.thinned_iters.push_back(it);
        res.thinned_paths.push_back(chain.path);
      }
    }
    if (it > mean_window_start) {
      mean_path_acc += chain.path;
      ++mean_path_count;
    }
  }

  res.mean_path = mean_path_acc / std::max(1, mean_path_count);
  res.final_state = chain;
  res.path_accept_rate = double(accept_counts[0]) / std::max<long>(1, accept_totals[0]);
  res.x0_accept_rate =
      accept_totals[1] ? double(accept_counts[1]) / double(accept_totals[1]) : 0.0;
  for (int c = 0; c < 4; ++c) {
    res.theta_accept_rate[c] =
        accept_totals[2 + c] ? double(accept_counts[2 + c]) / double(accept_totals[2 + c]) : 0.0;
    if (post_count > 0) {
      res.post_mean[c] = theta_sum[c] / post_count;
      const double var =
          std::max(0.0, theta_sq_sum[c] / post_count - res.post_mean[c] * res.post_mean[c]);
      res.post_std[c] = std::sqrt(var);
    }
  }
  return res;
}

}  // namespace spdesmc
