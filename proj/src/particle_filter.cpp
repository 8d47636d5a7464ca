#include "spdesmc/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spdesmc/io.hpp"
#include "spdesmc/util.hpp"

namespace spdesmc {

PfFlavor pf_flavor_from_string(const std::string& name) {
  if (name == "gpf1") return PfFlavor::Gpf1;
  if (name == "gpf2") return PfFlavor::Gpf2;
  if (name == "bootstrap") return PfFlavor::Bootstrap;
  throw std::invalid_argument("unknown particle filter flavor: " + name);
}

double relative_error(const ArrayXd& estimate, const ArrayXd& truth) {
  const double denom = std::sqrt(truth.square().sum());
  if (denom == 0.0) throw std::invalid_argument("relative_error: zero-norm truth");
  return std::sqrt((estimate - truth).square().sum()) / denom;
}

double ess_from_log_weights(const Eigen::VectorXd& log_weights) {
  const double max_lw = log_weights.maxCoeff();
  if (!std::isfinite(max_lw)) throw std::invalid_argument("ess: all weights are zero");
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index j = 0; j < log_weights.size(); ++j) {
    const double w = std::exp(log_weights[j] - max_lw);
    sum += w;
    sum_sq += w * w;
  }
  return sum * sum / sum_sq;
}

Eigen::VectorXd normalized_weights(const Eigen::VectorXd& log_weights) {
  const double max_lw = log_weights.maxCoeff();
  if (!std::isfinite(max_lw)) throw std::invalid_argument("normalize: all weights are zero");
  Eigen::VectorXd w = (log_weights.array() - max_lw).exp();
  return w / w.sum();
}

std::vector<int> systematic_resample(const Eigen::VectorXd& weights, RngStream& rng) {
  const int J = static_cast<int>(weights.size());
  if (std::abs(weights.sum() - 1.0) > 1e-8 || (weights.array() < -1e-15).any())
    throw std::invalid_argument("systematic_resample: weights must be normalized");
  const double offset = rng.uniform();
  std::vector<int> parents(J);
  double cum = weights[0];
  int j = 0;
  for (int k = 0; k < J; ++k) {
    const double point = (k + offset) / J;
    while (point > cum && j < J - 1) cum += weights[++j];
    parents[k] = j;
  }
  return parents;
}

double adapt_temperature(const Eigen::VectorXd& log_lambda, double psi_current, double alpha,
                         int J) {
  if (psi_current < 0.0 || psi_current >= 1.0)
    throw std::invalid_argument("psi_current must lie in [0, 1)");
  const double spread = log_lambda.maxCoeff() - log_lambda.minCoeff();
  if (!(spread > 1e-14)) return 1.0;

  const double target = alpha * J;
  auto ess_at = [&](double psi) {
    return ess_from_log_weights((psi - psi_current) * log_lambda);
  };
  if (ess_at(1.0) >= target) return 1.0;

  double lo = psi_current, hi = 1.0;
  for (int it = 0; it < 60 && hi - lo > 1e-6; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ess_at(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  // strict progress even when the root sits at psi_current
  return std::min(1.0, std::max(hi, psi_current + 1e-6));
}

IntervalRun gpf_interval(const Simulator& sim, const Drift& drift, const Guide* guide,
                         const ObservationScheme& scheme, const Eigen::VectorXd& y_row,
                         PfFlavor flavor, int interval, const MatrixXd& start_states,
                         std::uint64_t seed, int workers) {
  if (flavor != PfFlavor::Bootstrap && !guide)
    throw std::invalid_argument("gpf_interval: guided flavor needs a guide");
  const int J = static_cast<int>(start_states.rows());
  const int M = static_cast<int>(start_states.cols());
  const TimeGrid& tg = sim.time_grid();
  const int sub = tg.substeps[interval - 1];
  const double t_start = tg.interval_start(interval);

  IntervalRun run;
  run.end_states.resize(J, M);
  run.log_increments.resize(J);
  run.records.assign(J, MatrixXd());
  parallel_for(J, workers, [&](int j) {
    RngStream rng(seed, {kStreamPfPropagate, static_cast<std::uint64_t>(interval),
                         static_cast<std::uint64_t>(j)});
    MatrixXd& rec = run.records[j];
    rec.resize(sub, M);
    rng.fill_normal(rec);
    const ArrayXd start = start_states.row(j).transpose().array();
    double log_psi = 0.0;
    const ArrayXd end = sim.run_interval(interval, start, drift, guide, rec, log_psi);
    run.end_states.row(j) = end.matrix().transpose();
    if (flavor == PfFlavor::Bootstrap)
      run.log_increments[j] = log_obs_density(scheme, end, y_row);
    else
      run.log_increments[j] = guide->log_g(interval, t_start, start) + log_psi;
  });
  return run;
}

namespace {

struct Particle {
  ArrayXd start;      // state at t_{i-1}
  ArrayXd state;      // state at t_i
  MatrixXd record;    // substeps x M standard normals of the current interval
  double log_lambda = 0.0;
};

}  // namespace

FilterResult run_filter(const Dataset& ds, const SpectralGrid& grid, const LinearDynamics& dyn,
                        const Drift& drift, const FilterConfig& cfg) {
  if (cfg.J < 1) throw std::invalid_argument("J must be positive");
  if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0) throw std::invalid_argument("alpha must lie in (0,1)");
  if (cfg.beta <= 0.0 || cfg.beta > 1.0) throw std::invalid_argument("beta must lie in (0,1]");

  const ObservationScheme scheme = ds.scheme(grid);
  const TimeGrid tg = TimeGrid::uniform(ds.times, ds.dt);
  const Simulator sim(grid, dyn, tg);

  std::unique_ptr<Guide> guide;
  switch (cfg.flavor) {
    case PfFlavor::Gpf1:
      guide = std::make_unique<OneStepGuide>(scheme, ds.y, dyn);
      break;
    case PfFlavor::Gpf2:
      guide = std::make_unique<Gpf2Guide>(scheme, ds.y, dyn);
      break;
    case PfFlavor::Bootstrap:
      break;
  }

  const int J = cfg.J;
  const int M = grid.size();
  const ArrayXd x0 = cfg.x0.size() ? cfg.x0 : ArrayXd::Zero(M);
  std::vector<Particle> particles(J);
  for (auto& p : particles) p.state = x0;

  FilterResult res;
  res.method = cfg.flavor == PfFlavor::Gpf1 ? "gpf1"
              : cfg.flavor == PfFlavor::Gpf2 ? "gpf2" : "bootstrap";
  res.times = ds.times;
  res.mean_modes.resize(scheme.n(), M);
  Eigen::VectorXd cum_log_w = Eigen::VectorXd::Zero(J);  // plain-filter mode only

  for (int i = 1; i <= scheme.n(); ++i) {
    const int sub = tg.substeps[i - 1];
    const double t_start = tg.interval_start(i);
    const VectorXd y_row = ds.y.row(i - 1).transpose();

    MatrixXd start_states(J, M);
    for (int j = 0; j < J; ++j) start_states.row(j) = particles[j].state.matrix().transpose();
    IntervalRun prop = gpf_interval(sim, drift, guide.get(), scheme, y_row, cfg.flavor, i,
                                    start_states, cfg.seed, cfg.workers);
    for (int j = 0; j < J; ++j) {
      Particle& p = particles[j];
      p.start = start_states.row(j).transpose().array();
      p.state = prop.end_states.row(j).transpose().array();
      p.record.swap(prop.records[j]);
      p.log_lambda = prop.log_increments[j];
    }

    Eigen::VectorXd log_lambda(J);
    for (int j = 0; j < J; ++j) log_lambda[j] = particles[j].log_lambda;
    res.increment_ess.push_back(ess_from_log_weights(log_lambda));

    std::vector<TemperStage> stages;
    if (cfg.tempering) {
      double psi = 0.0;
      int stage = 0;
      while (psi < 1.0) {
        ++stage;
        for (int j = 0; j < J; ++j) log_lambda[j] = particles[j].log_lambda;
        const double psi_next = adapt_temperature(log_lambda, psi, cfg.alpha, J);
        const Eigen::VectorXd incr = (psi_next - psi) * log_lambda;
        const double max_incr = incr.maxCoeff();
        res.log_evidence +=
            max_incr + std::log((incr.array() - max_incr).exp().sum()) - std::log(double(J));

        TemperStage ts;
        ts.psi = psi_next;

        RngStream res_rng(cfg.seed, {kStreamPfResample, static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(stage)});
        const std::vector<int> parents = systematic_resample(normalized_weights(incr), res_rng);
        std::vector<Particle> next(J);
        for (int k = 0; k < J; ++k) next[k] = particles[parents[k]];
        particles.swap(next);
        ts.post_resample_ess =
            ess_from_log_weights(Eigen::VectorXd::Zero(J));  // uniform after resampling

        std::vector<int> accepted(J, 0);
        parallel_for(J, cfg.workers, [&](int j) {
          Particle& p = particles[j];
          RngStream rng(cfg.seed, {kStreamPfMove, static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(stage)});
          const double keep = std::sqrt(1.0 - cfg.beta * cfg.beta);
          MatrixXd z(sub, M);
          MatrixXd rec_prop(sub, M);
          for (int mv = 0; mv < cfg.n_move; ++mv) {
            rng.fill_normal(z);
            rec_prop = keep * p.record + cfg.beta * z;
            double log_psi = 0.0;
            const ArrayXd state_prop =
                sim.run_interval(i, p.start, drift, guide.get(), rec_prop, log_psi);
            double log_lambda_prop;
            if (cfg.flavor == PfFlavor::Bootstrap)
              log_lambda_prop = log_obs_density(scheme, state_prop, y_row);
            else
              log_lambda_prop = guide->log_g(i, t_start, p.start) + log_psi;
            const double log_accept = psi_next * (log_lambda_prop - p.log_lambda);
            if (std::log(rng.uniform()) < log_accept) {
              p.record.swap(rec_prop);
              p.state = state_prop;
              p.log_lambda = log_lambda_prop;
              ++accepted[j];
            }
          }
        });
        for (int j = 0; j < J; ++j) ts.moves_accepted += accepted[j];
        ts.moves_proposed = J * cfg.n_move;
        stages.push_back(ts);
        psi = psi_next;
      }
      res.mean_modes.row(i - 1).setZero();
      for (const auto& p : particles) res.mean_modes.row(i - 1) += p.state.matrix().transpose();
      res.mean_modes.row(i - 1) /= J;
    } else {
      // plain filter: accumulate weights, resample when ESS drops below alpha J
      const Eigen::VectorXd prev_w = normalized_weights(cum_log_w);
      const double max_inc = log_lambda.maxCoeff();
      res.log_evidence +=
          max_inc + std::log((prev_w.array() * (log_lambda.array() - max_inc).exp()).sum());
      cum_log_w += log_lambda;
      const Eigen::VectorXd w = normalized_weights(cum_log_w);
      res.mean_modes.row(i - 1).setZero();
      for (int j = 0; j < J; ++j)
        res.mean_modes.row(i - 1) += w[j] * particles[j].state.matrix().transpose();
      if (ess_from_log_weights(cum_log_w) < cfg.alpha * J) {
        RngStream res_rng(cfg.seed, {kStreamPfResample, static_cast<std::uint64_t>(i), 0ULL});
        const std::vector<int> parents = systematic_resample(w, res_rng);
        std::vector<Particle> next(J);
        for (int k = 0; k < J; ++k) next[k] = particles[parents[k]];
        particles.swap(next);
        cum_log_w.setZero();
      }
    }
    res.schedules.push_back(std::move(stages));

    if (ds.has_truth()) {
      res.rel_errors.push_back(relative_error(res.mean_modes.row(i - 1).transpose().array(),
                                              ds.x_true.row(i - 1).transpose().array()));
    }
  }
  return res;
}

nlohmann::json FilterResult::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["times"] = times;
  j["log_evidence"] = log_evidence;
  j["increment_ess"] = increment_ess;
  j["mean_modes"] = matrix_to_rows(mean_modes);
  j["rel_errors"] = rel_errors;
  j["schedules"] = nlohmann::json::array();
  for (const auto& stages : schedules) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& st : stages)
      s.push_back({{"psi", st.psi},
                   {"moves_accepted", st.moves_accepted},
                   {"moves_proposed", st.moves_proposed},
                   {"post_resample_ess", st.post_resample_ess}});
    j["schedules"].push_back(s);
  }
  return j;
}

}  // namespace spdesmc
