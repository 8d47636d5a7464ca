#pragma once

#include <vector>

#include <Eigen/Core>

#include "spdesmc/observation.hpp"
#include "spdesmc/particle_filter.hpp"

namespace spdesmc {

struct UkfConfig {
  double alpha_u = 1e-3;
  double beta_u = 2.0;
  double kappa_u = 0.0;
  double jitter = 1e-10;
};

struct SigmaPoints {
  MatrixXd points;  // (2M+1) x M, row 0 is the mean
  VectorXd wm;      // mean weights, sum to 1
  VectorXd wc;      // covariance weights
};

SigmaPoints sigma_points(const ArrayXd& mean, const MatrixXd& cov, const UkfConfig& cfg);

struct UkfState {
  ArrayXd mean;
  MatrixXd cov;
};

// Deterministic sigma-point propagation over observation interval i with the
// additive process noise accumulated per substep.
UkfState ukf_predict(const UkfState& state, int interval, const Simulator& sim,
                     const Drift& drift, const UkfConfig& cfg);

// Exact Kalman measurement update (the observation operator is linear).
UkfState ukf_update(const UkfState& state, const ObservationScheme& scheme,
                    const Eigen::VectorXd& y_row);

struct UkfResult {
  FilterResult filter;
  std::vector<MatrixXd> covariances;  // one per observation time
};

UkfResult run_ukf(const Dataset& ds, const SpectralGrid& grid, const LinearDynamics& dyn,
                  const Drift& drift, const UkfConfig& cfg, const ArrayXd& x0 = {},
                  const MatrixXd& cov0 = {});

}  // namespace spdesmc
