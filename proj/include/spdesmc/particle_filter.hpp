#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "spdesmc/guides.hpp"
#include "spdesmc/observation.hpp"
#include "spdesmc/rng.hpp"

namespace spdesmc {

enum class PfFlavor { Gpf1, Gpf2, Bootstrap };

PfFlavor pf_flavor_from_string(const std::string& name);

struct FilterConfig {
  PfFlavor flavor = PfFlavor::Gpf1;
  int J = 100;
  double alpha = 0.75;     // ESS target fraction for tempering / resample threshold
  int n_move = 30;         // pCN move steps per particle and tempering stage
  double beta = 0.1;       // pCN step size of the move proposals
  bool tempering = true;   // false: plain filter with ESS-threshold resampling
  std::uint64_t seed = 0;
  int workers = 1;
  ArrayXd x0;              // Dirac initial state; zero when empty
};

struct TemperStage {
  double psi = 0.0;
  int moves_accepted = 0;
  int moves_proposed = 0;
  double post_resample_ess = 0.0;
};

struct FilterResult {
  std::string method;
  std::vector<double> times;
  MatrixXd mean_modes;  // n x M
  std::vector<double> increment_ess;  // ESS of the raw weight increments at psi = 1
  std::vector<std::vector<TemperStage>> schedules;
  std::vector<double> rel_errors;  // empty when the dataset has no truth
  double log_evidence = 0.0;

  nlohmann::json to_json() const;
};

// |estimate - truth| / |truth| in the L2 (mode) norm
double relative_error(const ArrayXd& estimate, const ArrayXd& truth);

// ESS = 1 / sum w^2 of the normalized weights, computed in log space
double ess_from_log_weights(const Eigen::VectorXd& log_weights);

Eigen::VectorXd normalized_weights(const Eigen::VectorXd& log_weights);

// single-offset systematic resampling; returns J ascending parent indices
std::vector<int> systematic_resample(const Eigen::VectorXd& weights, RngStream& rng);

// Next inverse temperature: the psi in (psi_current, 1] at which the ESS of
// weights Lambda^(psi - psi_current) equals alpha J, found by bisection
// (tolerance 1e-6, <= 60 iterations); 1 when the ESS at psi = 1 stays above.
double adapt_temperature(const Eigen::VectorXd& log_lambda, double psi_current, double alpha,
                         int J);

// One filtering interval: propagates every row of start_states through the
// guided (or unguided, for bootstrap) dynamics and returns end states, the
// log weight increments log g_i(t_{i-1}, x) + log Psi (bootstrap: the
// observation log density), and the per-particle noise records.
struct IntervalRun {
  MatrixXd end_states;  // J x M
  Eigen::VectorXd log_increments;
  std::vector<MatrixXd> records;
};

IntervalRun gpf_interval(const Simulator& sim, const Drift& drift, const Guide* guide,
                         const ObservationScheme& scheme, const Eigen::VectorXd& y_row,
                         PfFlavor flavor, int interval, const MatrixXd& start_states,
                         std::uint64_t seed, int workers = 1);

FilterResult run_filter(const Dataset& ds, const SpectralGrid& grid, const LinearDynamics& dyn,
                        const Drift& drift, const FilterConfig& cfg);

}  // namespace spdesmc
