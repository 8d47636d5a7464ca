#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "spdesmc/dynamics.hpp"
#include "spdesmc/rng.hpp"
#include "spdesmc/spectral.hpp"

namespace spdesmc {

using Eigen::VectorXd;

// Linear observation of local spatial averages: row j of L holds the mode
// coefficients of omega_j = 1/|D_j| * indicator of cell j, assembled from
// exact antiderivatives of the basis functions (no grid quadrature).
struct ObservationScheme {
  std::vector<double> times;  // t_1 < ... < t_n
  MatrixXd L;                 // m x M, mode coordinates
  MatrixXd Sigma;             // m x m SPD
  VectorXd cell_centers;
  double cell_width = 0.0;

  Eigen::LLT<MatrixXd> sigma_llt;
  double log_det_sigma = 0.0;

  int n() const { return static_cast<int>(times.size()); }
  int m() const { return static_cast<int>(L.rows()); }
};

MatrixXd local_average_operator(const SpectralGrid& grid, const VectorXd& centers, double width);

ObservationScheme make_scheme(const SpectralGrid& grid, const VectorXd& centers, double width,
                              std::vector<double> times, MatrixXd sigma);

// centers of m equal intervals tiling the domain
VectorXd equispaced_centers(double domain_length, int m);

VectorXd observe(const ObservationScheme& scheme, const ArrayXd& state_modes, RngStream& rng);

double log_obs_density(const ObservationScheme& scheme, const ArrayXd& state_modes,
                       const VectorXd& y_row);

// (L Q L*)[i,j] = sum_l q_l <omega_i, e_l> <omega_j, e_l>, truncated at M modes
MatrixXd lql_matrix(const ObservationScheme& scheme, const LinearDynamics& dyn);

// Synthetic dataset: observation geometry, data matrix and the provenance
// needed to rebuild the generating model. Serialized as a single JSON
// document; doubles survive a save/load round trip bit-exactly.
struct Dataset {
  double domain_length = 0.0;
  int M = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> times;
  VectorXd cell_centers;
  double cell_width = 1.0;
  double sigma_scale = 0.01;
  AmariParams theta_true;
  MatrixXd y;       // n x m
  MatrixXd x_true;  // n x M true state in modes at observation times; may be empty

  bool has_truth() const { return x_true.size() > 0; }
  ObservationScheme scheme(const SpectralGrid& grid) const;

  // keeps every factor-th observation (counted from the end, so t_n stays)
  Dataset downsample(int factor) const;

  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

struct GenerateConfig {
  double domain_length = 20.0 * M_PI;
  int M = 256;
  double dt = 0.02;
  std::vector<double> times;  // defaults to 1..20 when empty
  int m_cells = 15;
  double cell_width = 1.0;
  double sigma_scale = 0.01;
  AmariParams theta;
  double sigma0 = 3e5;
  double rho0 = 5e-5;
  double eta0 = 1.0;
  bool scaled_frequencies = false;
  std::uint64_t seed = 0;
};

LinearDynamics dynamics_from_config(const GenerateConfig& cfg, const SpectralGrid& grid);

// full_path, when given, receives the truth at every substep (total_steps x M)
Dataset generate_dataset(const GenerateConfig& cfg, MatrixXd* full_path = nullptr);

// y as CSV, one row per observation time
void write_y_csv(const Dataset& ds, const std::string& path, bool header = false);

}  // namespace spdesmc
