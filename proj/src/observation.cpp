#include "spdesmc/observation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "spdesmc/io.hpp"

namespace spdesmc {

using nlohmann::json;

MatrixXd local_average_operator(const SpectralGrid& grid, const VectorXd& centers, double width) {
  if (width <= 0.0) throw std::invalid_argument("cell width must be positive");
  const double L = grid.domain_length();
  const double half = 0.5 * width;
  std::vector<double> sorted(centers.data(), centers.data() + centers.size());
  std::sort(sorted.begin(), sorted.end());
  for (size_t j = 0; j < sorted.size(); ++j) {
    if (sorted[j] - half < -0.5 * L - 1e-12 || sorted[j] + half > 0.5 * L + 1e-12)
      throw std::invalid_argument("observation cell outside the domain");
    if (j > 0 && sorted[j] - sorted[j - 1] < width - 1e-12)
      throw std::invalid_argument("observation cells overlap");
  }

  const int M = grid.size();
  const int m = static_cast<int>(centers.size());
  MatrixXd Lmat(m, M);
  for (int j = 0; j < m; ++j) {
    const double c = centers[j];
    Lmat(j, 0) = 1.0 / std::sqrt(L);
    for (int k = 1; k < M; ++k) {
      const int l = grid.freq_of_mode(k);
      const double norm = (k == M - 1) ? 1.0 / std::sqrt(L) : std::sqrt(2.0 / L);
      // cell average of the basis function, by the exact antiderivative
      const double common = norm * L / (M_PI * l * width) * std::sin(M_PI * l * width / L);
      Lmat(j, k) = common * (grid.mode_is_sine(k) ? std::sin(2.0 * M_PI * l * c / L)
                                                  : std::cos(2.0 * M_PI * l * c / L));
    }
  }
  return Lmat;
}

ObservationScheme make_scheme(const SpectralGrid& grid, const VectorXd& centers, double width,
                              std::vector<double> times, MatrixXd sigma) {
  ObservationScheme s;
  s.times = std::move(times);
  s.L = local_average_operator(grid, centers, width);
  s.Sigma = std::move(sigma);
  s.cell_centers = centers;
  s.cell_width = width;
  s.sigma_llt.compute(s.Sigma);
  if (s.sigma_llt.info() != Eigen::Success)
    throw std::invalid_argument("Sigma is not symmetric positive definite");
  s.log_det_sigma = 2.0 * s.sigma_llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return s;
}

VectorXd equispaced_centers(double domain_length, int m) {
  VectorXd centers(m);
  const double spacing = domain_length / m;
  for (int j = 0; j < m; ++j) centers[j] = -0.5 * domain_length + (j + 0.5) * spacing;
  return centers;
}

VectorXd observe(const ObservationScheme& scheme, const ArrayXd& state_modes, RngStream& rng) {
  VectorXd z(scheme.m());
  for (int j = 0; j < scheme.m(); ++j) z[j] = rng.normal();
  return scheme.L * state_modes.matrix() + scheme.sigma_llt.matrixL() * z;
}

double log_obs_density(const ObservationScheme& scheme, const ArrayXd& state_modes,
                       const VectorXd& y_row) {
  const VectorXd resid = y_row - scheme.L * state_modes.matrix();
  const VectorXd w = scheme.sigma_llt.matrixL().solve(resid);
  return -0.5 * (scheme.m() * std::log(2.0 * M_PI) + scheme.log_det_sigma + w.squaredNorm());
}

MatrixXd lql_matrix(const ObservationScheme& scheme, const LinearDynamics& dyn) {
  return scheme.L * dyn.q.matrix().asDiagonal() * scheme.L.transpose();
}

ObservationScheme Dataset::scheme(const SpectralGrid& grid) const {
  return make_scheme(grid, cell_centers, cell_width, times,
                     sigma_scale * MatrixXd::Identity(cell_centers.size(), cell_centers.size()));
}

Dataset Dataset::downsample(int factor) const {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  Dataset out = *this;
  out.times.clear();
  std::vector<int> keep;
  for (int i = 0; i < static_cast<int>(times.size()); ++i)
    if ((i + 1) % factor == 0) keep.push_back(i);
  out.y.resize(keep.size(), y.cols());
  if (has_truth()) out.x_true.resize(keep.size(), x_true.cols());
  for (size_t r = 0; r < keep.size(); ++r) {
    out.times.push_back(times[keep[r]]);
    out.y.row(r) = y.row(keep[r]);
    if (has_truth()) out.x_true.row(r) = x_true.row(keep[r]);
  }
  return out;
}

void Dataset::save(const std::string& path) const {
  json j;
  j["domain_length"] = domain_length;
  j["M"] = M;
  j["dt"] = dt;
  j["seed"] = seed;
  j["times"] = times;
  j["cell_centers"] = std::vector<double>(cell_centers.data(), cell_centers.data() + cell_centers.size());
  j["cell_width"] = cell_width;
  j["sigma_scale"] = sigma_scale;
  j["theta_true"] = {{"amp", theta_true.amp}, {"B", theta_true.B}, {"eta", theta_true.eta},
                     {"zeta", theta_true.zeta}, {"delta", theta_true.delta}};
  j["y"] = matrix_to_rows(y);
  if (has_truth()) j["x_true"] = matrix_to_rows(x_true);
  write_json_file(path, j);
}

Dataset Dataset::load(const std::string& path) {
  const json j = read_json_file(path);
  Dataset ds;
  try {
    ds.domain_length = j.at("domain_length").get<double>();
    ds.M = j.at("M").get<int>();
    ds.dt = j.at("dt").get<double>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.times = j.at("times").get<std::vector<double>>();
    const auto centers = j.at("cell_centers").get<std::vector<double>>();
    ds.cell_centers = Eigen::Map<const VectorXd>(centers.data(), centers.size());
    ds.cell_width = j.at("cell_width").get<double>();
    ds.sigma_scale = j.at("sigma_scale").get<double>();
    const json& th = j.at("theta_true");
    ds.theta_true.amp = th.at("amp").get<double>();
    ds.theta_true.B = th.at("B").get<double>();
    ds.theta_true.eta = th.at("eta").get<double>();
    ds.theta_true.zeta = th.at("zeta").get<double>();
    ds.theta_true.delta = th.at("delta").get<double>();
    ds.y = rows_to_matrix(j.at("y"));
    if (j.contains("x_true")) ds.x_true = rows_to_matrix(j.at("x_true"));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed dataset file: ") + e.what());
  }
  if (ds.y.rows() != static_cast<Eigen::Index>(ds.times.size()) ||
      ds.y.cols() != ds.cell_centers.size())
    throw std::runtime_error("dataset dimensions do not match observation scheme");
  if (ds.has_truth() && (ds.x_true.rows() != ds.y.rows() || ds.x_true.cols() != ds.M))
    throw std::runtime_error("dataset truth dimensions do not match");
  return ds;
}

LinearDynamics dynamics_from_config(const GenerateConfig& cfg, const SpectralGrid& grid) {
  return LinearDynamics::constant_a(
      1.0, matern_spectrum(cfg.sigma0, cfg.rho0, cfg.eta0, 1.0, grid, cfg.scaled_frequencies));
}

Dataset generate_dataset(const GenerateConfig& cfg, MatrixXd* full_path) {
  const SpectralGrid grid = SpectralGrid::build(cfg.domain_length, cfg.M);
  const LinearDynamics dyn = dynamics_from_config(cfg, grid);
  std::vector<double> times = cfg.times;
  if (times.empty())
    for (int i = 1; i <= 20; ++i) times.push_back(static_cast<double>(i));
  const TimeGrid tg = TimeGrid::uniform(times, cfg.dt);
  const Simulator sim(grid, dyn, tg);
  const Drift drift = Drift::amari(cfg.theta, grid);

  Dataset ds;
  ds.domain_length = cfg.domain_length;
  ds.M = cfg.M;
  ds.dt = cfg.dt;
  ds.seed = cfg.seed;
  ds.times = times;
  ds.cell_centers = equispaced_centers(cfg.domain_length, cfg.m_cells);
  ds.cell_width = cfg.cell_width;
  ds.sigma_scale = cfg.sigma_scale;
  ds.theta_true = cfg.theta;
  const ObservationScheme scheme = ds.scheme(grid);

  RngStream path_rng(cfg.seed, {kStreamTruthPath});
  RngStream obs_rng(cfg.seed, {kStreamObsNoise});
  const int n = static_cast<int>(times.size());
  ds.y.resize(n, cfg.m_cells);
  ds.x_true.resize(n, cfg.M);

  if (full_path) full_path->resize(tg.total_steps(), cfg.M);
  ArrayXd state = ArrayXd::Zero(cfg.M);
  double log_psi = 0.0;
  for (int i = 1; i <= n; ++i) {
    MatrixXd rec(tg.substeps[i - 1], cfg.M);
    path_rng.fill_normal(rec);
    state = sim.run_interval(i, state, drift, nullptr, rec, log_psi, full_path);
    ds.x_true.row(i - 1) = state.matrix().transpose();
    ds.y.row(i - 1) = observe(scheme, state, obs_rng).transpose();
  }
  return ds;
}

void write_y_csv(const Dataset& ds, const std::string& path, bool header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  if (header) {
    for (Eigen::Index j = 0; j < ds.y.cols(); ++j) out << (j ? "," : "") << "y" << (j + 1);
    out << "\n";
  }
  write_csv_rows(out, ds.y);
}

}  // namespace spdesmc
