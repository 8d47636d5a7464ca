#include "spdesmc/dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include "spdesmc/guides.hpp"

namespace spdesmc {

void AmariParams::validate() const {
  if (amp <= 0.0 || B <= 0.0 || eta <= 0.0 || zeta <= 0.0)
    throw std::invalid_argument("AmariParams: amp, B, eta, zeta must be positive");
}

double activation(const AmariParams& p, double x) {
  return 1.0 / (1.0 + std::exp(-p.eta * x + p.zeta)) - 1.0 / (1.0 + std::exp(p.zeta));
}

double amari_kernel(const AmariParams& p, double r) {
  const double s = (r - p.delta);
  const double sb = s / p.B;
  const double c = p.amp / std::sqrt(M_PI);
  return c * std::exp(-s * s) - c / p.B * std::exp(-sb * sb);
}

Drift Drift::zero() { return Drift{}; }

Drift Drift::amari(const AmariParams& params, const SpectralGrid& grid) {
  params.validate();
  Drift d;
  d.kind_ = Kind::Amari;
  d.params_ = params;
  const int M = grid.size();
  const double L = grid.domain_length();
  ArrayXd table(M);
  for (int j = 0; j < M; ++j) {
    const double dist = j * grid.dx();
    const double wrapped = std::min(dist, L - dist);
    table[j] = amari_kernel(params, wrapped);
  }
  d.kernel_dft_ = grid.dft_real(table);
  d.kernel_dft_dx_ = d.kernel_dft_ * grid.dx();
  return d;
}

Drift Drift::custom(ModeMap map) {
  Drift d;
  d.kind_ = Kind::Custom;
  d.map_ = std::move(map);
  return d;
}

ArrayXd Drift::apply_field(const SpectralGrid& grid, const ArrayXd& field) const {
  switch (kind_) {
    case Kind::Zero:
      return ArrayXd::Zero(field.size());
    case Kind::Amari: {
      if (field.size() != grid.size()) throw std::invalid_argument("field length != M");
      ArrayXd activated(field.size());
      for (Eigen::Index k = 0; k < field.size(); ++k) activated[k] = activation(params_, field[k]);
      return grid.dx() * grid.convolve(kernel_dft_, activated);
    }
    case Kind::Custom:
      return grid.to_field(map_(grid.to_modes(field)));
  }
  return {};
}

namespace {

void activation_block(const void* ctx, double* xs, int n) {
  const AmariParams& p = *static_cast<const AmariParams*>(ctx);
  Eigen::Map<ArrayXd> v(xs, n);
  const double offset = 1.0 / (1.0 + std::exp(p.zeta));
  v = 1.0 / (1.0 + (-p.eta * v + p.zeta).exp()) - offset;
}

}  // namespace

ArrayXd Drift::apply_modes(const SpectralGrid& grid, const ArrayXd& modes) const {
  ArrayXd out;
  apply_modes_into(grid, modes, out);
  return out;
}

void Drift::apply_modes_into(const SpectralGrid& grid, const ArrayXd& modes, ArrayXd& out) const {
  switch (kind_) {
    case Kind::Zero:
      out = ArrayXd::Zero(modes.size());
      return;
    case Kind::Amari:
      grid.convolved_pointwise_image(modes, &activation_block, &params_, kernel_dft_dx_, out);
      return;
    case Kind::Custom:
      out = map_(modes);
      return;
  }
}

TimeGrid TimeGrid::uniform(std::vector<double> obs_times, double dt_target) {
  if (obs_times.empty()) throw std::invalid_argument("empty observation times");
  if (dt_target <= 0.0) throw std::invalid_argument("dt_target must be positive");
  double prev = 0.0;
  for (double t : obs_times) {
    if (t <= prev) throw std::invalid_argument("observation times must be strictly increasing and positive");
    prev = t;
  }
  TimeGrid tg;
  tg.obs_times = std::move(obs_times);
  prev = 0.0;
  for (double t : tg.obs_times) {
    const double len = t - prev;
    const int sub = std::max(1, static_cast<int>(std::ceil(len / dt_target - 1e-9)));
    tg.substeps.push_back(sub);
    tg.dt.push_back(len / sub);
    prev = t;
  }
  return tg;
}

int TimeGrid::total_steps() const {
  int total = 0;
  for (int s : substeps) total += s;
  return total;
}

int TimeGrid::first_step_of_interval(int i) const {
  int offset = 0;
  for (int k = 0; k < i - 1; ++k) offset += substeps[k];
  return offset;
}

ArrayXd exp_euler_step(const ArrayXd& state, double delta, const ArrayXd& drift_value,
                       const ArrayXd* score_value, const ArrayXd& noise,
                       const LinearDynamics& dyn) {
  if (delta <= 0.0) throw std::invalid_argument("delta must be positive");
  if (state.size() != dyn.size() || drift_value.size() != state.size() ||
      noise.size() != state.size() || (score_value && score_value->size() != state.size()))
    throw std::invalid_argument("exp_euler_step: length mismatch");
  const ArrayXd decay = semigroup_factors(dyn, delta);
  const ArrayXd phi = phi_factors(dyn, delta);
  const ArrayXd sd = ou_step_variance(dyn, delta).sqrt();
  ArrayXd forcing = drift_value;
  if (score_value) forcing += dyn.q * (*score_value);
  return decay * state + phi * forcing + sd * noise;
}

Simulator::Simulator(const SpectralGrid& grid, const LinearDynamics& dyn, TimeGrid time_grid)
    : grid_(&grid), dyn_(&dyn), tg_(std::move(time_grid)) {
  if (dyn.size() != grid.size()) throw std::invalid_argument("dynamics size != grid size");
  for (int i = 0; i < tg_.n_intervals(); ++i) {
    decay_.push_back(semigroup_factors(dyn, tg_.dt[i]));
    drift_w_.push_back(phi_factors(dyn, tg_.dt[i]));
    noise_sd_.push_back(ou_step_variance(dyn, tg_.dt[i]).sqrt());
  }
}

ArrayXd Simulator::run_interval(int i, const ArrayXd& x, const Drift& drift, const Guide* guide,
                                Eigen::Ref<const MatrixXd> noise, double& log_psi,
                                MatrixXd* path) const {
  const int sub = tg_.substeps[i - 1];
  const double dt = tg_.dt[i - 1];
  if (noise.rows() != sub || noise.cols() != dyn_->size())
    throw std::invalid_argument("run_interval: noise record shape mismatch");
  const ArrayXd& decay = decay_[i - 1];
  const ArrayXd& phi = drift_w_[i - 1];
  const ArrayXd& sd = noise_sd_[i - 1];
  const double t0 = tg_.interval_start(i);
  const bool with_drift = !drift.is_zero();
  const int row0 = path ? tg_.first_step_of_interval(i) : 0;

  ArrayXd state = x;
  ArrayXd f_buf, g_buf;
  for (int k = 0; k < sub; ++k) {
    const double t = t0 + k * dt;
    if (with_drift) {
      drift.apply_modes_into(*grid_, state, f_buf);
      if (guide) {
        guide->score_into(i, t, state, g_buf);
        log_psi += dt * (f_buf * g_buf).sum();
        state = decay * state + phi * (f_buf + dyn_->q * g_buf) +
                sd * noise.row(k).transpose().array();
      } else {
        state = decay * state + phi * f_buf + sd * noise.row(k).transpose().array();
      }
    } else if (guide) {
      guide->score_into(i, t, state, g_buf);
      state = decay * state + phi * (dyn_->q * g_buf) + sd * noise.row(k).transpose().array();
    } else {
      state = decay * state + sd * noise.row(k).transpose().array();
    }
    if (path) path->row(row0 + k) = state.matrix().transpose();
  }
  return state;
}

ArrayXd Simulator::run_all(const ArrayXd& x0, const Drift& drift, const Guide* guide,
                           const MatrixXd& noise, double& log_psi, MatrixXd* path) const {
  if (noise.rows() != tg_.total_steps()) throw std::invalid_argument("run_all: noise rows mismatch");
  ArrayXd state = x0;
  int offset = 0;
  for (int i = 1; i <= tg_.n_intervals(); ++i) {
    const int sub = tg_.substeps[i - 1];
    state = run_interval(i, state, drift, guide, noise.middleRows(offset, sub), log_psi, path);
    offset += sub;
  }
  return state;
}

}  // namespace spdesmc
