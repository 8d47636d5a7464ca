#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "spdesmc/spectral.hpp"

namespace spdesmc {

using Eigen::MatrixXd;

// Parameters of the Amari connectivity kernel and activation, Mexican-hat
// difference of Gaussians with offset delta and a shifted logistic activation.
struct AmariParams {
  double amp = 4.0;
  double B = 1.5;
  double eta = 10.0;
  double zeta = 0.5;
  double delta = 0.0;

  void validate() const;
};

// f(x) = 1/(1 + exp(-eta x + zeta)) - 1/(1 + exp(zeta)); f(0) = 0.
double activation(const AmariParams& p, double x);

// k_F(r) at wrapped distance r
double amari_kernel(const AmariParams& p, double r);

// Drift term F of the state equation, evaluated in mode coordinates. The
// Amari variant applies k_F by FFT convolution against f(field), with the
// grid quadrature weight dx.
class Drift {
 public:
  using ModeMap = std::function<ArrayXd(const ArrayXd&)>;

  static Drift zero();
  static Drift amari(const AmariParams& params, const SpectralGrid& grid);
  static Drift custom(ModeMap map);

  bool is_zero() const { return kind_ == Kind::Zero; }

  // F in mode coordinates
  ArrayXd apply_modes(const SpectralGrid& grid, const ArrayXd& modes) const;
  void apply_modes_into(const SpectralGrid& grid, const ArrayXd& modes, ArrayXd& out) const;
  // F in field (grid value) coordinates
  ArrayXd apply_field(const SpectralGrid& grid, const ArrayXd& field) const;

  const AmariParams& params() const { return params_; }

 private:
  enum class Kind { Zero, Amari, Custom };
  Kind kind_ = Kind::Zero;
  AmariParams params_;
  ArrayXd kernel_dft_;     // length M/2+1
  ArrayXd kernel_dft_dx_;  // kernel_dft_ scaled by the quadrature weight
  ModeMap map_;
};

// Observation times 0 < t_1 < ... < t_n with a uniform substep per interval.
struct TimeGrid {
  std::vector<double> obs_times;
  std::vector<int> substeps;
  std::vector<double> dt;

  // chooses per interval the smallest substep count with dt <= dt_target
  static TimeGrid uniform(std::vector<double> obs_times, double dt_target);

  int n_intervals() const { return static_cast<int>(obs_times.size()); }
  double interval_start(int i) const { return i <= 1 ? 0.0 : obs_times[i - 2]; }
  double interval_end(int i) const { return obs_times[i - 1]; }
  int total_steps() const;
  int first_step_of_interval(int i) const;
  double horizon() const { return obs_times.back(); }
};

class Guide;

// One exponential Euler step: exact OU decay and noise, left-endpoint drift
// and guide. guide_value enters premultiplied by Q (score -> Q * score).
ArrayXd exp_euler_step(const ArrayXd& state, double delta, const ArrayXd& drift_value,
                       const ArrayXd* score_value, const ArrayXd& noise,
                       const LinearDynamics& dyn);

// Forward simulation of the (optionally guided) mild solution with per-step
// coefficient tables precomputed per interval. Immutable and shareable.
class Simulator {
 public:
  Simulator(const SpectralGrid& grid, const LinearDynamics& dyn, TimeGrid time_grid);

  const TimeGrid& time_grid() const { return tg_; }
  const SpectralGrid& grid() const { return *grid_; }
  const LinearDynamics& dynamics() const { return *dyn_; }

  // Runs interval i (1-based) from state x at t_{i-1}. noise holds one row of
  // standard normals per substep. Accumulates log Psi = sum dt <F, G> into
  // log_psi. If path != nullptr, stores the state after each substep.
  ArrayXd run_interval(int i, const ArrayXd& x, const Drift& drift, const Guide* guide,
                       Eigen::Ref<const MatrixXd> noise, double& log_psi,
                       MatrixXd* path = nullptr) const;

  // Runs all intervals from x0 at time 0; noise has total_steps() rows.
  // Returns the state at t_n; path (if given) gets one row per substep,
  // aligned with noise rows.
  ArrayXd run_all(const ArrayXd& x0, const Drift& drift, const Guide* guide,
                  const MatrixXd& noise, double& log_psi, MatrixXd* path = nullptr) const;

 private:
  const SpectralGrid* grid_;
  const LinearDynamics* dyn_;
  TimeGrid tg_;
  // per interval: decay e^{-a dt}, drift weight, noise standard deviation
  std::vector<ArrayXd> decay_, drift_w_, noise_sd_;
};

}  // namespace spdesmc
