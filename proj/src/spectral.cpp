#include "spdesmc/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace spdesmc {

namespace {

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

bool is_power_of_two(int m) { return m > 0 && (m & (m - 1)) == 0; }

}  // namespace

// Plans are created once per grid; fftw_execute_dft_* on caller-owned buffers
// is safe to call concurrently.
struct SpectralGrid::FftPlans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  int M = 0;

  explicit FftPlans(int M_in) : M(M_in) {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    std::vector<double> real(M);
    std::vector<std::complex<double>> cplx(M / 2 + 1);
    auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
    r2c = fftw_plan_dft_r2c_1d(M, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
    c2r = fftw_plan_dft_c2r_1d(M, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!r2c || !c2r) throw std::runtime_error("fftw plan creation failed");
  }

  ~FftPlans() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
  }

  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
};

SpectralGrid SpectralGrid::build(double domain_length, int M) {
  if (domain_length <= 0.0) throw std::invalid_argument("domain_length must be positive");
  if (M < 4 || !is_power_of_two(M)) throw std::invalid_argument("M must be a power of two >= 4");

  SpectralGrid g;
  g.domain_length_ = domain_length;
  g.M_ = M;
  g.dx_ = domain_length / M;
  g.nodes_.resize(M);
  for (int k = 0; k < M; ++k) g.nodes_[k] = -0.5 * domain_length + k * g.dx_;
  g.plans_ = std::make_shared<FftPlans>(M);
  return g;
}

namespace {

// per-thread transform scratch; grown on demand, reused across calls
struct Scratch {
  std::vector<double> real;
  std::vector<std::complex<double>> cplx;

  void ensure(int M) {
    if (static_cast<int>(real.size()) < M) real.resize(M);
    if (static_cast<int>(cplx.size()) < M / 2 + 1) cplx.resize(M / 2 + 1);
  }
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

// half-spectrum (r2c layout) <-> orthonormal real mode coefficients; the
// (-1)^l factors absorb the half-domain shift of the node coordinates
void SpectralGrid::spectrum_to_modes(const std::complex<double>* spec, double* modes) const {
  const double L = domain_length_;
  modes[0] = dx_ / std::sqrt(L) * spec[0].real();
  const double pair_scale = std::sqrt(2.0 / L) * dx_;
  for (int l = 1; l < M_ / 2; ++l) {
    const double sign = (l % 2 == 0) ? 1.0 : -1.0;
    modes[2 * l - 1] = sign * pair_scale * spec[l].real();
    modes[2 * l] = -sign * pair_scale * spec[l].imag();
  }
  const double nyq_sign = (M_ / 2) % 2 == 0 ? 1.0 : -1.0;
  modes[M_ - 1] = nyq_sign * dx_ / std::sqrt(L) * spec[M_ / 2].real();
}

void SpectralGrid::modes_to_spectrum(const double* modes, std::complex<double>* spec) const {
  const double L = domain_length_;
  spec[0] = {modes[0] / std::sqrt(L), 0.0};
  const double pair_scale = 0.5 * std::sqrt(2.0 / L);
  for (int l = 1; l < M_ / 2; ++l) {
    const double sign = (l % 2 == 0) ? 1.0 : -1.0;
    spec[l] = {sign * pair_scale * modes[2 * l - 1], -sign * pair_scale * modes[2 * l]};
  }
  const double nyq_sign = (M_ / 2) % 2 == 0 ? 1.0 : -1.0;
  spec[M_ / 2] = {nyq_sign * modes[M_ - 1] / std::sqrt(L), 0.0};
}

ArrayXd SpectralGrid::to_modes(const ArrayXd& field) const {
  if (field.size() != M_) throw std::invalid_argument("field length != M");
  Scratch& s = scratch();
  s.ensure(M_);
  std::copy(field.data(), field.data() + M_, s.real.data());
  fftw_execute_dft_r2c(plans_->r2c, s.real.data(),
                       reinterpret_cast<fftw_complex*>(s.cplx.data()));
  ArrayXd modes(M_);
  spectrum_to_modes(s.cplx.data(), modes.data());
  return modes;
}

ArrayXd SpectralGrid::to_field(const ArrayXd& modes) const {
  if (modes.size() != M_) throw std::invalid_argument("modes length != M");
  Scratch& s = scratch();
  s.ensure(M_);
  modes_to_spectrum(modes.data(), s.cplx.data());
  ArrayXd field(M_);
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(s.cplx.data()), field.data());
  return field;
}

ArrayXd SpectralGrid::dft_real(const ArrayXd& signal) const {
  if (signal.size() != M_) throw std::invalid_argument("signal length != M");
  Scratch& s = scratch();
  s.ensure(M_);
  std::copy(signal.data(), signal.data() + M_, s.real.data());
  fftw_execute_dft_r2c(plans_->r2c, s.real.data(),
                       reinterpret_cast<fftw_complex*>(s.cplx.data()));
  ArrayXd out(M_ / 2 + 1);
  for (int l = 0; l <= M_ / 2; ++l) out[l] = s.cplx[l].real();
  return out;
}

ArrayXd SpectralGrid::convolve(const ArrayXd& kernel_dft, const ArrayXd& u) const {
  if (kernel_dft.size() != M_ / 2 + 1 || u.size() != M_)
    throw std::invalid_argument("convolve: inconsistent lengths");
  Scratch& s = scratch();
  s.ensure(M_);
  std::copy(u.data(), u.data() + M_, s.real.data());
  fftw_execute_dft_r2c(plans_->r2c, s.real.data(),
                       reinterpret_cast<fftw_complex*>(s.cplx.data()));
  const double inv_m = 1.0 / M_;
  for (int l = 0; l <= M_ / 2; ++l) s.cplx[l] *= kernel_dft[l] * inv_m;
  ArrayXd out(M_);
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(s.cplx.data()), out.data());
  return out;
}

void SpectralGrid::convolved_pointwise_image(const ArrayXd& modes,
                                             void (*pointwise)(const void*, double*, int),
                                             const void* ctx, const ArrayXd& kernel_dft,
                                             ArrayXd& out_modes) const {
  if (modes.size() != M_ || kernel_dft.size() != M_ / 2 + 1)
    throw std::invalid_argument("convolved_pointwise_image: inconsistent lengths");
  Scratch& s = scratch();
  s.ensure(M_);
  modes_to_spectrum(modes.data(), s.cplx.data());
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(s.cplx.data()),
                       s.real.data());
  pointwise(ctx, s.real.data(), M_);
  fftw_execute_dft_r2c(plans_->r2c, s.real.data(),
                       reinterpret_cast<fftw_complex*>(s.cplx.data()));
  // no 1/M here: the spectrum feeds the quadrature-weighted mode map directly
  for (int l = 0; l <= M_ / 2; ++l) s.cplx[l] *= kernel_dft[l];
  out_modes.resize(M_);
  spectrum_to_modes(s.cplx.data(), out_modes.data());
}

LinearDynamics::LinearDynamics(ArrayXd a_in, ArrayXd q_in) : a(std::move(a_in)), q(std::move(q_in)) {
  if (a.size() != q.size()) throw std::invalid_argument("a and q must have equal length");
  if ((a <= 0.0).any()) throw std::invalid_argument("all a_l must be positive");
  if ((q < 0.0).any()) throw std::invalid_argument("all q_l must be nonnegative");
}

LinearDynamics LinearDynamics::constant_a(double a_value, ArrayXd q_in) {
  ArrayXd a = ArrayXd::Constant(q_in.size(), a_value);
  return LinearDynamics(std::move(a), std::move(q_in));
}

bool LinearDynamics::equal_a() const {
  return (a == a[0]).all();
}

ArrayXd matern_spectrum(double sigma0, double rho0, double eta0, double d,
                        const SpectralGrid& grid, bool scaled_frequencies) {
  if (sigma0 <= 0.0 || rho0 <= 0.0 || eta0 <= 0.0)
    throw std::invalid_argument("matern_spectrum: parameters must be positive");
  const int M = grid.size();
  const double expo = d / 2.0 + eta0;
  ArrayXd q(M);
  for (int k = 0; k < M; ++k) {
    double w = 2.0 * M_PI * grid.freq_of_mode(k);
    if (scaled_frequencies) w /= grid.domain_length();
    q[k] = sigma0 * sigma0 * std::pow(1.0 / (rho0 * rho0) + w * w, -expo);
  }
  return q;
}

ArrayXd semigroup_factors(const LinearDynamics& dyn, double delta) {
  if (delta < 0.0) throw std::invalid_argument("delta must be nonnegative");
  return (-dyn.a * delta).exp();
}

ArrayXd phi_factors(const LinearDynamics& dyn, double delta) {
  if (delta < 0.0) throw std::invalid_argument("delta must be nonnegative");
  ArrayXd out(dyn.a.size());
  for (Eigen::Index l = 0; l < dyn.a.size(); ++l)
    out[l] = -std::expm1(-dyn.a[l] * delta) / dyn.a[l];
  return out;
}

ArrayXd ou_step_variance(const LinearDynamics& dyn, double delta) {
  if (delta < 0.0) throw std::invalid_argument("delta must be nonnegative");
  ArrayXd out(dyn.a.size());
  for (Eigen::Index l = 0; l < dyn.a.size(); ++l)
    out[l] = dyn.q[l] * -std::expm1(-2.0 * dyn.a[l] * delta) / (2.0 * dyn.a[l]);
  return out;
}

}  // namespace spdesmc
