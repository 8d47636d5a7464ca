#pragma once

#include <complex>
#include <memory>

#include <Eigen/Core>

namespace spdesmc {

using Eigen::ArrayXd;

// Periodic 1-D spectral grid with the orthonormal real Fourier basis on
// L^2(D), D = [-|D|/2, |D|/2). Mode layout:
//   mode 0                 constant, 1/sqrt(|D|)
//   modes 2l-1, 2l         sqrt(2/|D|) cos / sin at frequency l, l = 1..M/2-1
//   mode M-1               Nyquist cosine at frequency M/2, 1/sqrt(|D|)
// The basis is orthonormal under the grid quadrature sum(x_k y_k) * dx, so
// to_modes / to_field are exactly inverse to each other up to rounding.
class SpectralGrid {
 public:
  static SpectralGrid build(double domain_length, int M);

  double domain_length() const { return domain_length_; }
  int size() const { return M_; }
  double dx() const { return dx_; }
  const ArrayXd& nodes() const { return nodes_; }

  // frequency index l of a mode slot (0 = constant, M/2 = Nyquist)
  int freq_of_mode(int k) const {
    if (k == 0) return 0;
    if (k == M_ - 1) return M_ / 2;
    return (k + 1) / 2;
  }
  bool mode_is_sine(int k) const { return k > 0 && k < M_ - 1 && (k % 2 == 0); }

  ArrayXd to_modes(const ArrayXd& field) const;
  ArrayXd to_field(const ArrayXd& modes) const;

  // Real part of the length-(M/2+1) DFT of a length-M real signal. Used to
  // tabulate symmetric convolution kernels once.
  ArrayXd dft_real(const ArrayXd& signal) const;

  // Circular convolution (kernel_dft must come from dft_real of a symmetric
  // table); returns sum_j kernel[(i-j) mod M] u[j] without quadrature weight.
  ArrayXd convolve(const ArrayXd& kernel_dft, const ArrayXd& u) const;

  // out_modes = to_modes( convolve(kernel_dft, pointwise(to_field(modes))) ),
  // fused into one inverse and one forward transform. pointwise transforms
  // the field values in place.
  void convolved_pointwise_image(const ArrayXd& modes,
                                 void (*pointwise)(const void*, double*, int), const void* ctx,
                                 const ArrayXd& kernel_dft, ArrayXd& out_modes) const;

 private:
  SpectralGrid() = default;

  void spectrum_to_modes(const std::complex<double>* spec, double* modes) const;
  void modes_to_spectrum(const double* modes, std::complex<double>* spec) const;

  double domain_length_ = 0.0;
  int M_ = 0;
  double dx_ = 0.0;
  ArrayXd nodes_;

  struct FftPlans;
  std::shared_ptr<FftPlans> plans_;
};

// Diagonal linear dynamics: eigenvalues a_l > 0 of -A and q_l >= 0 of Q,
// stored per mode slot (cosine/sine pairs share their frequency's value).
struct LinearDynamics {
  ArrayXd a;
  ArrayXd q;

  LinearDynamics(ArrayXd a_in, ArrayXd q_in);
  static LinearDynamics constant_a(double a_value, ArrayXd q_in);

  int size() const { return static_cast<int>(a.size()); }
  bool equal_a() const;
};

// Matern-type noise spectrum, q_l = sigma0^2 (rho0^-2 + w_l^2)^-(d/2 + eta0)
// with w_l = 2*pi*l, or 2*pi*l/|D| when scaled_frequencies is set.
ArrayXd matern_spectrum(double sigma0, double rho0, double eta0, double d,
                        const SpectralGrid& grid, bool scaled_frequencies = false);

// exp(-a_l * delta)
ArrayXd semigroup_factors(const LinearDynamics& dyn, double delta);

// (1 - exp(-a_l * delta)) / a_l, the drift weight of one exponential Euler step
ArrayXd phi_factors(const LinearDynamics& dyn, double delta);

// q_l (1 - exp(-2 a_l delta)) / (2 a_l), the exact per-mode variance of the
// stochastic convolution over a step of length delta
ArrayXd ou_step_variance(const LinearDynamics& dyn, double delta);

}  // namespace spdesmc
