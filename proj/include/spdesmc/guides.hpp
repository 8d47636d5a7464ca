#pragma once

#include <memory>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "spdesmc/dynamics.hpp"
#include "spdesmc/observation.hpp"
#include "spdesmc/spectral.hpp"

namespace spdesmc {

// Evaluator of (log g, G = grad_x log g) over [0, t_n]. Evaluation is
// interval-attributed: interval i covers [t_{i-1}, t_i]; at the left end it
// yields the right limit g+(t_{i-1}, .) and at the right end the value with
// the observation factor k(x, y_i) folded in. Guides are immutable after
// construction and reentrant.
class Guide {
 public:
  virtual ~Guide() = default;

  int n() const { return static_cast<int>(times_.size()); }
  const std::vector<double>& times() const { return times_; }

  // interval in 1..n, t in [t_{i-1}, t_i]
  virtual void score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const = 0;
  virtual double log_g(int interval, double t, const ArrayXd& x) const = 0;

  ArrayXd score(int interval, double t, const ArrayXd& x) const {
    ArrayXd out;
    score_into(interval, t, x, out);
    return out;
  }

  // smallest i with t <= t_i; t = 0 maps to interval 1 (right-limit convention)
  int interval_of(double t) const;
  ArrayXd score_at(double t, const ArrayXd& x) const { return score(interval_of(t), t, x); }
  double log_g_at(double t, const ArrayXd& x) const { return log_g(interval_of(t), t, x); }

 protected:
  explicit Guide(std::vector<double> times) : times_(std::move(times)) {}
  void check_interval(int interval, double t) const;

  std::vector<double> times_;
};

// One-step-ahead guide: on [t_{i-1}, t_i] only y_i is seen, through the OU
// kernel. G_i(t,x) = L_t* R_t^{-1} (y_i - L_t x) with L_t = L S_{t_i - t} and
// R_t = Sigma + L Q_{t_i - t} L*.
class OneStepGuide : public Guide {
 public:
  OneStepGuide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn);

  void score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const override;
  double log_g(int interval, double t, const ArrayXd& x) const override;

 private:
  MatrixXd L_, sigma_, y_;
  ArrayXd a_, q_;
  bool equal_a_;
  // fast path (all a_l equal): generalized eigenpairs of (L Q L*, Sigma)
  MatrixXd K_;
  VectorXd lambda_;
  double log_det_sigma_ = 0.0;
};

// Comparison guide with the auxiliary process frozen at A = 0:
// G~_i(t,x) = L* (Sigma + (t_i - t) L Q L*)^{-1} (y_i - L x).
class Gpf2Guide : public Guide {
 public:
  Gpf2Guide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn);

  void score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const override;
  double log_g(int interval, double t, const ArrayXd& x) const override;

 private:
  MatrixXd L_, y_;
  MatrixXd K_;
  VectorXd lambda_;
  double log_det_sigma_ = 0.0;
};

// Full-observation guide from the stacked backward recursion. On interval i
// the future observations y_i..y_n are seen through the blocks
// L_t = [L S_{t_j - t}]_j, R_t = blockdiag(Sigma, R+_{t_i}) + L_{t_i} Q_{t_i-t} L_{t_i}*.
// When all a_l coincide, R_t^{-1} is applied through one generalized
// eigenfactorization per interval; otherwise R_t is assembled per call.
class DirectGuide : public Guide {
 public:
  DirectGuide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn);

  void score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const override;
  double log_g(int interval, double t, const ArrayXd& x) const override;

 private:
  struct IntervalData {
    VectorXd y_stack;       // m_i^+
    MatrixXd B;             // blockdiag(Sigma, R+_{t_i})
    double log_det_B = 0.0;
    // fast path
    VectorXd block_decay;   // e^{-a (t_j - t_i)} per future observation j
    MatrixXd K;             // generalized eigenvectors of (C_i, B_i)
    VectorXd lambda;
    // general path
    MatrixXd stacked_L;     // m_i^+ x M
  };

  void eval(int interval, double t, const ArrayXd& x, ArrayXd* score_out, double* log_g_out) const;

  MatrixXd L_, sigma_;
  ArrayXd a_, q_;
  bool equal_a_;
  std::vector<IntervalData> data_;  // index i-1
};

// Full-observation guide via the backward Riccati system
//   dU = (-A*U - UA + UQU) dt, dV = (-A*V + UQV) dt,
//   dc = (1/2 tr[UQ] - 1/2 <V, QV>) dt,
// integrated with fixed-step RK4 between observation jumps and stored on the
// simulation grid (nearest-grid-time lookup, no interpolation). Memory is
// O(N_steps M^2); intended for M <= 128.
class RiccatiGuide : public Guide {
 public:
  RiccatiGuide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn,
               const TimeGrid& tg, double rk4_step = 1e-3);

  void score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const override;
  double log_g(int interval, double t, const ArrayXd& x) const override;

  // stored trajectories, interval-major with both endpoints per interval
  const std::vector<std::vector<double>>& grid_times() const { return grid_times_; }
  const std::vector<std::vector<MatrixXd>>& U() const { return U_; }
  const std::vector<std::vector<VectorXd>>& V() const { return V_; }
  const std::vector<std::vector<double>>& c() const { return c_; }

 private:
  std::pair<int, int> locate(int interval, double t) const;

  std::vector<std::vector<double>> grid_times_;
  std::vector<std::vector<MatrixXd>> U_;
  std::vector<std::vector<VectorXd>> V_;
  std::vector<std::vector<double>> c_;
};

// closed-form scalar Riccati solution at lag tau before the terminal time
double riccati_mode_closed_form(double a, double q, double u_terminal, double tau);

std::unique_ptr<Guide> make_onestep_guide(const Dataset& ds, const SpectralGrid& grid,
                                          const LinearDynamics& dyn);
std::unique_ptr<Guide> make_gpf2_guide(const Dataset& ds, const SpectralGrid& grid,
                                       const LinearDynamics& dyn);
std::unique_ptr<Guide> make_direct_guide(const Dataset& ds, const SpectralGrid& grid,
                                         const LinearDynamics& dyn);
std::unique_ptr<Guide> make_riccati_guide(const Dataset& ds, const SpectralGrid& grid,
                                          const LinearDynamics& dyn, const TimeGrid& tg,
                                          double rk4_step = 1e-3);

// Binary dump of the Riccati trajectories (flat little-endian doubles plus a
// JSON sidecar describing shapes).
void dump_riccati_guide(const RiccatiGuide& guide, const std::string& prefix);

}  // namespace spdesmc
