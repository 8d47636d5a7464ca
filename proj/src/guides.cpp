#include "spdesmc/guides.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "spdesmc/io.hpp"

namespace spdesmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double interval_tol(const std::vector<double>& times) { return 1e-9 * (1.0 + times.back()); }

// generalized eigenpairs of (C, B): C K = B K diag(lambda), K^T B K = I
void generalized_factorization(const MatrixXd& C, const MatrixXd& B, MatrixXd& K,
                               VectorXd& lambda, const std::string& where) {
  Eigen::LLT<MatrixXd> llt(B);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(where + ": matrix B is not symmetric positive definite");
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(C, B);
  if (es.info() != Eigen::Success)
    throw std::runtime_error(where + ": generalized eigen decomposition failed");
  K = es.eigenvectors();
  lambda = es.eigenvalues();
}

double log_det_from_llt(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double gaussian_log_norm(const VectorXd& y, const Eigen::LLT<MatrixXd>& sigma_llt,
                         double log_det_sigma) {
  const VectorXd w = sigma_llt.matrixL().solve(y);
  return -0.5 * (y.size() * kLog2Pi + log_det_sigma + w.squaredNorm());
}

}  // namespace

int Guide::interval_of(double t) const {
  const double tol = interval_tol(times_);
  if (t < -tol || t > times_.back() + tol)
    throw std::invalid_argument("guide evaluation time outside [0, t_n]");
  for (int i = 1; i <= n(); ++i)
    if (t <= times_[i - 1] + tol) return i;
  return n();
}

void Guide::check_interval(int interval, double t) const {
  if (interval < 1 || interval > n()) throw std::invalid_argument("interval index out of range");
  const double tol = interval_tol(times_);
  const double start = interval <= 1 ? 0.0 : times_[interval - 2];
  if (t < start - tol || t > times_[interval - 1] + tol)
    throw std::invalid_argument("evaluation time outside its interval");
}

// ---------------------------------------------------------------------------
// OneStepGuide

OneStepGuide::OneStepGuide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn)
    : Guide(scheme.times), L_(scheme.L), sigma_(scheme.Sigma), y_(std::move(y)),
      a_(dyn.a), q_(dyn.q), equal_a_(dyn.equal_a()) {
  if (y_.rows() != n() || y_.cols() != scheme.m())
    throw std::invalid_argument("observation matrix shape mismatch");
  log_det_sigma_ = scheme.log_det_sigma;
  if (equal_a_) {
    const MatrixXd C = L_ * q_.matrix().asDiagonal() * L_.transpose();
    generalized_factorization(C, sigma_, K_, lambda_, "one-step guide");
  }
}

void OneStepGuide::score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const {
  check_interval(interval, t);
  const double tau = std::max(0.0, times_[interval - 1] - t);
  if (equal_a_) {
    const double a = a_[0];
    const double dec = std::exp(-a * tau);
    const double rho = -std::expm1(-2.0 * a * tau) / (2.0 * a);
    const VectorXd r = y_.row(interval - 1).transpose() - dec * (L_ * x.matrix());
    VectorXd w = K_.transpose() * r;
    w.array() /= (1.0 + rho * lambda_.array());
    out = dec * (L_.transpose() * (K_ * w)).array();
    return;
  }
  const ArrayXd dec = (-a_ * tau).exp();
  ArrayXd rho(q_.size());
  for (Eigen::Index l = 0; l < q_.size(); ++l)
    rho[l] = q_[l] * -std::expm1(-2.0 * a_[l] * tau) / (2.0 * a_[l]);
  const VectorXd r = y_.row(interval - 1).transpose() - L_ * (dec * x).matrix();
  const MatrixXd R = sigma_ + L_ * rho.matrix().asDiagonal() * L_.transpose();
  Eigen::LLT<MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw std::runtime_error("one-step guide: R not SPD");
  out = dec * (L_.transpose() * llt.solve(r)).array();
}

double OneStepGuide::log_g(int interval, double t, const ArrayXd& x) const {
  check_interval(interval, t);
  const double tau = std::max(0.0, times_[interval - 1] - t);
  if (equal_a_) {
    const double a = a_[0];
    const double dec = std::exp(-a * tau);
    const double rho = -std::expm1(-2.0 * a * tau) / (2.0 * a);
    const VectorXd r = y_.row(interval - 1).transpose() - dec * (L_ * x.matrix());
    const VectorXd w = K_.transpose() * r;
    double log_det = log_det_sigma_;
    double quad = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      log_det += std::log1p(rho * lambda_[k]);
      quad += w[k] * w[k] / (1.0 + rho * lambda_[k]);
    }
    return -0.5 * (y_.cols() * kLog2Pi + log_det + quad);
  }
  const ArrayXd dec = (-a_ * tau).exp();
  ArrayXd rho(q_.size());
  for (Eigen::Index l = 0; l < q_.size(); ++l)
    rho[l] = q_[l] * -std::expm1(-2.0 * a_[l] * tau) / (2.0 * a_[l]);
  const VectorXd r = y_.row(interval - 1).transpose() - L_ * (dec * x).matrix();
  const MatrixXd R = sigma_ + L_ * rho.matrix().asDiagonal() * L_.transpose();
  Eigen::LLT<MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw std::runtime_error("one-step guide: R not SPD");
  const VectorXd w = llt.matrixL().solve(r);
  return -0.5 * (y_.cols() * kLog2Pi + log_det_from_llt(llt) + w.squaredNorm());
}

// ---------------------------------------------------------------------------
// Gpf2Guide

Gpf2Guide::Gpf2Guide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn)
    : Guide(scheme.times), L_(scheme.L), y_(std::move(y)) {
  if (y_.rows() != n() || y_.cols() != scheme.m())
    throw std::invalid_argument("observation matrix shape mismatch");
  log_det_sigma_ = scheme.log_det_sigma;
  const MatrixXd C = L_ * dyn.q.matrix().asDiagonal() * L_.transpose();
  generalized_factorization(C, scheme.Sigma, K_, lambda_, "gpf2 guide");
}

void Gpf2Guide::score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const {
  check_interval(interval, t);
  const double tau = std::max(0.0, times_[interval - 1] - t);
  const VectorXd r = y_.row(interval - 1).transpose() - L_ * x.matrix();
  VectorXd w = K_.transpose() * r;
  w.array() /= (1.0 + tau * lambda_.array());
  out = (L_.transpose() * (K_ * w)).array();
}

double Gpf2Guide::log_g(int interval, double t, const ArrayXd& x) const {
  check_interval(interval, t);
  const double tau = std::max(0.0, times_[interval - 1] - t);
  const VectorXd r = y_.row(interval - 1).transpose() - L_ * x.matrix();
  const VectorXd w = K_.transpose() * r;
  double log_det = log_det_sigma_;
  double quad = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    log_det += std::log1p(tau * lambda_[k]);
    quad += w[k] * w[k] / (1.0 + tau * lambda_[k]);
  }
  return -0.5 * (y_.cols() * kLog2Pi + log_det + quad);
}

// ---------------------------------------------------------------------------
// DirectGuide

DirectGuide::DirectGuide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn)
    : Guide(scheme.times), L_(scheme.L), sigma_(scheme.Sigma), a_(dyn.a), q_(dyn.q),
      equal_a_(dyn.equal_a()) {
  const int nn = n();
  const int m = scheme.m();
  if (y.rows() != nn || y.cols() != m) throw std::invalid_argument("observation matrix shape mismatch");
  data_.resize(nn);
  const MatrixXd lql = L_ * q_.matrix().asDiagonal() * L_.transpose();

  for (int i = nn; i >= 1; --i) {
    IntervalData& d = data_[i - 1];
    const int nfut = nn - i + 1;
    const int mi = nfut * m;
    d.y_stack.resize(mi);
    for (int j = 0; j < nfut; ++j) d.y_stack.segment(j * m, m) = y.row(i - 1 + j).transpose();

    if (i == nn) {
      d.B = sigma_;
      d.log_det_B = scheme.log_det_sigma;
    } else {
      const IntervalData& next = data_[i];
      const double delta = times_[i] - times_[i - 1];
      MatrixXd r_plus;
      double log_det_r_plus = 0.0;
      if (equal_a_) {
        const double a = a_[0];
        const double rho = -std::expm1(-2.0 * a * delta) / (2.0 * a);
        const int nfut_next = nn - i;
        MatrixXd C(next.B.rows(), next.B.cols());
        for (int r = 0; r < nfut_next; ++r)
          for (int c = 0; c < nfut_next; ++c)
            C.block(r * m, c * m, m, m) = next.block_decay[r] * next.block_decay[c] * lql;
        r_plus = next.B + rho * C;
        log_det_r_plus = next.log_det_B;
        for (Eigen::Index k = 0; k < next.lambda.size(); ++k)
          log_det_r_plus += std::log1p(rho * next.lambda[k]);
      } else {
        ArrayXd rho(q_.size());
        for (Eigen::Index l = 0; l < q_.size(); ++l)
          rho[l] = q_[l] * -std::expm1(-2.0 * a_[l] * delta) / (2.0 * a_[l]);
        r_plus = next.B + next.stacked_L * rho.matrix().asDiagonal() * next.stacked_L.transpose();
        Eigen::LLT<MatrixXd> llt(r_plus);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("direct guide: R+ not SPD at interval " + std::to_string(i));
        log_det_r_plus = log_det_from_llt(llt);
      }
      d.B = MatrixXd::Zero(mi, mi);
      d.B.topLeftCorner(m, m) = sigma_;
      d.B.bottomRightCorner(mi - m, mi - m) = r_plus;
      d.log_det_B = scheme.log_det_sigma + log_det_r_plus;
    }

    if (equal_a_) {
      const double a = a_[0];
      d.block_decay.resize(nfut);
      for (int j = 0; j < nfut; ++j) d.block_decay[j] = std::exp(-a * (times_[i - 1 + j] - times_[i - 1]));
      MatrixXd C(mi, mi);
      for (int r = 0; r < nfut; ++r)
        for (int c = 0; c < nfut; ++c)
          C.block(r * m, c * m, m, m) = d.block_decay[r] * d.block_decay[c] * lql;
      generalized_factorization(C, d.B, d.K, d.lambda,
                                "direct guide interval " + std::to_string(i));
    } else {
      d.stacked_L.resize(mi, L_.cols());
      for (int j = 0; j < nfut; ++j) {
        const ArrayXd dec = (-a_ * (times_[i - 1 + j] - times_[i - 1])).exp();
        d.stacked_L.middleRows(j * m, m) = L_ * dec.matrix().asDiagonal();
      }
    }
  }
}

void DirectGuide::eval(int interval, double t, const ArrayXd& x, ArrayXd* score_out,
                       double* log_g_out) const {
  check_interval(interval, t);
  const IntervalData& d = data_[interval - 1];
  const double tau = std::max(0.0, times_[interval - 1] - t);
  const int m = static_cast<int>(L_.rows());
  const int nfut = static_cast<int>(d.y_stack.size()) / m;

  if (equal_a_) {
    const double a = a_[0];
    const double dec = std::exp(-a * tau);
    const double rho = -std::expm1(-2.0 * a * tau) / (2.0 * a);
    const VectorXd lx = L_ * x.matrix();
    VectorXd r = d.y_stack;
    for (int j = 0; j < nfut; ++j) r.segment(j * m, m) -= dec * d.block_decay[j] * lx;
    const VectorXd w = d.K.transpose() * r;
    if (log_g_out) {
      double log_det = d.log_det_B;
      double quad = 0.0;
      for (Eigen::Index k = 0; k < w.size(); ++k) {
        log_det += std::log1p(rho * d.lambda[k]);
        quad += w[k] * w[k] / (1.0 + rho * d.lambda[k]);
      }
      *log_g_out = -0.5 * (d.y_stack.size() * kLog2Pi + log_det + quad);
    }
    if (score_out) {
      VectorXd wt = w;
      wt.array() /= (1.0 + rho * d.lambda.array());
      const VectorXd u = d.K * wt;
      VectorXd ubar = VectorXd::Zero(m);
      for (int j = 0; j < nfut; ++j) ubar += d.block_decay[j] * u.segment(j * m, m);
      *score_out = dec * (L_.transpose() * ubar).array();
    }
    return;
  }

  const ArrayXd dec = (-a_ * tau).exp();
  ArrayXd rho(q_.size());
  for (Eigen::Index l = 0; l < q_.size(); ++l)
    rho[l] = q_[l] * -std::expm1(-2.0 * a_[l] * tau) / (2.0 * a_[l]);
  const VectorXd r = d.y_stack - d.stacked_L * (dec * x).matrix();
  const MatrixXd R = d.B + d.stacked_L * rho.matrix().asDiagonal() * d.stacked_L.transpose();
  Eigen::LLT<MatrixXd> llt(R);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("direct guide: R not SPD at interval " + std::to_string(interval));
  if (log_g_out) {
    const VectorXd w = llt.matrixL().solve(r);
    *log_g_out = -0.5 * (d.y_stack.size() * kLog2Pi + log_det_from_llt(llt) + w.squaredNorm());
  }
  if (score_out) *score_out = dec * (d.stacked_L.transpose() * llt.solve(r)).array();
}

void DirectGuide::score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const {
  eval(interval, t, x, &out, nullptr);
}

double DirectGuide::log_g(int interval, double t, const ArrayXd& x) const {
  double v = 0.0;
  eval(interval, t, x, nullptr, &v);
  return v;
}

// ---------------------------------------------------------------------------
// RiccatiGuide

namespace {

struct RiccatiState {
  MatrixXd U;
  VectorXd V;
  double c = 0.0;
};

struct RiccatiRhs {
  const ArrayXd& a;
  const ArrayXd& q;

  RiccatiState operator()(const RiccatiState& s) const {
    RiccatiState f;
    const MatrixXd uq = s.U * q.matrix().asDiagonal();
    f.U = a.matrix().asDiagonal() * s.U + s.U * a.matrix().asDiagonal() + uq * s.U;
    f.V = a.matrix().asDiagonal() * s.V + uq * s.V;
    f.c = 0.5 * (s.U.diagonal().array() * q).sum() - 0.5 * (s.V.array().square() * q).sum();
    return f;
  }
};

void rk4_step(const RiccatiRhs& rhs, RiccatiState& s, double h) {
  const RiccatiState k1 = rhs(s);
  RiccatiState tmp{s.U + 0.5 * h * k1.U, s.V + 0.5 * h * k1.V, s.c + 0.5 * h * k1.c};
  const RiccatiState k2 = rhs(tmp);
  tmp = {s.U + 0.5 * h * k2.U, s.V + 0.5 * h * k2.V, s.c + 0.5 * h * k2.c};
  const RiccatiState k3 = rhs(tmp);
  tmp = {s.U + h * k3.U, s.V + h * k3.V, s.c + h * k3.c};
  const RiccatiState k4 = rhs(tmp);
  s.U += h / 6.0 * (k1.U + 2.0 * k2.U + 2.0 * k3.U + k4.U);
  s.V += h / 6.0 * (k1.V + 2.0 * k2.V + 2.0 * k3.V + k4.V);
  s.c += h / 6.0 * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c);
  s.U = 0.5 * (s.U + s.U.transpose()).eval();
}

}  // namespace

RiccatiGuide::RiccatiGuide(const ObservationScheme& scheme, MatrixXd y, const LinearDynamics& dyn,
                           const TimeGrid& tg, double rk4_step_len)
    : Guide(scheme.times) {
  const int nn = n();
  if (static_cast<int>(tg.obs_times.size()) != nn)
    throw std::invalid_argument("time grid does not match observation times");
  for (int i = 0; i < nn; ++i)
    if (std::abs(tg.obs_times[i] - times_[i]) > 1e-9)
      throw std::invalid_argument("time grid missing an observation time");
  if (y.rows() != nn || y.cols() != scheme.m())
    throw std::invalid_argument("observation matrix shape mismatch");
  if (rk4_step_len <= 0.0) throw std::invalid_argument("rk4 step must be positive");

  const Eigen::LLT<MatrixXd>& sllt = scheme.sigma_llt;
  const MatrixXd sigma_inv_L = sllt.solve(scheme.L);
  const MatrixXd jump_U = scheme.L.transpose() * sigma_inv_L;
  std::vector<VectorXd> jump_V(nn);
  std::vector<double> jump_c(nn);
  for (int i = 0; i < nn; ++i) {
    jump_V[i] = scheme.L.transpose() * sllt.solve(y.row(i).transpose());
    jump_c[i] = gaussian_log_norm(y.row(i).transpose(), sllt, scheme.log_det_sigma);
  }

  grid_times_.resize(nn);
  U_.resize(nn);
  V_.resize(nn);
  c_.resize(nn);

  RiccatiRhs rhs{dyn.a, dyn.q};
  RiccatiState s;
  s.U = jump_U;
  s.V = jump_V[nn - 1];
  s.c = jump_c[nn - 1];

  for (int i = nn; i >= 1; --i) {
    const int sub = tg.substeps[i - 1];
    const double dt = tg.dt[i - 1];
    const double t0 = tg.interval_start(i);
    grid_times_[i - 1].resize(sub + 1);
    U_[i - 1].resize(sub + 1);
    V_[i - 1].resize(sub + 1);
    c_[i - 1].resize(sub + 1);
    for (int k = 0; k <= sub; ++k) grid_times_[i - 1][k] = t0 + k * dt;

    U_[i - 1][sub] = s.U;
    V_[i - 1][sub] = s.V;
    c_[i - 1][sub] = s.c;
    const int nss = std::max(1, static_cast<int>(std::ceil(dt / rk4_step_len - 1e-9)));
    const double h = -dt / nss;
    for (int k = sub - 1; k >= 0; --k) {
      for (int ss = 0; ss < nss; ++ss) rk4_step(rhs, s, h);
      U_[i - 1][k] = s.U;
      V_[i - 1][k] = s.V;
      c_[i - 1][k] = s.c;
    }
    if (i > 1) {
      s.U += jump_U;
      s.V += jump_V[i - 2];
      s.c += jump_c[i - 2];
    }
  }
}

std::pair<int, int> RiccatiGuide::locate(int interval, double t) const {
  check_interval(interval, t);
  const auto& times = grid_times_[interval - 1];
  const double dt = times.size() > 1 ? times[1] - times[0] : 1.0;
  int idx = static_cast<int>(std::lround((t - times.front()) / dt));
  idx = std::min(std::max(idx, 0), static_cast<int>(times.size()) - 1);
  return {interval - 1, idx};
}

void RiccatiGuide::score_into(int interval, double t, const ArrayXd& x, ArrayXd& out) const {
  const auto [i, k] = locate(interval, t);
  out = (V_[i][k] - U_[i][k] * x.matrix()).array();
}

double RiccatiGuide::log_g(int interval, double t, const ArrayXd& x) const {
  const auto [i, k] = locate(interval, t);
  return c_[i][k] + V_[i][k].dot(x.matrix()) - 0.5 * x.matrix().dot(U_[i][k] * x.matrix());
}

double riccati_mode_closed_form(double a, double q, double u_terminal, double tau) {
  if (u_terminal <= 0.0) throw std::invalid_argument("u_terminal must be positive");
  if (tau < 0.0) throw std::invalid_argument("tau must be nonnegative");
  const double decay2 = std::exp(-2.0 * a * tau);
  return decay2 / (1.0 / u_terminal + q / (2.0 * a) * -std::expm1(-2.0 * a * tau));
}

// ---------------------------------------------------------------------------
// factories and dumps

std::unique_ptr<Guide> make_onestep_guide(const Dataset& ds, const SpectralGrid& grid,
                                          const LinearDynamics& dyn) {
  return std::make_unique<OneStepGuide>(ds.scheme(grid), ds.y, dyn);
}

std::unique_ptr<Guide> make_gpf2_guide(const Dataset& ds, const SpectralGrid& grid,
                                       const LinearDynamics& dyn) {
  return std::make_unique<Gpf2Guide>(ds.scheme(grid), ds.y, dyn);
}

std::unique_ptr<Guide> make_direct_guide(const Dataset& ds, const SpectralGrid& grid,
                                         const LinearDynamics& dyn) {
  return std::make_unique<DirectGuide>(ds.scheme(grid), ds.y, dyn);
}

std::unique_ptr<Guide> make_riccati_guide(const Dataset& ds, const SpectralGrid& grid,
                                          const LinearDynamics& dyn, const TimeGrid& tg,
                                          double rk4_step) {
  return std::make_unique<RiccatiGuide>(ds.scheme(grid), ds.y, dyn, tg, rk4_step);
}

void dump_riccati_guide(const RiccatiGuide& guide, const std::string& prefix) {
  int slots = 0;
  std::vector<int> per_interval;
  for (const auto& v : guide.c()) {
    per_interval.push_back(static_cast<int>(v.size()));
    slots += static_cast<int>(v.size());
  }
  const int M = guide.U().front().front().rows();
  MatrixXd u_mat(slots * M, M);
  MatrixXd v_mat(slots, M);
  MatrixXd c_mat(slots, 1);
  std::vector<double> flat_times;
  int row = 0;
  for (size_t i = 0; i < guide.U().size(); ++i) {
    for (size_t k = 0; k < guide.U()[i].size(); ++k) {
      u_mat.middleRows(row * M, M) = guide.U()[i][k];
      v_mat.row(row) = guide.V()[i][k].transpose();
      c_mat(row, 0) = guide.c()[i][k];
      flat_times.push_back(guide.grid_times()[i][k]);
      ++row;
    }
  }
  nlohmann::json meta;
  meta["times"] = flat_times;
  meta["slots_per_interval"] = per_interval;
  meta["state_dim"] = M;
  write_binary_dump(prefix + "_U.bin", u_mat, meta);
  write_binary_dump(prefix + "_V.bin", v_mat, meta);
  write_binary_dump(prefix + "_c.bin", c_mat, meta);
}

}  // namespace spdesmc
