#pragma once

#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"
#include "lagda/simulate.hpp"

#include <Eigen/Dense>

#include <complex>
#include <random>
#include <vector>

namespace lagda::testing {

/// The conjugate pair k = (0, +-1) of the GB set.
inline ModeSet single_pair_modeset() {
  const ModeSet gb = build_gb_modeset(1);
  const int p = gb.find({0, 1}, ModeKind::GB);
  const int q = gb.find({0, -1}, ModeKind::GB);
  return select_modes(gb, {p, q});
}

inline LsmParams uniform_params(const ModeSet& ms, double d, double omega, cdouble f, double sigma) {
  LsmParams p = default_initial_guess(ms);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (ms.mode(m).is_mean_flow()) continue;
    const bool rep = static_cast<int>(m) < ms.conj_pair(m);
    p.modes[m].d = d;
    p.modes[m].sigma = sigma;
    p.modes[m].omega = rep ? omega : -omega;
    p.modes[m].f = rep ? f : std::conj(f);
  }
  return p;
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double lo = 0.2, double hi = 3.0) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(lo, hi);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = nd(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd ev(n);
  for (int i = 0; i < n; ++i) ev[i] = ud(rng);
  return q * ev.asDiagonal() * q.transpose();
}

inline double rel_rms(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a - b).norm() / b.norm();
}

/// Discrete Kalman filter and RTS smoother for one conjugate pair observed by
/// tracers, on the exact discretization of the OU mode. State is
/// (Re U, Im U) of the representative mode; observation at step n is the
/// increment dX_n with H taken at the positions of step n.
struct PairKalmanOracle {
  std::vector<std::complex<double>> filtered;   // prior at step n (before using dX_n)
  std::vector<Eigen::Matrix2d> filtered_cov;
  std::vector<std::complex<double>> smoothed;
  std::vector<Eigen::Matrix2d> smoothed_cov;
};

inline PairKalmanOracle pair_kalman_oracle(const ModeSet& ms, const LsmParams& p, const TracerTrack& track,
                                           double sigma_x, bool smooth) {
  const int rep = ms.conj_pair(0) > 0 ? 0 : 1;
  const ModeParams& mp = p.modes[rep];
  const Wavenumber k = ms.mode(rep).k;
  const Eigen::Vector2cd r = ms.velocity_eigenvector(rep);
  const double dt = track.dt;
  const std::size_t n_steps = track.steps();
  const int l_count = track.tracer_count();

  Eigen::Matrix2d M;
  M << -mp.d, -mp.omega, mp.omega, -mp.d;
  const double e = std::exp(-mp.d * dt);
  const double c = std::cos(mp.omega * dt), s = std::sin(mp.omega * dt);
  Eigen::Matrix2d Phi;
  Phi << e * c, -e * s, e * s, e * c;
  const Eigen::Vector2d force(mp.f.real(), mp.f.imag());
  const Eigen::Vector2d drift_int = M.inverse() * (Phi - Eigen::Matrix2d::Identity()) * force;
  const double qd = 0.5 * mp.sigma * mp.sigma * (1.0 - std::exp(-2.0 * mp.d * dt)) / (2.0 * mp.d);
  const Eigen::Matrix2d Q = qd * Eigen::Matrix2d::Identity();

  // Stationary prior.
  const std::complex<double> m0 = mp.f / std::complex<double>(mp.d, -mp.omega);
  Eigen::Vector2d m(m0.real(), m0.imag());
  Eigen::Matrix2d P = (mp.sigma * mp.sigma / (4.0 * mp.d)) * Eigen::Matrix2d::Identity();

  PairKalmanOracle out;
  std::vector<Eigen::Vector2d> post_m;
  std::vector<Eigen::Matrix2d> post_P;
  for (std::size_t n = 0; n <= n_steps; ++n) {
    out.filtered.emplace_back(m[0], m[1]);
    out.filtered_cov.push_back(P);
    if (n == n_steps) break;
    const auto col = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd H(2 * l_count, 2);
    for (int l = 0; l < l_count; ++l) {
      const double x = track.positions(2 * l, col), y = track.positions(2 * l + 1, col);
      const std::complex<double> g = std::exp(std::complex<double>(0.0, k.x * x + k.y * y));
      for (int j = 0; j < 2; ++j) {
        const std::complex<double> gr = g * r[j];
        H(2 * l + j, 0) = 2.0 * gr.real();
        H(2 * l + j, 1) = -2.0 * gr.imag();
      }
    }
    const Eigen::MatrixXd Hd = H * dt;
    const Eigen::MatrixXd S =
        Hd * P * Hd.transpose() + sigma_x * sigma_x * dt * Eigen::MatrixXd::Identity(2 * l_count, 2 * l_count);
    const Eigen::MatrixXd K = P * Hd.transpose() * S.ldlt().solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
    m += K * (track.increments.col(col) - Hd * m);
    P = (Eigen::Matrix2d::Identity() - K * Hd) * P;
    P = 0.5 * (P + P.transpose()).eval();
    post_m.push_back(m);
    post_P.push_back(P);
    m = Phi * m + drift_int;
    P = Phi * P * Phi.transpose() + Q;
  }
  if (!smooth) return out;
  out.smoothed.assign(n_steps + 1, {});
  out.smoothed_cov.assign(n_steps + 1, Eigen::Matrix2d::Zero());
  Eigen::Vector2d ms_next(out.filtered[n_steps].real(), out.filtered[n_steps].imag());
  Eigen::Matrix2d Ps_next = out.filtered_cov[n_steps];
  out.smoothed[n_steps] = out.filtered[n_steps];
  out.smoothed_cov[n_steps] = Ps_next;
  for (std::size_t n = n_steps; n-- > 0;) {
    const Eigen::Vector2d pred_m(out.filtered[n + 1].real(), out.filtered[n + 1].imag());
    const Eigen::Matrix2d& pred_P = out.filtered_cov[n + 1];
    const Eigen::Matrix2d G = post_P[n] * Phi.transpose() * pred_P.inverse();
    const Eigen::Vector2d sm = post_m[n] + G * (ms_next - pred_m);
    const Eigen::Matrix2d sP = post_P[n] + G * (Ps_next - pred_P) * G.transpose();
    out.smoothed[n] = {sm[0], sm[1]};
    out.smoothed_cov[n] = sP;
    ms_next = sm;
    Ps_next = sP;
  }
  return out;
}

}  // namespace lagda::testing
