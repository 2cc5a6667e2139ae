#pragma once

// Layered barotropic model with topography along l = (1, 0):
//   dpsi_k = [-d_k psi_k + i k (beta / k^2 - u) psi_k + i h_k u / k] dt + sigma_k dW_k
//   du     = [-d_u u + sum_{k>0} 2 k Im(h_k conj(psi_k))] dt + sigma_u dW_u
// with psi_{-k} = conj(psi_k). The velocity is (u, v(x)) with
// v = dpsi/dx = sum_k i k psi_k e^{i k x}.
//
// Real state layout: (u, Re psi_1, Im psi_1, ..., Re psi_K, Im psi_K).

#include "lagda/modes.hpp"
#include "lagda/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace lagda {

struct TopoModelParams {
  int K = 6;
  /// Fluctuation damping d_k, k = 1..K.
  Eigen::VectorXd damping = Eigen::VectorXd::Constant(6, 0.0125);
  double damping_u = 0.0125;
  double beta = 1.0;
  double H1 = 1.0;
  double H2 = 0.5;
  double p = 1.0;
  std::uint64_t theta_seed = 7;
  /// Noise on psi_k (complex circular, E|dW|^2 = dt), k = 1..K.
  Eigen::VectorXd sigma_v = Eigen::VectorXd::Zero(6);
  double sigma_u = 0.0;
  /// h_k, k = 1..K; filled from (H1, H2, p, theta_seed) when empty.
  Eigen::VectorXcd topography;

  void validate() const;
  /// Topography coefficients (stored ones if present).
  Eigen::VectorXcd h() const;
};

/// h_1 = H1/2 - i H1/2, h_2 = H2/2 - i H2/2, and
/// h_k = sin(theta_k) / (4 k^p) - i cos(theta_k) / (4 k^p) for k >= 3 with
/// theta_k uniform on [0, 2pi). Returns h_1..h_K.
Eigen::VectorXcd topography_coefficients(int K, double H1, double H2, double p, std::uint64_t seed);
Eigen::VectorXcd topography_from_phases(int K, double H1, double H2, double p,
                                        const Eigen::VectorXd& theta);

enum class Regime { I, II };

struct RegimeNoise {
  Eigen::VectorXd sigma_v;  // k = 1..K
  double sigma_u = 0.0;
};
RegimeNoise regime_noise(Regime regime, int K);

/// Parameters with the stated regime noise and uniform damping 0.0125.
TopoModelParams regime_params(Regime regime, int K = 6, std::uint64_t theta_seed = 7);

class TopoDynamics {
 public:
  TopoDynamics() = default;
  explicit TopoDynamics(const TopoModelParams& params);

  int K() const { return K_; }
  int dim() const { return 2 * K_ + 1; }

  Eigen::VectorXd drift(const Eigen::VectorXd& state) const;
  /// Per-coordinate noise amplitude (real white noise on each coordinate).
  const Eigen::VectorXd& noise() const { return noise_; }
  Eigen::VectorXd rk4_step(const Eigen::VectorXd& state, double dt) const;

  /// Velocities (u, v) at the stacked positions.
  Eigen::VectorXd velocity(const Eigen::VectorXd& state, const Eigen::VectorXd& positions) const;

  /// Layered coefficients (v_{-K..-1}, v_{1..K}, u) with v_k = i k psi_k.
  Eigen::VectorXcd to_layered(const Eigen::VectorXd& state) const;
  Eigen::VectorXd from_layered(const Eigen::VectorXcd& values) const;

 private:
  int K_ = 0;
  Eigen::VectorXd d_;
  double du_ = 0.0;
  double beta_ = 0.0;
  Eigen::VectorXcd h_;
  Eigen::VectorXd noise_;
};

/// The same right-hand side restricted to k = 1..kept (the u-equation sum
/// truncated accordingly).
TopoModelParams reduced_model(const TopoModelParams& full, int kept);
TopoDynamics reduced_drift(const TopoModelParams& full, int kept);

/// RK4 for the deterministic part plus Euler-Maruyama noise per step, with
/// tracers advected by (u, v(x)) plus sigma_x noise. `spinup` time units are
/// integrated before t = 0 without tracers. The flow series is stored in
/// build_layered_modeset(K) ordering.
TruthRecord simulate_topographic(const TopoModelParams& tp, const SimConfig& cfg,
                                 double spinup = 0.0,
                                 const Eigen::VectorXd* initial_state = nullptr);

/// Layered coefficients re-expressed on a GB mode set containing (k, 0),
/// k = +-1..+-K, and a MeanFlowX slot: vhat_(k,0) = k^2 psi_k = -i k v_k.
/// Modes of the GB set that the layered model does not excite are zero.
Eigen::MatrixXcd layered_to_gb_series(const Eigen::MatrixXcd& layered, const ModeSet& layered_ms,
                                      const ModeSet& gb_ms);

}  // namespace lagda
