#pragma once

// Linear stochastic model (LSM) parameters: one complex Ornstein-Uhlenbeck
// equation per fluctuation mode,
//   d vhat = ((-d + i omega) vhat + f) dt + sigma dW,
// plus a real 2-D linear SDE for the mean flow,
//   d w = ((-D0 + Omega0) w + f0) dt + Sigma0 dW0.

#include "lagda/modes.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lagda {

struct ModeParams {
  double d = 1.0;
  double omega = 0.0;
  cdouble f{0.0, 0.0};
  double sigma = 1.0;
};

struct MeanFlowParams {
  Eigen::Vector2d damping{1.0, 1.0};   // diagonal of D0
  Eigen::Vector2d rotation{0.0, 0.0};  // Omega0(0,1), Omega0(1,0)
  Eigen::Vector2d forcing{0.0, 0.0};   // f0
  Eigen::Matrix2d noise = Eigen::Matrix2d::Identity();  // Sigma0

  /// -D0 + Omega0.
  Eigen::Matrix2d drift() const;
};

struct LsmParams {
  /// Aligned with the ModeSet; entries at mean-flow positions are unused.
  std::vector<ModeParams> modes;
  MeanFlowParams mean_flow;
};

/// Throws InvalidArgument unless d > 0, sigma >= 0, D0 > 0 and conjugate
/// partners carry (equal d, sigma; negated omega; conjugated f).
void validate(const LsmParams& params, const ModeSet& ms);

/// d = 1, omega = 0, f = 0, sigma = 1 everywhere; unit mean-flow damping.
LsmParams default_initial_guess(const ModeSet& ms);

/// Energy-spectrum model: d_k = d + nu |k|^2, f = 0, omega = 0 and sigma from
/// the assigned spectrum E_k. Gravity modes get omega = +-Ro^-1 sqrt(|k|^2+1)
/// and gravity_energy_ratio * E_k; gravity modes at k = 0 use the |k| = 1
/// shell energy.
struct SpectrumModel {
  double d = 0.3;
  double nu = 0.05;
  double E0 = 1.0;
  double k0 = 2.0;
  double alpha = 3.0;
  double rossby = 1.0;
  double gravity_energy_ratio = 0.25;
};
LsmParams spectrum_params(const ModeSet& ms, const SpectrumModel& model);

/// 1/2 (|f|^2 / (d^2 + omega^2) + sigma^2 / (2d)): mean-square amplitude of
/// the stationary mode, reducing to 1/2 (f^2/d^2 + sigma^2/(2d)) at omega = 0.
double mode_energy(const ModeParams& p);

/// Mean per-mode energy over the modes of one |k|^2 shell (fluctuation modes
/// of the given kind only).
struct ShellEnergy {
  int k2 = 0;
  double energy = 0.0;
  int count = 0;
};
std::vector<ShellEnergy> shell_energies(const LsmParams& params, const ModeSet& ms,
                                        ModeKind kind = ModeKind::GB);

/// Damping and noise coefficients stacked over fluctuation modes.
Eigen::VectorXd stacked_damping(const LsmParams& params, const ModeSet& ms);
Eigen::VectorXd stacked_noise(const LsmParams& params, const ModeSet& ms);

}  // namespace lagda
