#pragma once

// Ensemble Kalman-Bucy filter with deterministic innovations:
//   z_i <- forecast(z_i) + noise + C_zh sigma_x^-2 (dX - (h_i + h_mean) dt / 2)
// where h_i is member i's tracer velocity and C_zh the ensemble
// cross-covariance, both taken from the pre-step ensemble.

#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"
#include "lagda/rng.hpp"
#include "lagda/simulate.hpp"
#include "lagda/topographic.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace lagda {

struct EnsembleModel {
  int dim = 0;
  /// Deterministic right-hand side.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  /// Maps dim standard normals to the noise increment per unit sqrt(time).
  Eigen::MatrixXd noise_factor;
  /// Velocities at stacked tracer positions.
  std::function<Eigen::VectorXd(const Eigen::VectorXd& state, const Eigen::VectorXd& positions)> observe;
  bool rk4 = true;
};

EnsembleModel topographic_ensemble_model(const TopoDynamics& dyn);
/// LSM in the real coordinates of RealBasis (Euler forecast).
EnsembleModel lsm_ensemble_model(const LsmParams& params, const ModeSet& ms);

struct Ensemble {
  Eigen::MatrixXd members;  // dim x Ne
  double time = 0.0;

  Eigen::VectorXd mean() const { return members.rowwise().mean(); }
  Eigen::VectorXd variance() const;
};

struct EnkbfConfig {
  double sigma_x = 0.25;
  std::uint64_t seed = 3;
  /// Error when the ensemble covariance trace drops below collapse_tol.
  bool collapse_check = true;
  double collapse_tol = 1e-14;
};

/// Members drawn as mean + factor * xi from the Ensemble stream.
Ensemble initial_ensemble(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, int members,
                          std::uint64_t seed);

/// One step; `noise` supplies one standard-normal stream per member.
Ensemble enkbf_step(const Ensemble& ens, const Eigen::VectorXd& dX, const Eigen::VectorXd& positions,
                    const EnsembleModel& model, double sigma_x, double dt,
                    std::vector<NormalStream>& noise, const EnkbfConfig& cfg,
                    std::size_t step = 0);

struct EnkbfSeries {
  double dt = 0.0;
  Eigen::MatrixXd mean;      // dim x (N + 1)
  Eigen::MatrixXd variance;  // dim x (N + 1)
};

EnkbfSeries run_enkbf(const TracerTrack& track, const EnsembleModel& model, const Ensemble& initial,
                      const EnkbfConfig& cfg);

}  // namespace lagda
