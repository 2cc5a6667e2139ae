#pragma once

// Truth generation for the coupled tracer / flow system
//   dx_l = v(x_l, t) dt + sigma_x dW_l,   dU = (F + Lambda U) dt + Sigma dW_U,
// with Euler-Maruyama stepping. Each fluctuation pair, the mean flow and each
// tracer draw from their own seeded stream, so adding tracers never changes
// the flow realization.

#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lagda {

struct SimConfig {
  double dt = 0.002;
  double T = 10.0;
  std::uint64_t seed = 1;
  double sigma_x = 0.25;
  int tracers = 0;
  /// Explicit initial tracer positions; i.i.d. uniform on the torus if empty.
  std::vector<Eigen::Vector2d> initial_tracers;
  /// Explicit U(0); otherwise a draw from the stationary law (or zero when
  /// stationary_start is false).
  std::optional<Eigen::VectorXcd> initial_flow;
  bool stationary_start = true;
  /// Keep the standard-normal flow draws (real coordinates) for replay.
  bool record_noise = false;

  std::size_t steps() const;
  void validate() const;
};

/// Tracer paths: column n of positions is (x_1, y_1, ..., x_L, y_L) at t_n,
/// wrapped into [0, 2pi)^2; column n of increments is the unwrapped
/// displacement from t_n to t_{n+1}, each component in (-pi, pi].
struct TracerTrack {
  double dt = 0.0;
  Eigen::MatrixXd positions;
  Eigen::MatrixXd increments;

  int tracer_count() const { return static_cast<int>(positions.rows() / 2); }
  std::size_t steps() const { return static_cast<std::size_t>(increments.cols()); }

  /// The first `count` tracers.
  TracerTrack head(int count) const;
};

struct TruthRecord {
  std::string model = "lsm";
  SimConfig config;
  Eigen::VectorXd times;
  /// K x (N + 1), aligned with the generating ModeSet.
  Eigen::MatrixXcd flow;
  TracerTrack tracers;
  /// dim x N standard-normal draws in real coordinates (empty unless recorded).
  Eigen::MatrixXd noise;
};

TruthRecord simulate_coupled(const LsmParams& params, const ModeSet& ms, const SimConfig& cfg);

/// Advances the LSM with prescribed standard-normal draws (as recorded by
/// simulate_coupled) from U(0); returns the K x (N + 1) flow series.
Eigen::MatrixXcd replay_flow(const LsmParams& params, const ModeSet& ms,
                             const Eigen::MatrixXd& noise, double dt,
                             const Eigen::VectorXcd& initial);

/// Uniform initial tracer positions from per-tracer streams.
std::vector<Eigen::Vector2d> uniform_tracers(int count, std::uint64_t seed);

}  // namespace lagda
