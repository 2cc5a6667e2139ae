#pragma once

// Conditional-Gaussian Lagrangian filter
//   dmu = (F + Lambda mu) dt + sigma_x^-2 R A^* (dX - A mu dt)
//   dR  = (Lambda R + R Lambda^* + Sigma Sigma^* - sigma_x^-2 R A^* A R) dt
// and its diagonal / constant-diagonal / randomized-selection approximations.
// Time stepping runs in the real coordinates of RealBasis; the complex form is
// kept as a reference implementation.

#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"
#include "lagda/observation.hpp"
#include "lagda/real_basis.hpp"
#include "lagda/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lagda {

enum class FilterVariant { Full, DiagRiccati, DiagConstant, Randomized };

std::string to_string(FilterVariant v);
FilterVariant filter_variant_from_string(const std::string& name);

struct PosteriorGaussian {
  Eigen::VectorXcd mu;
  Eigen::MatrixXcd R;
  double time = 0.0;
};

struct FilterConfig {
  FilterVariant variant = FilterVariant::Full;
  double sigma_x = 0.25;
  double jitter = 1e-10;
  /// Tracers used per step by the Randomized variant.
  int L_prime = 0;
  bool rescale = true;
  /// Seed of the tracer-selection stream.
  std::uint64_t seed = 1;
  /// Initial posterior; the prior stationary moments when unset.
  std::optional<PosteriorGaussian> initial;
  /// Full covariance is stored every this many steps for backward passes.
  int checkpoint_every = 100;

  void validate(int tracer_count) const;
};

struct FilterSeries {
  FilterVariant variant = FilterVariant::Full;
  double dt = 0.0;
  FilterConfig config;
  RealBasis basis;
  /// Real-coordinate posterior mean, dim x (N + 1).
  Eigen::MatrixXd mean;
  /// Diagonal of the real-coordinate covariance, dim x (N + 1).
  Eigen::MatrixXd variance;
  Eigen::MatrixXd terminal_cov;
  /// Full covariance at steps 0, C, 2C, ... (Full variant only).
  std::vector<Eigen::MatrixXd> checkpoints;
  int checkpoint_every = 0;
  /// Dispersion part of the relative entropy to the filter model's
  /// equilibrium, per step (NaN where unavailable).
  Eigen::VectorXd dispersion;
  std::size_t clamp_count = 0;

  std::size_t steps() const { return static_cast<std::size_t>(mean.cols()) - 1; }
  Eigen::MatrixXcd mean_complex() const { return basis.to_complex_series(mean); }
  /// E|U_m - mu_m|^2 per mode, K x (N + 1).
  Eigen::MatrixXd mode_variance() const;
  PosteriorGaussian terminal() const;
};

/// One explicit Euler step of the complex filter equations (reference path).
/// Symmetrizes R and clamps eigenvalues below `jitter`; increments `clamps`
/// when a clamp happened.
PosteriorGaussian step_full_filter(const PosteriorGaussian& post, const Eigen::VectorXd& dX,
                                   const Eigen::MatrixXcd& A, const LsmParams& params,
                                   const ModeSet& ms, double sigma_x, double dt, double jitter,
                                   std::size_t* clamps = nullptr);

/// Real-coordinate covariance step R <- R + (Lambda R + R Lambda^T + Q -
/// sigma_x^-2 (A R)^T (A R)) dt, symmetrized and clamped. Returns true if a
/// clamp was applied; fills `ar` with A R of the pre-step covariance.
bool step_covariance(Eigen::MatrixXd& R, const Eigen::MatrixXd& A, const RealLinearModel& model,
                     double sigma_x, double dt, double jitter, Eigen::MatrixXd& ar);

/// Stationary diagonal variance sigma^2 / (d + sqrt(d^2 + P sigma_x^-2 sigma^2))
/// where P = L ||r||^2 is the mean-field interaction diagonal.
double stationary_diagonal_variance(double d, double sigma, double sigma_x, double interaction);

PosteriorGaussian prior_posterior(const LsmParams& params, const ModeSet& ms);

FilterSeries run_filter(const TracerTrack& track, const LsmParams& params, const ModeSet& ms,
                        const FilterConfig& cfg);

/// Filter covariance at step n, replayed backwards in time from the tape
/// (Full variant) or rebuilt from the stored diagonal (other variants).
/// at(n) must be called with non-increasing n.
class CovarianceReplay {
 public:
  CovarianceReplay(const FilterSeries& series, const TracerTrack& track, const LsmParams& params,
                   const ModeSet& ms);
  const Eigen::MatrixXd& at(std::size_t n);

 private:
  void load_segment(std::size_t seg);

  const FilterSeries& series_;
  const TracerTrack& track_;
  RealLinearModel model_;
  RealObservationBuilder obs_;
  std::vector<Eigen::MatrixXd> segment_;
  std::size_t loaded_ = static_cast<std::size_t>(-1);
  Eigen::MatrixXd diag_;
};

}  // namespace lagda
