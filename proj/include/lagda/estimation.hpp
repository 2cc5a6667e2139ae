#pragma once

// Statistics of mode time series and the parameter estimation loop.
//
// ACF convention: ACF(s) = <u(t+s) conj(u(t))> / Var(u), which is
// exp((-d + i omega) s) for d u = ((-d + i omega) u + f) dt + sigma dW.
// The decorrelation time of the matching-statistics formulas is the
// conjugate of its integral, T - i theta = 1 / (d + i omega), so a fitted
// exp((-c1 + i c2) t) gives T = c1 / (c1^2 + c2^2), theta = c2 / (c1^2 + c2^2).

#include "lagda/filter.hpp"
#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"
#include "lagda/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace lagda {

struct ModeStatistics {
  cdouble m{0.0, 0.0};
  double E = 0.0;
  double T = 0.0;
  double theta = 0.0;
};

struct AcfFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double residual = 0.0;
  int lags_used = 0;
};

/// Biased sample ACF for lags 0..max_lag (series demeaned internally).
Eigen::VectorXcd compute_acf(const Eigen::VectorXcd& series, int max_lag);

/// Least-squares fit of exp((-c1 + i c2) t) over lags up to
/// min(max_lag, 5 / c1_crude), c1_crude from the first 1/e crossing of |ACF|.
AcfFit fit_acf_ansatz(const Eigen::VectorXcd& acf, double dt);

struct DecorrelationTime {
  double T = 0.0;
  double theta = 0.0;
};
DecorrelationTime decorrelation_time(const AcfFit& fit);

/// (f, d, omega, sigma) from (m, E, T, theta).
ModeParams match_statistics(const ModeStatistics& stats);

/// Exact stationary statistics of an OU mode (inverse of match_statistics).
ModeStatistics analytic_statistics(const ModeParams& p);

/// Mean, variance and fitted decorrelation time of one series.
ModeStatistics series_statistics(const Eigen::VectorXcd& series, double dt, int max_lag,
                                 AcfFit* fit = nullptr);

/// OLS of (w_{n+1} - w_n) / dt on [w_n, 1]; rows of w are the mean-flow
/// components. Sigma0 is the diagonal square root of dt times the residual
/// covariance. Throws InvalidArgument on rank deficiency.
MeanFlowParams regress_mean_flow(const Eigen::MatrixXd& w, double dt);

struct EstimationConfig {
  double eps = 1e-2;
  int max_iter = 10;
  std::optional<LsmParams> theta0;
  /// Largest ACF lag in time units (also capped at a quarter of the series).
  double max_lag_time = 20.0;
  /// Statistics are averaged over this many sampled trajectories.
  int samples = 1;
  /// Sampler seed, reused every iteration.
  std::uint64_t seed = 11;
  /// Lower bound applied to fitted mean-flow damping.
  double min_damping = 1e-4;
  double jitter = 1e-10;
  int checkpoint_every = 100;
  int workers = 1;
};

struct IterationRecord {
  int iteration = 0;
  /// ||theta_n - theta_{n-1}|| / ||theta_{n-1}|| over stacked (d, sigma).
  double change = 0.0;
  double change_d = 0.0;
  double change_sigma = 0.0;
  LsmParams params;
};

struct EstimationResult {
  LsmParams params;
  std::vector<IterationRecord> trace;
  bool converged = false;
};

/// One update: per-mode statistics of the given real-coordinate trajectories
/// (averaged) mapped through match_statistics, and the mean-flow regression.
LsmParams update_from_samples(const std::vector<Eigen::MatrixXd>& samples, const RealBasis& basis,
                              const ModeSet& ms, double dt, const EstimationConfig& cfg,
                              const LsmParams& previous);

/// Filter -> backward smoother mean and sample(s) -> statistics -> update,
/// repeated until the stacked (d, sigma) change drops below eps or max_iter.
/// One-shot calibration from an observed signal (K x (N + 1), aligned with
/// ms) instead of sampled trajectories.
LsmParams calibrate_from_series(const Eigen::MatrixXcd& flow, const ModeSet& ms, double dt,
                                const EstimationConfig& cfg);

EstimationResult estimate_parameters_iterative(
    const TracerTrack& track, const ModeSet& ms, double sigma_x, const EstimationConfig& cfg,
    const std::function<void(const IterationRecord&)>& on_iteration = {});

/// Stacked (d, sigma) over fluctuation modes.
Eigen::VectorXd stacked_damping_noise(const LsmParams& params, const ModeSet& ms);

}  // namespace lagda
