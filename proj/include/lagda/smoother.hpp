#pragma once

// Backward smoother and backward trajectory sampler over a filter run:
//   <-dmu_s = -F - Lambda mu_s + Q R^-1 (mu - mu_s)
//   <-dR_s  = -(Lambda + Q R^-1) R_s - R_s (Lambda + Q R^-1)^T + Q
//   <-dU    = <-dmu_s - (Lambda + Q R^-1) (U - mu_s) + Sigma dW
// integrated with Euler steps from t = T down to 0, anchored at the filter's
// terminal Gaussian. The Q R^-1 relaxation is taken implicitly through
// R (R + dt Q)^-1; the remaining terms are explicit. Q = Sigma Sigma^T; R is
// the filter covariance.

#include "lagda/filter.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace lagda {

enum class SmootherCovarianceForm {
  /// R_s (Lambda + Q R^-1)^T as derived for the Gaussian backward equations.
  Correct,
  /// R_s (Lambda^T + Q R), the literal printed transcription; kept so the
  /// oracle test can show it disagrees with fixed-interval smoothing.
  Printed,
};

struct SmootherConfig {
  SmootherCovarianceForm form = SmootherCovarianceForm::Correct;
  double jitter = 1e-10;
  bool covariance = true;
};

struct SmootherSeries {
  double dt = 0.0;
  RealBasis basis;
  /// Real-coordinate smoother mean and covariance diagonal, dim x (N + 1).
  Eigen::MatrixXd mean;
  Eigen::MatrixXd variance;
  /// Full smoother covariance at t = 0.
  Eigen::MatrixXd initial_cov;

  std::size_t steps() const { return static_cast<std::size_t>(mean.cols()) - 1; }
  Eigen::MatrixXcd mean_complex() const { return basis.to_complex_series(mean); }
  Eigen::MatrixXd mode_variance() const;
};

SmootherSeries run_backward_smoother(const FilterSeries& filter, const TracerTrack& track,
                                     const LsmParams& params, const ModeSet& ms,
                                     const SmootherConfig& cfg = {});

struct SampledPaths {
  /// Real-coordinate paths, dim x (N + 1) each (empty unless kept).
  std::vector<Eigen::MatrixXd> paths;
  /// Pointwise sample mean and variance per real coordinate.
  Eigen::MatrixXd mean;
  Eigen::MatrixXd variance;
  int count = 0;

  /// Path i in complex mode coordinates.
  Eigen::MatrixXcd complex_path(const RealBasis& basis, std::size_t i) const {
    return basis.to_complex_series(paths.at(i));
  }
};

/// `count` independent backward samples; path j uses the Sampler stream with
/// index j. U(T) is drawn from the filter terminal Gaussian.
SampledPaths sample_backward_trajectories(const SmootherSeries& smoother, const FilterSeries& filter,
                                          const TracerTrack& track, const LsmParams& params,
                                          const ModeSet& ms, int count, std::uint64_t seed,
                                          bool keep_paths = true, double jitter = 1e-10);

/// Single sampled trajectory in complex mode coordinates.
Eigen::MatrixXcd sample_backward_trajectory(const SmootherSeries& smoother, const FilterSeries& filter,
                                            const TracerTrack& track, const LsmParams& params,
                                            const ModeSet& ms, std::uint64_t seed);

/// Smoother mean plus sampled trajectories in one backward sweep (no smoother
/// covariance); the replayed filter covariance is shared.
struct BackwardPass {
  Eigen::MatrixXd smoother_mean;
  std::vector<Eigen::MatrixXd> samples;
};
BackwardPass backward_mean_and_samples(const FilterSeries& filter, const TracerTrack& track,
                                       const LsmParams& params, const ModeSet& ms, int samples,
                                       std::uint64_t seed, double jitter = 1e-10);

}  // namespace lagda
