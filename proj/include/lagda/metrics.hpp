#pragma once

#include "lagda/filter.hpp"
#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace lagda {

struct RmseCorr {
  double rmse = 0.0;
  double corr = 0.0;
};

/// RMS error divided by std(truth), and the centered cosine similarity.
RmseCorr rmse_corr(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);
/// Complex series scored with real and imaginary parts stacked.
RmseCorr rmse_corr(const Eigen::VectorXcd& estimate, const Eigen::VectorXcd& truth);

/// Per-row scores of K x N series over columns [first, last).
std::vector<RmseCorr> per_mode_rmse_corr(const Eigen::MatrixXcd& estimate, const Eigen::MatrixXcd& truth,
                                         Eigen::Index first = 0, Eigen::Index last = -1);

struct RelativeEntropy {
  double signal = 0.0;
  double dispersion = 0.0;
};

/// signal = 1/2 (mu - mu_eq)^* R_eq^-1 (mu - mu_eq),
/// dispersion = -1/2 log det(R R_eq^-1) + 1/2 (tr(R R_eq^-1) - K).
RelativeEntropy gaussian_relative_entropy(const Eigen::VectorXcd& mu, const Eigen::MatrixXcd& R,
                                          const Eigen::VectorXcd& mu_eq, const Eigen::MatrixXcd& R_eq);
RelativeEntropy gaussian_relative_entropy(const Eigen::VectorXd& mu, const Eigen::MatrixXd& R,
                                          const Eigen::VectorXd& mu_eq, const Eigen::MatrixXd& R_eq);

/// ||est - ref|| / ||ref||.
double relative_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference);

/// Stationary Gaussian of the LSM (complex mode coordinates).
PosteriorGaussian equilibrium_prior(const LsmParams& params, const ModeSet& ms);

/// Signal and dispersion averaged over steps [start_fraction * N, N].
RelativeEntropy time_averaged_information(const FilterSeries& fs, const LsmParams& params,
                                          const ModeSet& ms, double start_fraction = 0.5);

double excess_kurtosis(const Eigen::VectorXd& x);

struct SkillReport {
  double rmse = 0.0;
  double corr = 0.0;
  double signal = 0.0;
  double dispersion = 0.0;
  std::vector<RmseCorr> per_mode;

  std::string to_json() const;
};

/// Scores a posterior mean series against truth over the second part of the
/// run (columns from start_fraction * N); rmse/corr are averaged over modes.
SkillReport skill_report(const FilterSeries& fs, const Eigen::MatrixXcd& truth, const LsmParams& params,
                         const ModeSet& ms, double start_fraction = 0.5);

}  // namespace lagda
