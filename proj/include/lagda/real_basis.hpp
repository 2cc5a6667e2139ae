#pragma once

// Real coordinates for conjugate-symmetric coefficient vectors.
//
// For a pair (m, p = conj(m)) the two real coordinates are
//   z0 = sqrt(2) Re U_m,  z1 = sqrt(2) Im U_m,
// so U = V z with V unitary. Mean-flow slots map to themselves. Under this
// change of variables the complex filter, smoother and sampler equations
// become real equations of the same dimension with block-diagonal dynamics,
// which is what the time-stepping code integrates.

#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lagda {

struct RealBlock {
  int offset = 0;
  int size = 2;
  int first = 0;        // representative mode position
  int second = 0;       // conjugate partner, or the MeanFlowY slot
  bool mean_flow = false;
};

class RealBasis {
 public:
  RealBasis() = default;
  explicit RealBasis(const ModeSet& ms);

  int dim() const { return dim_; }
  const std::vector<RealBlock>& blocks() const { return blocks_; }
  /// Block holding mode m, and the coordinate of m inside it.
  const RealBlock& block_of(int m) const { return blocks_[block_of_[m]]; }
  int block_index(int m) const { return block_of_[m]; }

  Eigen::VectorXd to_real(const Eigen::VectorXcd& u) const;
  Eigen::VectorXcd to_complex(const Eigen::VectorXd& z) const;
  /// Columns of a K x N series.
  Eigen::MatrixXcd to_complex_series(const Eigen::MatrixXd& z) const;

  /// The unitary V with U = V z.
  Eigen::MatrixXcd unitary() const;
  Eigen::MatrixXcd covariance_to_complex(const Eigen::MatrixXd& rz) const;
  Eigen::MatrixXd covariance_to_real(const Eigen::MatrixXcd& r) const;
  /// E|U_m - mu_m|^2 for every mode.
  Eigen::VectorXd complex_variance(const Eigen::MatrixXd& rz) const;
  Eigen::VectorXd complex_variance_diag(const Eigen::VectorXd& rz_diag) const;

 private:
  int dim_ = 0;
  std::vector<RealBlock> blocks_;
  std::vector<int> block_of_;
};

/// LSM dynamics dz = (F + Lambda z) dt + Sigma dW in real coordinates, stored
/// per 2x2 (or 1x1) block.
struct BlockDynamics {
  int offset = 0;
  int size = 2;
  Eigen::Matrix2d drift = Eigen::Matrix2d::Zero();
  Eigen::Vector2d force = Eigen::Vector2d::Zero();
  Eigen::Matrix2d noise = Eigen::Matrix2d::Zero();
};

class RealLinearModel {
 public:
  RealLinearModel() = default;
  RealLinearModel(const RealBasis& basis, const ModeSet& ms, const LsmParams& params);

  int dim() const { return dim_; }
  const std::vector<BlockDynamics>& blocks() const { return blocks_; }

  /// F + Lambda z.
  Eigen::VectorXd drift(const Eigen::VectorXd& z) const;
  /// Lambda M (M has dim() rows).
  Eigen::MatrixXd lambda_times(const Eigen::MatrixXd& m) const;
  /// Lambda R + R Lambda^T + Sigma Sigma^T.
  Eigen::MatrixXd lyapunov_rhs(const Eigen::MatrixXd& r) const;
  /// Sigma xi for a vector of standard normals.
  Eigen::VectorXd apply_noise(const Eigen::VectorXd& xi) const;

  /// Stationary mean and covariance (block diagonal); throws InvalidArgument
  /// if some block is not strictly damped.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> stationary_moments() const;

  Eigen::MatrixXd lambda_dense() const;
  Eigen::MatrixXd noise_covariance_dense() const;
  Eigen::VectorXd force() const;

 private:
  int dim_ = 0;
  std::vector<BlockDynamics> blocks_;
};

}  // namespace lagda
