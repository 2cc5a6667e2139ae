#pragma once

// Observation matrix A(X): rows (2l, 2l+1) hold the velocity of tracer l,
// columns are e^{i k_m . x_l} r_m for fluctuation modes and unit vectors for
// mean-flow slots, so dX = A(X) U dt + sigma_x dW.

#include "lagda/modes.hpp"
#include "lagda/real_basis.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lagda {

/// Positions are stacked as (x_1, y_1, x_2, y_2, ...).
struct ObservationMatrix {
  Eigen::MatrixXcd A;
  Eigen::VectorXd positions;
};

ObservationMatrix build_observation_matrix(const Eigen::VectorXd& positions, const ModeSet& ms);

/// P = A^* A, entry (m, n) = sum_l e^{i (k_m - k_n) . x_l} r_n^* r_m.
Eigen::MatrixXcd interaction_matrix(const Eigen::VectorXd& positions, const ModeSet& ms);

/// Builds A V (the observation matrix in real coordinates, a real matrix)
/// using per-tracer integer powers of e^{ix}, e^{iy}.
class RealObservationBuilder {
 public:
  RealObservationBuilder(const ModeSet& ms, const RealBasis& basis);

  void build(const Eigen::VectorXd& positions, Eigen::MatrixXd& out) const;
  Eigen::MatrixXd build(const Eigen::VectorXd& positions) const;

  /// Only the rows of the given tracers, in the given order.
  void build_subset(const Eigen::VectorXd& positions, const std::vector<int>& tracers,
                    Eigen::MatrixXd& out) const;

  /// Diagonal of the complex interaction matrix, L ||r_m||^2, per real coordinate
  /// (pairs share their mode value; mean-flow coordinates get L).
  Eigen::VectorXd interaction_diagonal(int tracer_count) const;

 private:
  void fill_tracer(double x, double y, Eigen::Ref<Eigen::MatrixXd> rows) const;

  struct PairColumn {
    int offset;
    int kx, ky;
    Eigen::Vector2cd r;
  };
  std::vector<PairColumn> pairs_;
  std::vector<double> pair_norm2_;
  int mean_x_col_ = -1;
  int mean_y_col_ = -1;
  int dim_ = 0;
  int kmax_ = 0;
};

/// Per-tracer table of e^{i k x} for |k| <= kmax.
void fill_phase_powers(double x, int kmax, std::vector<cdouble>& table);

}  // namespace lagda
