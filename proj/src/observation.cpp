#include "lagda/observation.hpp"

#include "lagda/error.hpp"

#include <cmath>

namespace lagda {

void fill_phase_powers(double x, int kmax, std::vector<cdouble>& table) {
  table.resize(2 * kmax + 1);
  const cdouble e = std::polar(1.0, x);
  table[kmax] = 1.0;
  cdouble p = 1.0;
  for (int j = 1; j <= kmax; ++j) {
    p *= e;
    table[kmax + j] = p;
    table[kmax - j] = std::conj(p);
  }
}

ObservationMatrix build_observation_matrix(const Eigen::VectorXd& positions, const ModeSet& ms) {
  if (positions.size() % 2 != 0) throw InvalidArgument("positions must have even length");
  const Eigen::Index l_count = positions.size() / 2;
  const int kmax = ms.max_abs_wavenumber();
  ObservationMatrix obs;
  obs.positions = positions;
  obs.A = Eigen::MatrixXcd::Zero(2 * l_count, static_cast<Eigen::Index>(ms.size()));
  std::vector<cdouble> px, py;
  for (Eigen::Index l = 0; l < l_count; ++l) {
    fill_phase_powers(positions[2 * l], kmax, px);
    fill_phase_powers(positions[2 * l + 1], kmax, py);
    for (std::size_t m = 0; m < ms.size(); ++m) {
      const auto& idx = ms.mode(m);
      if (idx.kind == ModeKind::MeanFlowX) {
        obs.A(2 * l, m) = 1.0;
      } else if (idx.kind == ModeKind::MeanFlowY) {
        obs.A(2 * l + 1, m) = 1.0;
      } else {
        const cdouble g = px[kmax + idx.k.x] * py[kmax + idx.k.y];
        const Eigen::Vector2cd r = ms.velocity_eigenvector(m);
        obs.A(2 * l, m) = g * r[0];
        obs.A(2 * l + 1, m) = g * r[1];
      }
    }
  }
  return obs;
}

Eigen::MatrixXcd interaction_matrix(const Eigen::VectorXd& positions, const ModeSet& ms) {
  const auto obs = build_observation_matrix(positions, ms);
  return obs.A.adjoint() * obs.A;
}

RealObservationBuilder::RealObservationBuilder(const ModeSet& ms, const RealBasis& basis)
    : dim_(basis.dim()), kmax_(ms.max_abs_wavenumber()) {
  for (const auto& b : basis.blocks()) {
    if (b.mean_flow) {
      mean_x_col_ = b.offset;
      if (b.size == 2) mean_y_col_ = b.offset + 1;
      continue;
    }
    const auto& idx = ms.mode(b.first);
    pairs_.push_back({b.offset, idx.k.x, idx.k.y, ms.velocity_eigenvector(b.first)});
    pair_norm2_.push_back(ms.velocity_eigenvector(b.first).squaredNorm());
  }
}

void RealObservationBuilder::fill_tracer(double x, double y, Eigen::Ref<Eigen::MatrixXd> rows) const {
  thread_local std::vector<cdouble> px, py;
  fill_phase_powers(x, kmax_, px);
  fill_phase_powers(y, kmax_, py);
  for (const auto& pc : pairs_) {
    const cdouble g = px[kmax_ + pc.kx] * py[kmax_ + pc.ky];
    const cdouble c0 = g * pc.r[0];
    const cdouble c1 = g * pc.r[1];
    rows(0, pc.offset) = M_SQRT2 * c0.real();
    rows(0, pc.offset + 1) = -M_SQRT2 * c0.imag();
    rows(1, pc.offset) = M_SQRT2 * c1.real();
    rows(1, pc.offset + 1) = -M_SQRT2 * c1.imag();
  }
  if (mean_x_col_ >= 0) {
    rows(0, mean_x_col_) = 1.0;
    rows(1, mean_x_col_) = 0.0;
  }
  if (mean_y_col_ >= 0) {
    rows(0, mean_y_col_) = 0.0;
    rows(1, mean_y_col_) = 1.0;
  }
}

void RealObservationBuilder::build(const Eigen::VectorXd& positions, Eigen::MatrixXd& out) const {
  const Eigen::Index l_count = positions.size() / 2;
  out.resize(2 * l_count, dim_);
  for (Eigen::Index l = 0; l < l_count; ++l) {
    fill_tracer(positions[2 * l], positions[2 * l + 1], out.middleRows<2>(2 * l));
  }
}

Eigen::MatrixXd RealObservationBuilder::build(const Eigen::VectorXd& positions) const {
  Eigen::MatrixXd out;
  build(positions, out);
  return out;
}

void RealObservationBuilder::build_subset(const Eigen::VectorXd& positions,
                                          const std::vector<int>& tracers,
                                          Eigen::MatrixXd& out) const {
  out.resize(2 * static_cast<Eigen::Index>(tracers.size()), dim_);
  for (std::size_t j = 0; j < tracers.size(); ++j) {
    const int l = tracers[j];
    fill_tracer(positions[2 * l], positions[2 * l + 1], out.middleRows<2>(2 * j));
  }
}

Eigen::VectorXd RealObservationBuilder::interaction_diagonal(int tracer_count) const {
  Eigen::VectorXd diag(dim_);
  for (std::size_t j = 0; j < pairs_.size(); ++j) {
    diag[pairs_[j].offset] = tracer_count * pair_norm2_[j];
    diag[pairs_[j].offset + 1] = tracer_count * pair_norm2_[j];
  }
  if (mean_x_col_ >= 0) diag[mean_x_col_] = tracer_count;
  if (mean_y_col_ >= 0) diag[mean_y_col_] = tracer_count;
  return diag;
}

}  // namespace lagda
