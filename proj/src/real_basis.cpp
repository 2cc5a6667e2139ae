#include "lagda/real_basis.hpp"

#include "lagda/error.hpp"

#include <cmath>

namespace lagda {

namespace {
constexpr double kSqrt2 = M_SQRT2;
constexpr cdouble kI{0.0, 1.0};
}  // namespace

RealBasis::RealBasis(const ModeSet& ms) : block_of_(ms.size(), -1) {
  int offset = 0;
  std::vector<int> mean_modes;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (ms.mode(m).is_mean_flow()) {
      mean_modes.push_back(static_cast<int>(m));
      continue;
    }
    const int p = ms.conj_pair(m);
    if (p < static_cast<int>(m)) continue;
    RealBlock b;
    b.offset = offset;
    b.size = 2;
    b.first = static_cast<int>(m);
    b.second = p;
    block_of_[m] = block_of_[p] = static_cast<int>(blocks_.size());
    blocks_.push_back(b);
    offset += 2;
  }
  if (!mean_modes.empty()) {
    RealBlock b;
    b.offset = offset;
    b.size = static_cast<int>(mean_modes.size());
    b.mean_flow = true;
    // X precedes Y inside the block.
    for (int m : mean_modes) {
      if (ms.mode(m).kind == ModeKind::MeanFlowX) b.first = m;
      else b.second = m;
    }
    if (b.size == 1) b.second = b.first;
    for (int m : mean_modes) block_of_[m] = static_cast<int>(blocks_.size());
    blocks_.push_back(b);
    offset += b.size;
  }
  dim_ = offset;
}

Eigen::VectorXd RealBasis::to_real(const Eigen::VectorXcd& u) const {
  Eigen::VectorXd z(dim_);
  for (const auto& b : blocks_) {
    if (b.mean_flow) {
      z[b.offset] = u[b.first].real();
      if (b.size == 2) z[b.offset + 1] = u[b.second].real();
    } else {
      z[b.offset] = kSqrt2 * u[b.first].real();
      z[b.offset + 1] = kSqrt2 * u[b.first].imag();
    }
  }
  return z;
}

Eigen::VectorXcd RealBasis::to_complex(const Eigen::VectorXd& z) const {
  Eigen::VectorXcd u(static_cast<Eigen::Index>(block_of_.size()));
  for (const auto& b : blocks_) {
    if (b.mean_flow) {
      u[b.first] = z[b.offset];
      if (b.size == 2) u[b.second] = z[b.offset + 1];
    } else {
      const cdouble v(z[b.offset] * M_SQRT1_2, z[b.offset + 1] * M_SQRT1_2);
      u[b.first] = v;
      u[b.second] = std::conj(v);
    }
  }
  return u;
}

Eigen::MatrixXcd RealBasis::to_complex_series(const Eigen::MatrixXd& z) const {
  Eigen::MatrixXcd out(static_cast<Eigen::Index>(block_of_.size()), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) out.col(c) = to_complex(z.col(c));
  return out;
}

Eigen::MatrixXcd RealBasis::unitary() const {
  const auto k = static_cast<Eigen::Index>(block_of_.size());
  Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(k, dim_);
  for (const auto& b : blocks_) {
    if (b.mean_flow) {
      v(b.first, b.offset) = 1.0;
      if (b.size == 2) v(b.second, b.offset + 1) = 1.0;
    } else {
      v(b.first, b.offset) = M_SQRT1_2;
      v(b.second, b.offset) = M_SQRT1_2;
      v(b.first, b.offset + 1) = kI * M_SQRT1_2;
      v(b.second, b.offset + 1) = -kI * M_SQRT1_2;
    }
  }
  return v;
}

Eigen::MatrixXcd RealBasis::covariance_to_complex(const Eigen::MatrixXd& rz) const {
  const Eigen::MatrixXcd v = unitary();
  return v * rz.cast<cdouble>() * v.adjoint();
}

Eigen::MatrixXd RealBasis::covariance_to_real(const Eigen::MatrixXcd& r) const {
  const Eigen::MatrixXcd v = unitary();
  return (v.adjoint() * r * v).real();
}

Eigen::VectorXd RealBasis::complex_variance(const Eigen::MatrixXd& rz) const {
  return complex_variance_diag(rz.diagonal());
}

Eigen::VectorXd RealBasis::complex_variance_diag(const Eigen::VectorXd& rz_diag) const {
  Eigen::VectorXd var(static_cast<Eigen::Index>(block_of_.size()));
  for (const auto& b : blocks_) {
    if (b.mean_flow) {
      var[b.first] = rz_diag[b.offset];
      if (b.size == 2) var[b.second] = rz_diag[b.offset + 1];
    } else {
      const double v = 0.5 * (rz_diag[b.offset] + rz_diag[b.offset + 1]);
      var[b.first] = v;
      var[b.second] = v;
    }
  }
  return var;
}

RealLinearModel::RealLinearModel(const RealBasis& basis, const ModeSet& ms,
                                 const LsmParams& params)
    : dim_(basis.dim()) {
  validate(params, ms);
  for (const auto& b : basis.blocks()) {
    BlockDynamics bd;
    bd.offset = b.offset;
    bd.size = b.size;
    if (b.mean_flow) {
      const auto& mf = params.mean_flow;
      const Eigen::Matrix2d drift = mf.drift();
      bd.drift.topLeftCorner(b.size, b.size) = drift.topLeftCorner(b.size, b.size);
      bd.force.head(b.size) = mf.forcing.head(b.size);
      bd.noise.topLeftCorner(b.size, b.size) = mf.noise.topLeftCorner(b.size, b.size);
    } else {
      const auto& p = params.modes[b.first];
      bd.drift << -p.d, -p.omega, p.omega, -p.d;
      bd.force << kSqrt2 * p.f.real(), kSqrt2 * p.f.imag();
      bd.noise = p.sigma * Eigen::Matrix2d::Identity();
    }
    blocks_.push_back(bd);
  }
}

Eigen::VectorXd RealLinearModel::drift(const Eigen::VectorXd& z) const {
  Eigen::VectorXd out(dim_);
  for (const auto& b : blocks_) {
    if (b.size == 2) {
      out.segment<2>(b.offset) = b.force + b.drift * z.segment<2>(b.offset);
    } else {
      out[b.offset] = b.force[0] + b.drift(0, 0) * z[b.offset];
    }
  }
  return out;
}

Eigen::MatrixXd RealLinearModel::lambda_times(const Eigen::MatrixXd& m) const {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (const auto& b : blocks_) {
    if (b.size == 2) {
      out.middleRows<2>(b.offset).noalias() = b.drift * m.middleRows<2>(b.offset);
    } else {
      out.row(b.offset) = b.drift(0, 0) * m.row(b.offset);
    }
  }
  return out;
}

Eigen::MatrixXd RealLinearModel::lyapunov_rhs(const Eigen::MatrixXd& r) const {
  Eigen::MatrixXd lr = lambda_times(r);
  Eigen::MatrixXd out = lr + lr.transpose();
  for (const auto& b : blocks_) {
    const Eigen::Matrix2d q = b.noise * b.noise.transpose();
    out.block(b.offset, b.offset, b.size, b.size) += q.topLeftCorner(b.size, b.size);
  }
  return out;
}

Eigen::VectorXd RealLinearModel::apply_noise(const Eigen::VectorXd& xi) const {
  Eigen::VectorXd out(dim_);
  for (const auto& b : blocks_) {
    if (b.size == 2) {
      out.segment<2>(b.offset) = b.noise * xi.segment<2>(b.offset);
    } else {
      out[b.offset] = b.noise(0, 0) * xi[b.offset];
    }
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> RealLinearModel::stationary_moments() const {
  Eigen::VectorXd mean(dim_);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& b : blocks_) {
    const int n = b.size;
    const Eigen::MatrixXd a = b.drift.topLeftCorner(n, n);
    const Eigen::VectorXcd ev = a.eigenvalues();
    if ((ev.real().array() >= 0.0).any()) {
      throw InvalidArgument("stationary moments: non-dissipative block at coordinate " +
                            std::to_string(b.offset));
    }
    mean.segment(b.offset, n) = a.fullPivLu().solve(-b.force.head(n));
    // A P + P A^T + Q = 0 as a Kronecker system on vec(P).
    const Eigen::MatrixXd q = (b.noise * b.noise.transpose()).topLeftCorner(n, n);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    // vec is column-major: vec(A P) = (I kron A) vec P, vec(P A^T) = (A kron I) vec P.
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n * n, n * n);
    for (int i = 0; i < n; ++i) {
      sys.block(i * n, i * n, n, n) += a;
      for (int j = 0; j < n; ++j) sys.block(i * n, j * n, n, n) += a(i, j) * eye;
    }
    const Eigen::VectorXd qv = Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
    const Eigen::VectorXd pv = sys.fullPivLu().solve(-qv);
    Eigen::MatrixXd p = Eigen::Map<const Eigen::MatrixXd>(pv.data(), n, n);
    cov.block(b.offset, b.offset, n, n) = 0.5 * (p + p.transpose());
  }
  return {mean, cov};
}

Eigen::MatrixXd RealLinearModel::lambda_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& b : blocks_) {
    out.block(b.offset, b.offset, b.size, b.size) = b.drift.topLeftCorner(b.size, b.size);
  }
  return out;
}

Eigen::MatrixXd RealLinearModel::noise_covariance_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& b : blocks_) {
    const Eigen::Matrix2d q = b.noise * b.noise.transpose();
    out.block(b.offset, b.offset, b.size, b.size) = q.topLeftCorner(b.size, b.size);
  }
  return out;
}

Eigen::VectorXd RealLinearModel::force() const {
  Eigen::VectorXd out(dim_);
  for (const auto& b : blocks_) out.segment(b.offset, b.size) = b.force.head(b.size);
  return out;
}

}  // namespace lagda
