#include "lagda/modes.hpp"

#include "lagda/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace lagda {

namespace {

constexpr cdouble kI{0.0, 1.0};

Eigen::Vector3cd gb_eigenvector(Wavenumber k) {
  const double k2 = k.norm2();
  return Eigen::Vector3cd(-kI * double(k.y) / k2, kI * double(k.x) / k2, 0.0);
}

Eigen::Vector3cd sw_gb_eigenvector(Wavenumber k) {
  const double scale = 1.0 / std::sqrt(k.norm2() + 1.0);
  return scale * Eigen::Vector3cd(-kI * double(k.y), kI * double(k.x), 1.0);
}

Eigen::Vector3cd sw_gravity_eigenvector(Wavenumber k, bool plus, double delta) {
  const double sign = plus ? 1.0 : -1.0;
  if (k.norm2() == 0) {
    return M_SQRT1_2 * Eigen::Vector3cd(sign * kI, 1.0, 0.0);
  }
  const double k2 = k.norm2();
  const double s = std::sqrt(delta * k2 + 1.0);
  const double scale = 1.0 / (std::sqrt(k2) * std::sqrt((delta + delta * delta) * k2 + 2.0));
  return scale * Eigen::Vector3cd(kI * double(k.y) + sign * k.x * s,
                                  -kI * double(k.x) + sign * k.y * s, delta * k2);
}

void append_mean_flow(MeanFlow mf, std::vector<ModeIndex>& modes,
                      std::vector<Eigen::Vector3cd>& vecs) {
  if (mf == MeanFlow::None) return;
  modes.push_back({{0, 0}, ModeKind::MeanFlowX});
  vecs.emplace_back(1.0, 0.0, 0.0);
  if (mf == MeanFlow::XY) {
    modes.push_back({{0, 0}, ModeKind::MeanFlowY});
    vecs.emplace_back(0.0, 1.0, 0.0);
  }
}

ModeKind conjugate_kind(ModeKind kind) {
  switch (kind) {
    case ModeKind::GravityPlus: return ModeKind::GravityMinus;
    case ModeKind::GravityMinus: return ModeKind::GravityPlus;
    default: return kind;
  }
}

std::vector<int> pair_by_lookup(const std::vector<ModeIndex>& modes) {
  std::vector<int> pair(modes.size(), -1);
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const auto& a = modes[m];
    if (a.is_mean_flow()) {
      pair[m] = static_cast<int>(m);
      continue;
    }
    const Wavenumber target = -a.k;
    const ModeKind kind = conjugate_kind(a.kind);
    for (std::size_t n = 0; n < modes.size(); ++n) {
      if (modes[n].k == target && modes[n].kind == kind) {
        pair[m] = static_cast<int>(n);
        break;
      }
    }
  }
  return pair;
}

}  // namespace

std::string to_string(ModeKind kind) {
  switch (kind) {
    case ModeKind::GB: return "GB";
    case ModeKind::GravityPlus: return "GravityPlus";
    case ModeKind::GravityMinus: return "GravityMinus";
    case ModeKind::MeanFlowX: return "MeanFlowX";
    case ModeKind::MeanFlowY: return "MeanFlowY";
  }
  return "?";
}

ModeKind mode_kind_from_string(const std::string& name) {
  for (auto kind : {ModeKind::GB, ModeKind::GravityPlus, ModeKind::GravityMinus,
                    ModeKind::MeanFlowX, ModeKind::MeanFlowY}) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidArgument("unknown mode kind '" + name + "'");
}

double Wavenumber::norm() const { return std::sqrt(double(norm2())); }

ModeSet::ModeSet(std::vector<ModeIndex> modes, std::vector<Eigen::Vector3cd> eigenvectors,
                 std::vector<int> conj_pair)
    : modes_(std::move(modes)),
      eigenvectors_(std::move(eigenvectors)),
      conj_pair_(std::move(conj_pair)) {
  const std::size_t n = modes_.size();
  if (eigenvectors_.size() != n || conj_pair_.size() != n) {
    throw InvalidArgument("ModeSet: modes, eigenvectors and pairing differ in length");
  }
  int mean_x = 0, mean_y = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const int p = conj_pair_[m];
    if (p < 0 || static_cast<std::size_t>(p) >= n || conj_pair_[p] != static_cast<int>(m)) {
      throw InvalidArgument("ModeSet: conjugate pairing is not an involution at mode " +
                            std::to_string(m));
    }
    const auto& a = modes_[m];
    if (a.is_mean_flow()) {
      if (p != static_cast<int>(m) || a.k.norm2() != 0) {
        throw InvalidArgument("ModeSet: mean-flow entries must be self-conjugate with k = 0");
      }
      (a.kind == ModeKind::MeanFlowX ? mean_x : mean_y)++;
      continue;
    }
    if (p == static_cast<int>(m)) {
      throw InvalidArgument("ModeSet: fluctuation mode " + std::to_string(m) +
                            " cannot be self-conjugate");
    }
    if (!(modes_[p].k == -a.k)) {
      throw InvalidArgument("ModeSet: conjugate partner of mode " + std::to_string(m) +
                            " has wrong wavenumber");
    }
    const double defect = (eigenvectors_[p] - eigenvectors_[m].conjugate()).cwiseAbs().maxCoeff();
    if (defect > 1e-12) {
      throw InvalidArgument("ModeSet: eigenvector of the partner of mode " + std::to_string(m) +
                            " is not the complex conjugate");
    }
    max_abs_k_ = std::max({max_abs_k_, std::abs(a.k.x), std::abs(a.k.y)});
  }
  if (mean_x > 1 || mean_y > 1 || (mean_y == 1 && mean_x == 0)) {
    throw InvalidArgument("ModeSet: mean flow must be none, X, or X and Y");
  }
  mean_flow_count_ = mean_x + mean_y;
}

int ModeSet::find(Wavenumber k, ModeKind kind) const {
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    if (modes_[m].k == k && modes_[m].kind == kind) return static_cast<int>(m);
  }
  return -1;
}

ModeSet build_gb_modeset(int kmax, MeanFlow mean_flow) {
  if (kmax < 1) throw InvalidArgument("build_gb_modeset: kmax must be >= 1");
  std::vector<ModeIndex> modes;
  std::vector<Eigen::Vector3cd> vecs;
  for (int kx = -kmax; kx <= kmax; ++kx) {
    for (int ky = -kmax; ky <= kmax; ++ky) {
      if (kx == 0 && ky == 0) continue;
      modes.push_back({{kx, ky}, ModeKind::GB});
      vecs.push_back(gb_eigenvector({kx, ky}));
    }
  }
  append_mean_flow(mean_flow, modes, vecs);
  auto pairs = pair_by_lookup(modes);
  return ModeSet(std::move(modes), std::move(vecs), std::move(pairs));
}

ModeSet build_sw_modeset(int kmax, double rossby) {
  if (kmax < 1) throw InvalidArgument("build_sw_modeset: kmax must be >= 1");
  if (!(rossby > 0.0)) throw InvalidArgument("build_sw_modeset: Ro must be positive");
  // Fr = Ro, so delta = Ro^2 Fr^-2 = 1.
  const double delta = 1.0;
  std::vector<ModeIndex> modes;
  std::vector<Eigen::Vector3cd> vecs;
  for (int kx = -kmax; kx <= kmax; ++kx) {
    for (int ky = -kmax; ky <= kmax; ++ky) {
      const Wavenumber k{kx, ky};
      if (k.norm2() != 0) {
        modes.push_back({k, ModeKind::GB});
        vecs.push_back(sw_gb_eigenvector(k));
      }
      modes.push_back({k, ModeKind::GravityPlus});
      vecs.push_back(sw_gravity_eigenvector(k, true, delta));
      modes.push_back({k, ModeKind::GravityMinus});
      vecs.push_back(sw_gravity_eigenvector(k, false, delta));
    }
  }
  auto pairs = pair_by_lookup(modes);
  return ModeSet(std::move(modes), std::move(vecs), std::move(pairs));
}

ModeSet build_layered_modeset(int kmax, bool with_zonal_flow) {
  if (kmax < 1) throw InvalidArgument("build_layered_modeset: kmax must be >= 1");
  std::vector<ModeIndex> modes;
  std::vector<Eigen::Vector3cd> vecs;
  for (int k = -kmax; k <= kmax; ++k) {
    if (k == 0) continue;
    modes.push_back({{k, 0}, ModeKind::GB});
    vecs.emplace_back(0.0, 1.0, 0.0);
  }
  append_mean_flow(with_zonal_flow ? MeanFlow::X : MeanFlow::None, modes, vecs);
  auto pairs = pair_by_lookup(modes);
  return ModeSet(std::move(modes), std::move(vecs), std::move(pairs));
}

ModeSet normalized(const ModeSet& ms) {
  std::vector<Eigen::Vector3cd> vecs;
  vecs.reserve(ms.size());
  for (std::size_t m = 0; m < ms.size(); ++m) vecs.push_back(ms.eigenvector(m).normalized());
  return ModeSet(ms.modes(), std::move(vecs), ms.conj_pairs());
}

ModeSet select_modes(const ModeSet& ms, const std::vector<int>& positions) {
  std::vector<ModeIndex> modes;
  std::vector<Eigen::Vector3cd> vecs;
  for (int p : positions) {
    modes.push_back(ms.mode(p));
    vecs.push_back(ms.eigenvector(p));
  }
  auto pairs = pair_by_lookup(modes);
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    if (pairs[m] < 0) throw InvalidArgument("select_modes: selection is not closed under conjugation");
  }
  return ModeSet(std::move(modes), std::move(vecs), std::move(pairs));
}

double gravity_frequency(Wavenumber k, double rossby, bool plus) {
  const double w = std::sqrt(k.norm2() + 1.0) / rossby;
  return plus ? w : -w;
}

double energy_spectrum(double k_norm, double E0, double k0, double alpha_exp) {
  if (!(E0 > 0.0) || !(k0 > 0.0)) throw InvalidArgument("energy_spectrum: E0 and k0 must be positive");
  if (!(k_norm > 0.0)) {
    throw InvalidArgument("energy_spectrum: defined for nonzero wavenumbers only");
  }
  if (k_norm <= k0) return k_norm * E0;
  return k0 * E0 * std::pow(k_norm / k0, -alpha_exp);
}

double sigma_from_energy(double E, double d, double f_mag) {
  if (!(d > 0.0)) throw InvalidArgument("sigma_from_energy: damping must be positive");
  const double s2 = 4.0 * d * (E - f_mag * f_mag / (2.0 * d * d));
  if (s2 < 0.0) {
    throw InvalidArgument("sigma_from_energy: energy too small for the given forcing (sigma^2 < 0)");
  }
  return std::sqrt(s2);
}

double conjugate_symmetry_defect(const Eigen::VectorXcd& values, const ModeSet& ms) {
  double defect = 0.0;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const int p = ms.conj_pair(m);
    defect = std::max(defect, std::abs(values[p] - std::conj(values[m])));
  }
  return defect;
}

Eigen::Vector2d eval_velocity(const Eigen::VectorXcd& values, const ModeSet& ms,
                              const Eigen::Vector2d& x) {
  if (static_cast<std::size_t>(values.size()) != ms.size()) {
    throw InvalidArgument("eval_velocity: coefficient vector does not match the mode set");
  }
  Eigen::Vector2cd sum = Eigen::Vector2cd::Zero();
  double scale = 0.0;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto& k = ms.mode(m).k;
    const cdouble phase = std::exp(kI * (k.x * x[0] + k.y * x[1]));
    const Eigen::Vector2cd term = values[m] * phase * ms.velocity_eigenvector(m);
    sum += term;
    scale += term.cwiseAbs().sum();
  }
  const double residual = sum.imag().cwiseAbs().maxCoeff();
  if (residual > 1e-10 * (1.0 + scale)) {
    throw InvalidArgument("eval_velocity: imaginary residual " + std::to_string(residual) +
                          " indicates broken conjugate symmetry");
  }
  return sum.real();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> eval_velocity_grid(const Eigen::VectorXcd& values,
                                                               const ModeSet& ms, int n) {
  Eigen::MatrixXd u(n, n), v(n, n);
  const double h = 2.0 * M_PI / n;
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const Eigen::Vector2d vel = eval_velocity(values, ms, {ix * h, iy * h});
      u(iy, ix) = vel[0];
      v(iy, ix) = vel[1];
    }
  }
  return {u, v};
}

}  // namespace lagda
