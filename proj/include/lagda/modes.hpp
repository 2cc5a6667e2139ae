#pragma once

// Spectral mode sets on the doubly periodic domain [0, 2pi)^2.
//
// A flow is v(x) = w + sum_m vhat_m exp(i k_m . x) r_m, where the mean flow w
// occupies dedicated MeanFlowX / MeanFlowY slots with unit eigenvectors.
// Every fluctuation mode is stored together with its conjugate partner, so
// the coefficient vector has conjugate symmetry vhat[conj(m)] = conj(vhat[m]).

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

namespace lagda {

using cdouble = std::complex<double>;

enum class ModeKind { GB, GravityPlus, GravityMinus, MeanFlowX, MeanFlowY };

std::string to_string(ModeKind kind);
ModeKind mode_kind_from_string(const std::string& name);

struct Wavenumber {
  int x = 0;
  int y = 0;

  int norm2() const { return x * x + y * y; }
  double norm() const;
  Wavenumber operator-() const { return {-x, -y}; }
  bool operator==(const Wavenumber&) const = default;
};

struct ModeIndex {
  Wavenumber k;
  ModeKind kind = ModeKind::GB;

  bool is_mean_flow() const {
    return kind == ModeKind::MeanFlowX || kind == ModeKind::MeanFlowY;
  }
};

enum class MeanFlow { None, X, XY };

class ModeSet {
 public:
  ModeSet() = default;

  /// Validates the pairing map and eigenvector conjugacy; throws
  /// InvalidArgument on violation.
  ModeSet(std::vector<ModeIndex> modes, std::vector<Eigen::Vector3cd> eigenvectors,
          std::vector<int> conj_pair);

  std::size_t size() const { return modes_.size(); }
  const ModeIndex& mode(std::size_t m) const { return modes_[m]; }
  const std::vector<ModeIndex>& modes() const { return modes_; }
  /// (u, v, height) components.
  const Eigen::Vector3cd& eigenvector(std::size_t m) const { return eigenvectors_[m]; }
  Eigen::Vector2cd velocity_eigenvector(std::size_t m) const {
    return eigenvectors_[m].head<2>();
  }
  int conj_pair(std::size_t m) const { return conj_pair_[m]; }
  const std::vector<int>& conj_pairs() const { return conj_pair_; }

  bool include_mean_flow() const { return mean_flow_count_ > 0; }
  int mean_flow_count() const { return mean_flow_count_; }
  int max_abs_wavenumber() const { return max_abs_k_; }

  /// Position of (k, kind), or -1.
  int find(Wavenumber k, ModeKind kind) const;

 private:
  std::vector<ModeIndex> modes_;
  std::vector<Eigen::Vector3cd> eigenvectors_;
  std::vector<int> conj_pair_;
  int mean_flow_count_ = 0;
  int max_abs_k_ = 0;
};

/// Incompressible (GB) modes for -kmax <= kx, ky <= kmax without (0,0), with
/// eigenvector (-i ky, i kx) / |k|^2.
ModeSet build_gb_modeset(int kmax, MeanFlow mean_flow = MeanFlow::None);

/// Linear rotating shallow-water modes {B, +, -} per wavenumber with
/// Fr = Ro (delta = 1). The GB mode at k = 0 is omitted.
ModeSet build_sw_modeset(int kmax, double rossby);

/// Modes (k, 0), k = +-1..+-K with eigenvector (0, 1), i.e. the coefficient is
/// the Fourier coefficient of the meridional velocity v = dpsi/dx. Optionally
/// carries the zonal mean flow u in a MeanFlowX slot.
ModeSet build_layered_modeset(int kmax, bool with_zonal_flow = true);

/// Copy with every eigenvector rescaled to unit Euclidean norm.
ModeSet normalized(const ModeSet& ms);

/// Subset of modes (must be closed under conjugation).
ModeSet select_modes(const ModeSet& ms, const std::vector<int>& positions);

/// Gravity-wave frequency +-Ro^-1 sqrt(|k|^2 + 1).
double gravity_frequency(Wavenumber k, double rossby, bool plus);

double energy_spectrum(double k_norm, double E0, double k0, double alpha_exp);
double sigma_from_energy(double E, double d, double f_mag);

struct FlowCoefficients {
  Eigen::VectorXcd values;
  double time = 0.0;
};

/// max_m |values[conj(m)] - conj(values[m])| and mean-flow imaginary parts.
double conjugate_symmetry_defect(const Eigen::VectorXcd& values, const ModeSet& ms);

/// w + sum vhat_m e^{i k.x} r_m restricted to the velocity components.
/// Throws InvalidArgument if the imaginary residual exceeds 1e-10 relative to
/// the summed term magnitudes.
Eigen::Vector2d eval_velocity(const Eigen::VectorXcd& values, const ModeSet& ms,
                              const Eigen::Vector2d& x);

/// Velocity field on an n x n uniform grid; returns (u, v) as n x n arrays
/// indexed [iy, ix].
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> eval_velocity_grid(
    const Eigen::VectorXcd& values, const ModeSet& ms, int n);

}  // namespace lagda
