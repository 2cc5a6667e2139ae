#include "lagda/lsm.hpp"

#include "lagda/error.hpp"

#include <cmath>
#include <map>
#include <string>

namespace lagda {

Eigen::Matrix2d MeanFlowParams::drift() const {
  Eigen::Matrix2d m;
  m << -damping[0], rotation[0], rotation[1], -damping[1];
  return m;
}

void validate(const LsmParams& params, const ModeSet& ms) {
  if (params.modes.size() != ms.size()) {
    throw InvalidArgument("LsmParams: " + std::to_string(params.modes.size()) +
                          " mode entries for a mode set of size " + std::to_string(ms.size()));
  }
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (ms.mode(m).is_mean_flow()) continue;
    const auto& a = params.modes[m];
    const auto& b = params.modes[ms.conj_pair(m)];
    if (!(a.d > 0.0) || !std::isfinite(a.d)) {
      throw InvalidArgument("LsmParams: damping must be positive (mode " + std::to_string(m) + ")");
    }
    if (!(a.sigma >= 0.0) || !std::isfinite(a.sigma) || !std::isfinite(a.omega)) {
      throw InvalidArgument("LsmParams: invalid sigma/omega (mode " + std::to_string(m) + ")");
    }
    const double tol = 1e-12 * (1.0 + std::abs(a.d) + std::abs(a.omega) + std::abs(a.f) + a.sigma);
    if (std::abs(a.d - b.d) > tol || std::abs(a.sigma - b.sigma) > tol ||
        std::abs(a.omega + b.omega) > tol || std::abs(a.f - std::conj(b.f)) > tol) {
      throw InvalidArgument("LsmParams: conjugate partners inconsistent (mode " +
                            std::to_string(m) + ")");
    }
  }
  if (ms.include_mean_flow()) {
    const int n = ms.mean_flow_count();
    for (int i = 0; i < n; ++i) {
      if (!(params.mean_flow.damping[i] > 0.0)) {
        throw InvalidArgument("LsmParams: mean-flow damping D0 must be positive definite");
      }
    }
  }
}

LsmParams default_initial_guess(const ModeSet& ms) {
  LsmParams p;
  p.modes.assign(ms.size(), ModeParams{});
  return p;
}

LsmParams spectrum_params(const ModeSet& ms, const SpectrumModel& model) {
  LsmParams p;
  p.modes.resize(ms.size());
  const double e_unit_shell = energy_spectrum(1.0, model.E0, model.k0, model.alpha);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto& idx = ms.mode(m);
    if (idx.is_mean_flow()) continue;
    auto& mp = p.modes[m];
    const double k2 = idx.k.norm2();
    mp.d = model.d + model.nu * k2;
    mp.f = 0.0;
    double energy = k2 > 0 ? energy_spectrum(std::sqrt(k2), model.E0, model.k0, model.alpha)
                           : e_unit_shell;
    if (idx.kind == ModeKind::GravityPlus || idx.kind == ModeKind::GravityMinus) {
      mp.omega = gravity_frequency(idx.k, model.rossby, idx.kind == ModeKind::GravityPlus);
      energy *= model.gravity_energy_ratio;
    }
    mp.sigma = sigma_from_energy(energy, mp.d, 0.0);
  }
  return p;
}

double mode_energy(const ModeParams& p) {
  return 0.5 * (std::norm(p.f) / (p.d * p.d + p.omega * p.omega) + p.sigma * p.sigma / (2.0 * p.d));
}

namespace {
template <typename Get>
Eigen::VectorXd stack(const LsmParams& params, const ModeSet& ms, Get get) {
  std::vector<double> out;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (!ms.mode(m).is_mean_flow()) out.push_back(get(params.modes[m]));
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}
}  // namespace

Eigen::VectorXd stacked_damping(const LsmParams& params, const ModeSet& ms) {
  return stack(params, ms, [](const ModeParams& p) { return p.d; });
}

Eigen::VectorXd stacked_noise(const LsmParams& params, const ModeSet& ms) {
  return stack(params, ms, [](const ModeParams& p) { return p.sigma; });
}

std::vector<ShellEnergy> shell_energies(const LsmParams& params, const ModeSet& ms, ModeKind kind) {
  std::map<int, ShellEnergy> shells;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto& idx = ms.mode(m);
    if (idx.kind != kind) continue;
    auto& s = shells[idx.k.norm2()];
    s.k2 = idx.k.norm2();
    s.energy += mode_energy(params.modes[m]);
    ++s.count;
  }
  std::vector<ShellEnergy> out;
  for (auto& [k2, s] : shells) {
    s.energy /= s.count;
    out.push_back(s);
  }
  return out;
}

}  // namespace lagda
