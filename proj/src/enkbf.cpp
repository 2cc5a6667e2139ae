#include "lagda/enkbf.hpp"

#include "lagda/error.hpp"
#include "lagda/observation.hpp"
#include "lagda/real_basis.hpp"
#include "lagda/rng.hpp"

#include <cmath>
#include <memory>

namespace lagda {

EnsembleModel topographic_ensemble_model(const TopoDynamics& dyn) {
  EnsembleModel m;
  m.dim = dyn.dim();
  m.drift = [dyn](const Eigen::VectorXd& s) { return dyn.drift(s); };
  m.noise_factor = dyn.noise().asDiagonal();
  m.observe = [dyn](const Eigen::VectorXd& s, const Eigen::VectorXd& x) { return dyn.velocity(s, x); };
  m.rk4 = true;
  return m;
}

EnsembleModel lsm_ensemble_model(const LsmParams& params, const ModeSet& ms) {
  const RealBasis basis(ms);
  const RealLinearModel model(basis, ms, params);
  auto obs = std::make_shared<RealObservationBuilder>(ms, basis);
  EnsembleModel m;
  m.dim = basis.dim();
  m.drift = [model](const Eigen::VectorXd& z) { return model.drift(z); };
  Eigen::MatrixXd nf(basis.dim(), basis.dim());
  for (int j = 0; j < basis.dim(); ++j) nf.col(j) = model.apply_noise(Eigen::VectorXd::Unit(basis.dim(), j));
  m.noise_factor = nf;
  m.observe = [obs](const Eigen::VectorXd& z, const Eigen::VectorXd& x) { return Eigen::VectorXd(obs->build(x) * z); };
  m.rk4 = false;
  return m;
}

Eigen::VectorXd Ensemble::variance() const {
  const Eigen::VectorXd m = mean();
  const auto ne = members.cols();
  return (members.colwise() - m).rowwise().squaredNorm() / static_cast<double>(std::max<Eigen::Index>(ne - 1, 1));
}

Ensemble initial_ensemble(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, int members,
                          std::uint64_t seed) {
  if (members < 2) throw InvalidArgument("initial_ensemble: need at least 2 members");
  NormalStream draw(seed, Stream::Ensemble, 1u << 30);
  Ensemble ens;
  ens.members.resize(mean.size(), members);
  Eigen::VectorXd xi(factor.cols());
  for (int i = 0; i < members; ++i) {
    for (Eigen::Index j = 0; j < xi.size(); ++j) xi[j] = draw();
    ens.members.col(i) = mean + factor * xi;
  }
  return ens;
}

Ensemble enkbf_step(const Ensemble& ens, const Eigen::VectorXd& dX, const Eigen::VectorXd& positions,
                    const EnsembleModel& model, double sigma_x, double dt, std::vector<NormalStream>& noise,
                    const EnkbfConfig& cfg, std::size_t step) {
  const auto ne = ens.members.cols();
  if (ne < 2) throw InvalidArgument("enkbf_step: need at least 2 members");
  if (static_cast<Eigen::Index>(noise.size()) != ne) throw InvalidArgument("enkbf_step: one noise stream per member");
  const auto obs_dim = dX.size();
  Eigen::MatrixXd h(obs_dim, ne);
  for (Eigen::Index i = 0; i < ne; ++i) h.col(i) = model.observe(ens.members.col(i), positions);
  const Eigen::VectorXd zbar = ens.members.rowwise().mean();
  const Eigen::VectorXd hbar = h.rowwise().mean();
  const Eigen::MatrixXd za = ens.members.colwise() - zbar;
  if (cfg.collapse_check && za.squaredNorm() / static_cast<double>(ne - 1) < cfg.collapse_tol) {
    throw NumericalError("ensemble collapsed", step);
  }
  const Eigen::MatrixXd ha = h.colwise() - hbar;
  const Eigen::MatrixXd gain = (za * ha.transpose()) / (static_cast<double>(ne - 1) * sigma_x * sigma_x);

  Ensemble out;
  out.time = ens.time + dt;
  out.members.resize(ens.members.rows(), ne);
  const double sqdt = std::sqrt(dt);
  Eigen::VectorXd xi(model.noise_factor.cols());
  for (Eigen::Index i = 0; i < ne; ++i) {
    const Eigen::VectorXd z = ens.members.col(i);
    Eigen::VectorXd next;
    if (model.rk4) {
      const Eigen::VectorXd k1 = model.drift(z);
      const Eigen::VectorXd k2 = model.drift(z + 0.5 * dt * k1);
      const Eigen::VectorXd k3 = model.drift(z + 0.5 * dt * k2);
      const Eigen::VectorXd k4 = model.drift(z + dt * k3);
      next = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      next = z + dt * model.drift(z);
    }
    for (Eigen::Index j = 0; j < xi.size(); ++j) xi[j] = noise[i]();
    next += sqdt * (model.noise_factor * xi);
    next += gain * (dX - 0.5 * (h.col(i) + hbar) * dt);
    out.members.col(i) = next;
  }
  if (!out.members.allFinite()) throw NumericalError("non-finite ensemble", step);
  return out;
}

EnkbfSeries run_enkbf(const TracerTrack& track, const EnsembleModel& model, const Ensemble& initial,
                      const EnkbfConfig& cfg) {
  if (initial.members.rows() != model.dim) throw InvalidArgument("run_enkbf: ensemble dimension mismatch");
  const std::size_t n_steps = track.steps();
  EnkbfSeries out;
  out.dt = track.dt;
  out.mean.resize(model.dim, static_cast<Eigen::Index>(n_steps + 1));
  out.variance.resize(model.dim, static_cast<Eigen::Index>(n_steps + 1));
  std::vector<NormalStream> noise;
  for (Eigen::Index i = 0; i < initial.members.cols(); ++i) {
    noise.emplace_back(cfg.seed, Stream::Ensemble, static_cast<std::uint64_t>(i));
  }
  Ensemble ens = initial;
  out.mean.col(0) = ens.mean();
  out.variance.col(0) = ens.variance();
  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    ens = enkbf_step(ens, track.increments.col(col), track.positions.col(col), model, cfg.sigma_x,
                     track.dt, noise, cfg, n + 1);
    out.mean.col(col + 1) = ens.mean();
    out.variance.col(col + 1) = ens.variance();
  }
  return out;
}

}  // namespace lagda
