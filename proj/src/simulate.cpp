#include "lagda/simulate.hpp"

#include "lagda/error.hpp"
#include "lagda/observation.hpp"
#include "lagda/real_basis.hpp"
#include "lagda/rng.hpp"
#include "lagda/torus.hpp"

#include <cmath>
#include <random>

namespace lagda {

std::size_t SimConfig::steps() const {
  return static_cast<std::size_t>(std::llround(T / dt));
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("SimConfig: dt must be positive");
  if (!(T >= dt)) throw InvalidArgument("SimConfig: T must be at least dt");
  if (tracers < 0) throw InvalidArgument("SimConfig: tracer count must be >= 0");
  if (!(sigma_x >= 0.0)) throw InvalidArgument("SimConfig: sigma_x must be >= 0");
  if (!initial_tracers.empty() && static_cast<int>(initial_tracers.size()) != tracers) {
    throw InvalidArgument("SimConfig: initial_tracers must list every tracer");
  }
}

TracerTrack TracerTrack::head(int count) const {
  if (count < 0 || count > tracer_count()) throw InvalidArgument("TracerTrack::head: bad count");
  TracerTrack out;
  out.dt = dt;
  out.positions = positions.topRows(2 * count);
  out.increments = increments.topRows(2 * count);
  return out;
}

std::vector<Eigen::Vector2d> uniform_tracers(int count, std::uint64_t seed) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(count);
  for (int l = 0; l < count; ++l) {
    auto eng = make_engine(seed, Stream::TracerInit, static_cast<std::uint64_t>(l));
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    const double x = u(eng);
    const double y = u(eng);
    out.push_back(wrap_point({x, y}));
  }
  return out;
}

namespace {

Eigen::VectorXd initial_state(const RealBasis& basis, const RealLinearModel& model,
                              const SimConfig& cfg, std::size_t k) {
  if (cfg.initial_flow) {
    if (static_cast<std::size_t>(cfg.initial_flow->size()) != k) {
      throw InvalidArgument("SimConfig: initial_flow has wrong length");
    }
    return basis.to_real(*cfg.initial_flow);
  }
  if (!cfg.stationary_start) return Eigen::VectorXd::Zero(basis.dim());
  const auto [mean, cov] = model.stationary_moments();
  NormalStream init(cfg.seed, Stream::FlowInit);
  Eigen::VectorXd xi(basis.dim());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = init();
  const Eigen::LLT<Eigen::MatrixXd> llt(cov + 1e-300 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  if (llt.info() != Eigen::Success) {
    // Degenerate (zero-noise) blocks: start at the stationary mean.
    return mean;
  }
  return mean + llt.matrixL() * xi;
}

}  // namespace

TruthRecord simulate_coupled(const LsmParams& params, const ModeSet& ms, const SimConfig& cfg) {
  cfg.validate();
  const RealBasis basis(ms);
  const RealLinearModel model(basis, ms, params);
  const RealObservationBuilder obs(ms, basis);
  const std::size_t n_steps = cfg.steps();
  const int dim = basis.dim();
  const int l_count = cfg.tracers;

  TruthRecord rec;
  rec.model = "lsm";
  rec.config = cfg;
  rec.times = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n_steps + 1), 0.0,
                                         static_cast<double>(n_steps) * cfg.dt);
  Eigen::MatrixXd zs(dim, static_cast<Eigen::Index>(n_steps + 1));
  rec.tracers.dt = cfg.dt;
  rec.tracers.positions.resize(2 * l_count, static_cast<Eigen::Index>(n_steps + 1));
  rec.tracers.increments.resize(2 * l_count, static_cast<Eigen::Index>(n_steps));
  if (cfg.record_noise) rec.noise.resize(dim, static_cast<Eigen::Index>(n_steps));

  std::vector<NormalStream> flow_noise;
  for (std::size_t b = 0; b < basis.blocks().size(); ++b) {
    flow_noise.emplace_back(cfg.seed, Stream::FlowNoise, b);
  }
  std::vector<NormalStream> tracer_noise;
  for (int l = 0; l < l_count; ++l) tracer_noise.emplace_back(cfg.seed, Stream::TracerNoise, l);

  const auto init_pos = cfg.initial_tracers.empty() ? uniform_tracers(l_count, cfg.seed)
                                                    : cfg.initial_tracers;
  for (int l = 0; l < l_count; ++l) {
    rec.tracers.positions.col(0).segment<2>(2 * l) = wrap_point(init_pos[l]);
  }

  Eigen::VectorXd z = initial_state(basis, model, cfg, ms.size());
  zs.col(0) = z;
  const double sqdt = std::sqrt(cfg.dt);
  Eigen::MatrixXd a;
  Eigen::VectorXd xi(dim);

  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    const Eigen::VectorXd x = rec.tracers.positions.col(col);
    obs.build(x, a);
    const Eigen::VectorXd vel = a * z;

    for (std::size_t b = 0; b < basis.blocks().size(); ++b) {
      const auto& blk = basis.blocks()[b];
      for (int j = 0; j < blk.size; ++j) xi[blk.offset + j] = flow_noise[b]();
    }
    if (cfg.record_noise) rec.noise.col(col) = xi;
    z += model.drift(z) * cfg.dt + model.apply_noise(xi) * sqdt;

    for (int l = 0; l < l_count; ++l) {
      Eigen::Vector2d inc;
      inc[0] = vel[2 * l] * cfg.dt + cfg.sigma_x * sqdt * tracer_noise[l]();
      inc[1] = vel[2 * l + 1] * cfg.dt + cfg.sigma_x * sqdt * tracer_noise[l]();
      if (!(std::abs(inc[0]) < M_PI) || !(std::abs(inc[1]) < M_PI)) {
        throw NumericalError("tracer " + std::to_string(l) + " moved more than pi in one step", n);
      }
      rec.tracers.increments.col(col).segment<2>(2 * l) = inc;
      rec.tracers.positions.col(col + 1).segment<2>(2 * l) = wrap_point(x.segment<2>(2 * l) + inc);
    }
    if (!z.allFinite()) throw NumericalError("non-finite flow state", n + 1);
    zs.col(col + 1) = z;
  }
  rec.flow = basis.to_complex_series(zs);
  return rec;
}

Eigen::MatrixXcd replay_flow(const LsmParams& params, const ModeSet& ms,
                             const Eigen::MatrixXd& noise, double dt,
                             const Eigen::VectorXcd& initial) {
  const RealBasis basis(ms);
  const RealLinearModel model(basis, ms, params);
  if (noise.rows() != basis.dim()) throw InvalidArgument("replay_flow: noise has wrong dimension");
  Eigen::MatrixXd zs(basis.dim(), noise.cols() + 1);
  Eigen::VectorXd z = basis.to_real(initial);
  zs.col(0) = z;
  const double sqdt = std::sqrt(dt);
  for (Eigen::Index n = 0; n < noise.cols(); ++n) {
    z += model.drift(z) * dt + model.apply_noise(noise.col(n)) * sqdt;
    if (!z.allFinite()) throw NumericalError("non-finite replayed state", static_cast<std::size_t>(n + 1));
    zs.col(n + 1) = z;
  }
  return basis.to_complex_series(zs);
}

}  // namespace lagda
