#include "lagda/topographic.hpp"

#include "lagda/error.hpp"
#include "lagda/rng.hpp"
#include "lagda/torus.hpp"

#include <cmath>
#include <random>

namespace lagda {

namespace {
constexpr cdouble kI{0.0, 1.0};
}

void TopoModelParams::validate() const {
  if (K < 1) throw InvalidArgument("topographic model: K must be >= 1");
  if (damping.size() != K || sigma_v.size() != K) {
    throw InvalidArgument("topographic model: damping and sigma_v need K entries");
  }
  if ((damping.array() <= 0.0).any() || !(damping_u > 0.0)) {
    throw InvalidArgument("topographic model: dampings must be positive");
  }
  if ((sigma_v.array() < 0.0).any() || sigma_u < 0.0) {
    throw InvalidArgument("topographic model: noise amplitudes must be >= 0");
  }
  if (topography.size() != 0 && topography.size() != K) {
    throw InvalidArgument("topographic model: topography needs K entries");
  }
}

Eigen::VectorXcd TopoModelParams::h() const {
  if (topography.size() == K) return topography;
  return topography_coefficients(K, H1, H2, p, theta_seed);
}

Eigen::VectorXcd topography_from_phases(int K, double H1, double H2, double p,
                                        const Eigen::VectorXd& theta) {
  if (K < 1) throw InvalidArgument("topography: K must be >= 1");
  Eigen::VectorXcd h(K);
  for (int k = 1; k <= K; ++k) {
    if (k == 1) {
      h[0] = cdouble(H1 / 2.0, -H1 / 2.0);
    } else if (k == 2) {
      h[1] = cdouble(H2 / 2.0, -H2 / 2.0);
    } else {
      const double s = 4.0 * std::pow(k, p);
      h[k - 1] = cdouble(std::sin(theta[k - 1]) / s, -std::cos(theta[k - 1]) / s);
    }
  }
  return h;
}

Eigen::VectorXcd topography_coefficients(int K, double H1, double H2, double p, std::uint64_t seed) {
  auto eng = make_engine(seed, Stream::Topography);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(std::max(K, 1));
  for (int k = 3; k <= K; ++k) theta[k - 1] = phase(eng);
  return topography_from_phases(K, H1, H2, p, theta);
}

RegimeNoise regime_noise(Regime regime, int K) {
  if (K < 1) throw InvalidArgument("regime_noise: K must be >= 1");
  RegimeNoise out;
  out.sigma_v.resize(K);
  const double r2 = M_SQRT2;
  for (int k = 1; k <= K; ++k) {
    double s = 0.0;
    if (regime == Regime::I) {
      s = k == 1 ? 1.0 / r2 : k == 2 ? 1.0 / (2.0 * r2) : 1.0 / (r2 * k * k);
    } else {
      s = k <= 2 ? 1.0 / (4.0 * r2) : 1.0 / (2.0 * r2 * k * k);
    }
    out.sigma_v[k - 1] = s;
  }
  out.sigma_u = regime == Regime::I ? 1.0 / (2.0 * r2) : 1.0 / r2;
  return out;
}

TopoModelParams regime_params(Regime regime, int K, std::uint64_t theta_seed) {
  TopoModelParams tp;
  tp.K = K;
  tp.damping = Eigen::VectorXd::Constant(K, 0.0125);
  tp.damping_u = 0.0125;
  tp.theta_seed = theta_seed;
  const auto rn = regime_noise(regime, K);
  tp.sigma_v = rn.sigma_v;
  tp.sigma_u = rn.sigma_u;
  tp.topography = tp.h();
  return tp;
}

TopoDynamics::TopoDynamics(const TopoModelParams& params) {
  params.validate();
  K_ = params.K;
  d_ = params.damping;
  du_ = params.damping_u;
  beta_ = params.beta;
  h_ = params.h();
  noise_.resize(dim());
  noise_[0] = params.sigma_u;
  for (int k = 1; k <= K_; ++k) {
    noise_[2 * k - 1] = params.sigma_v[k - 1] * M_SQRT1_2;
    noise_[2 * k] = params.sigma_v[k - 1] * M_SQRT1_2;
  }
}

Eigen::VectorXd TopoDynamics::drift(const Eigen::VectorXd& s) const {
  Eigen::VectorXd out(dim());
  const double u = s[0];
  double du = -du_ * u;
  for (int k = 1; k <= K_; ++k) {
    const cdouble psi(s[2 * k - 1], s[2 * k]);
    const cdouble h = h_[k - 1];
    const cdouble dpsi = -d_[k - 1] * psi + kI * static_cast<double>(k) * (beta_ / (k * k) - u) * psi +
                         kI * h * u / static_cast<double>(k);
    out[2 * k - 1] = dpsi.real();
    out[2 * k] = dpsi.imag();
    du += 2.0 * k * std::imag(h * std::conj(psi));
  }
  out[0] = du;
  return out;
}

Eigen::VectorXd TopoDynamics::rk4_step(const Eigen::VectorXd& s, double dt) const {
  const Eigen::VectorXd k1 = drift(s);
  const Eigen::VectorXd k2 = drift(s + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = drift(s + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = drift(s + dt * k3);
  return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd TopoDynamics::velocity(const Eigen::VectorXd& s, const Eigen::VectorXd& positions) const {
  const Eigen::Index l_count = positions.size() / 2;
  Eigen::VectorXd out(positions.size());
  for (Eigen::Index l = 0; l < l_count; ++l) {
    const cdouble e = std::polar(1.0, positions[2 * l]);
    cdouble ph = 1.0;
    double v = 0.0;
    for (int k = 1; k <= K_; ++k) {
      ph *= e;
      const cdouble psi(s[2 * k - 1], s[2 * k]);
      v += 2.0 * std::real(kI * static_cast<double>(k) * psi * ph);
    }
    out[2 * l] = s[0];
    out[2 * l + 1] = v;
  }
  return out;
}

Eigen::VectorXcd TopoDynamics::to_layered(const Eigen::VectorXd& s) const {
  Eigen::VectorXcd out(2 * K_ + 1);
  for (int k = 1; k <= K_; ++k) {
    const cdouble v = kI * static_cast<double>(k) * cdouble(s[2 * k - 1], s[2 * k]);
    out[K_ + k - 1] = v;
    out[K_ - k] = std::conj(v);
  }
  out[2 * K_] = s[0];
  return out;
}

Eigen::VectorXd TopoDynamics::from_layered(const Eigen::VectorXcd& values) const {
  if (values.size() != 2 * K_ + 1) throw InvalidArgument("from_layered: wrong length");
  Eigen::VectorXd s(dim());
  s[0] = values[2 * K_].real();
  for (int k = 1; k <= K_; ++k) {
    const cdouble psi = -kI * values[K_ + k - 1] / static_cast<double>(k);
    s[2 * k - 1] = psi.real();
    s[2 * k] = psi.imag();
  }
  return s;
}

TopoModelParams reduced_model(const TopoModelParams& full, int kept) {
  if (kept < 1 || kept > full.K) throw InvalidArgument("reduced_model: kept must be in [1, K]");
  TopoModelParams r = full;
  r.K = kept;
  r.damping = full.damping.head(kept);
  r.sigma_v = full.sigma_v.head(kept);
  r.topography = full.h().head(kept);
  return r;
}

TopoDynamics reduced_drift(const TopoModelParams& full, int kept) {
  return TopoDynamics(reduced_model(full, kept));
}

TruthRecord simulate_topographic(const TopoModelParams& tp, const SimConfig& cfg, double spinup,
                                 const Eigen::VectorXd* initial_state) {
  cfg.validate();
  const TopoDynamics dyn(tp);
  const int dim = dyn.dim();
  const std::size_t n_steps = cfg.steps();
  const int l_count = cfg.tracers;

  std::vector<NormalStream> flow_noise;
  for (int j = 0; j < dim; ++j) flow_noise.emplace_back(cfg.seed, Stream::FlowNoise, j);
  std::vector<NormalStream> tracer_noise;
  for (int l = 0; l < l_count; ++l) tracer_noise.emplace_back(cfg.seed, Stream::TracerNoise, l);

  Eigen::VectorXd s = Eigen::VectorXd::Zero(dim);
  if (initial_state) {
    if (initial_state->size() != dim) throw InvalidArgument("simulate_topographic: bad initial state");
    s = *initial_state;
  }
  const double sqdt = std::sqrt(cfg.dt);
  Eigen::VectorXd xi(dim);
  auto advance = [&](std::size_t step) {
    for (int j = 0; j < dim; ++j) xi[j] = flow_noise[j]();
    s = dyn.rk4_step(s, cfg.dt) + sqdt * dyn.noise().cwiseProduct(xi);
    if (!s.allFinite()) throw NumericalError("non-finite topographic state", step);
  };
  const auto spin_steps = static_cast<std::size_t>(std::llround(spinup / cfg.dt));
  for (std::size_t n = 0; n < spin_steps; ++n) advance(n + 1);

  TruthRecord rec;
  rec.model = "topographic";
  rec.config = cfg;
  rec.times = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n_steps + 1), 0.0,
                                         static_cast<double>(n_steps) * cfg.dt);
  rec.flow.resize(dim, static_cast<Eigen::Index>(n_steps + 1));
  rec.tracers.dt = cfg.dt;
  rec.tracers.positions.resize(2 * l_count, static_cast<Eigen::Index>(n_steps + 1));
  rec.tracers.increments.resize(2 * l_count, static_cast<Eigen::Index>(n_steps));
  const auto init_pos = cfg.initial_tracers.empty() ? uniform_tracers(l_count, cfg.seed)
                                                    : cfg.initial_tracers;
  for (int l = 0; l < l_count; ++l) {
    rec.tracers.positions.col(0).segment<2>(2 * l) = wrap_point(init_pos[l]);
  }
  rec.flow.col(0) = dyn.to_layered(s);

  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    const Eigen::VectorXd x = rec.tracers.positions.col(col);
    const Eigen::VectorXd vel = dyn.velocity(s, x);
    advance(n + 1);
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
    rec.flow.col(col + 1) = dyn.to_layered(s);
  }
  return rec;
}

Eigen::MatrixXcd layered_to_gb_series(const Eigen::MatrixXcd& layered, const ModeSet& layered_ms,
                                      const ModeSet& gb_ms) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(gb_ms.size()), layered.cols());
  for (std::size_t m = 0; m < layered_ms.size(); ++m) {
    const auto& idx = layered_ms.mode(m);
    const int target = gb_ms.find(idx.k, idx.kind);
    if (target < 0) {
      if (idx.is_mean_flow()) continue;
      throw InvalidArgument("layered_to_gb_series: GB set lacks wavenumber (" +
                            std::to_string(idx.k.x) + ", 0)");
    }
    if (idx.is_mean_flow()) {
      out.row(target) = layered.row(m);
    } else {
      out.row(target) = -kI * static_cast<double>(idx.k.x) * layered.row(m);
    }
  }
  return out;
}

}  // namespace lagda
