#include "lagda/filter.hpp"

#include "lagda/error.hpp"
#include "lagda/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace lagda {

std::string to_string(FilterVariant v) {
  switch (v) {
    case FilterVariant::Full: return "full";
    case FilterVariant::DiagRiccati: return "diag_riccati";
    case FilterVariant::DiagConstant: return "diag_constant";
    case FilterVariant::Randomized: return "randomized";
  }
  return "unknown";
}

FilterVariant filter_variant_from_string(const std::string& name) {
  if (name == "full") return FilterVariant::Full;
  if (name == "diag_riccati") return FilterVariant::DiagRiccati;
  if (name == "diag_constant") return FilterVariant::DiagConstant;
  if (name == "randomized") return FilterVariant::Randomized;
  throw InvalidArgument("unknown filter variant '" + name + "'");
}

void FilterConfig::validate(int tracer_count) const {
  if (!(sigma_x > 0.0)) throw InvalidArgument("FilterConfig: sigma_x must be positive");
  if (!(jitter >= 0.0)) throw InvalidArgument("FilterConfig: jitter must be >= 0");
  if (checkpoint_every < 1) throw InvalidArgument("FilterConfig: checkpoint_every must be >= 1");
  if (variant == FilterVariant::Randomized && (L_prime < 1 || L_prime > tracer_count)) {
    throw InvalidArgument("FilterConfig: L_prime must lie in [1, L]");
  }
}

Eigen::MatrixXd FilterSeries::mode_variance() const {
  Eigen::MatrixXd out(basis.to_complex(mean.col(0)).size(), variance.cols());
  for (Eigen::Index c = 0; c < variance.cols(); ++c) out.col(c) = basis.complex_variance_diag(variance.col(c));
  return out;
}

PosteriorGaussian FilterSeries::terminal() const {
  PosteriorGaussian p;
  p.mu = basis.to_complex(mean.col(mean.cols() - 1));
  p.R = basis.covariance_to_complex(terminal_cov);
  p.time = dt * static_cast<double>(steps());
  return p;
}

namespace {

struct ComplexModel {
  Eigen::MatrixXcd lambda;
  Eigen::VectorXcd force;
  Eigen::MatrixXcd q;
};

ComplexModel complex_model(const LsmParams& params, const ModeSet& ms) {
  validate(params, ms);
  const auto k = static_cast<Eigen::Index>(ms.size());
  ComplexModel cm{Eigen::MatrixXcd::Zero(k, k), Eigen::VectorXcd::Zero(k), Eigen::MatrixXcd::Zero(k, k)};
  std::vector<int> mean_pos;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (ms.mode(m).is_mean_flow()) {
      mean_pos.push_back(static_cast<int>(m));
      continue;
    }
    const auto& p = params.modes[m];
    cm.lambda(m, m) = cdouble(-p.d, p.omega);
    cm.force[m] = p.f;
    cm.q(m, m) = p.sigma * p.sigma;
  }
  const Eigen::Matrix2d drift = params.mean_flow.drift();
  const Eigen::Matrix2d q0 = params.mean_flow.noise * params.mean_flow.noise.transpose();
  for (int a : mean_pos) {
    const int ia = ms.mode(a).kind == ModeKind::MeanFlowX ? 0 : 1;
    cm.force[a] = params.mean_flow.forcing[ia];
    for (int b : mean_pos) {
      const int ib = ms.mode(b).kind == ModeKind::MeanFlowX ? 0 : 1;
      cm.lambda(a, b) = drift(ia, ib);
      cm.q(a, b) = q0(ia, ib);
    }
  }
  return cm;
}

// Returns the log-determinant of the (possibly clamped) symmetric matrix.
bool symmetrize_and_clamp(Eigen::MatrixXd& R, double jitter, double* logdet) {
  R = 0.5 * (R + R.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
    if (logdet) logdet[0] = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return false;
  }
  // Singular but PSD matrices (e.g. noiseless modes) are left alone; only
  // negative eigenvalues are raised to the jitter level.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  Eigen::VectorXd ev = es.eigenvalues();
  const bool clamp = ev.minCoeff() < 0.0;
  if (clamp) {
    ev = (ev.array() < 0.0).select(jitter, ev);
    R = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    R = 0.5 * (R + R.transpose()).eval();
  }
  if (logdet) logdet[0] = ev.array().log().sum();
  return clamp;
}

struct Equilibrium {
  bool valid = false;
  double logdet = 0.0;
  std::vector<Eigen::MatrixXd> inv_blocks;
};

Equilibrium equilibrium_for_dispersion(const RealLinearModel& model) {
  Equilibrium eq;
  try {
    const auto [mean, cov] = model.stationary_moments();
    (void)mean;
    double logdet = 0.0;
    for (const auto& b : model.blocks()) {
      const Eigen::MatrixXd blk = cov.block(b.offset, b.offset, b.size, b.size);
      Eigen::LLT<Eigen::MatrixXd> llt(blk);
      if (llt.info() != Eigen::Success) return eq;
      logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      eq.inv_blocks.push_back(llt.solve(Eigen::MatrixXd::Identity(b.size, b.size)));
    }
    eq.logdet = logdet;
    eq.valid = std::isfinite(logdet);
  } catch (const InvalidArgument&) {
    eq.valid = false;
  }
  return eq;
}

double dispersion_full(const Eigen::MatrixXd& R, double logdet, const Equilibrium& eq,
                       const RealLinearModel& model) {
  if (!eq.valid) return std::numeric_limits<double>::quiet_NaN();
  double tr = 0.0;
  for (std::size_t i = 0; i < model.blocks().size(); ++i) {
    const auto& b = model.blocks()[i];
    tr += (R.block(b.offset, b.offset, b.size, b.size) * eq.inv_blocks[i]).trace();
  }
  return -0.5 * (logdet - eq.logdet) + 0.5 * (tr - model.dim());
}

double dispersion_diag(const Eigen::VectorXd& r, const Equilibrium& eq, const RealLinearModel& model) {
  if (!eq.valid) return std::numeric_limits<double>::quiet_NaN();
  double tr = 0.0;
  for (std::size_t i = 0; i < model.blocks().size(); ++i) {
    const auto& b = model.blocks()[i];
    for (int j = 0; j < b.size; ++j) tr += r[b.offset + j] * eq.inv_blocks[i](j, j);
  }
  return -0.5 * (r.array().log().sum() - eq.logdet) + 0.5 * (tr - model.dim());
}

bool covariance_update(Eigen::MatrixXd& R, const Eigen::MatrixXd& A, const RealLinearModel& model,
                       double sigma_x, double dt, double jitter, Eigen::MatrixXd& ar, double* logdet) {
  const double s2 = 1.0 / (sigma_x * sigma_x);
  ar.noalias() = A * R;
  Eigen::MatrixXd rhs = model.lyapunov_rhs(R);
  rhs.noalias() -= s2 * ar.transpose() * ar;
  R.noalias() += dt * rhs;
  return symmetrize_and_clamp(R, jitter, logdet);
}

}  // namespace

PosteriorGaussian step_full_filter(const PosteriorGaussian& post, const Eigen::VectorXd& dX,
                                   const Eigen::MatrixXcd& A, const LsmParams& params,
                                   const ModeSet& ms, double sigma_x, double dt, double jitter,
                                   std::size_t* clamps) {
  const ComplexModel cm = complex_model(params, ms);
  const double s2 = 1.0 / (sigma_x * sigma_x);
  PosteriorGaussian out;
  out.time = post.time + dt;
  const Eigen::VectorXcd innov = dX.cast<cdouble>() - A * post.mu * dt;
  const Eigen::MatrixXcd ra = post.R * A.adjoint();
  out.mu = post.mu + (cm.force + cm.lambda * post.mu) * dt + s2 * ra * innov;
  Eigen::MatrixXcd lr = cm.lambda * post.R;
  out.R = post.R + (lr + lr.adjoint() + cm.q - s2 * ra * ra.adjoint()) * dt;
  out.R = 0.5 * (out.R + out.R.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(out.R);
  if (es.eigenvalues().minCoeff() < 0.0) {
    const Eigen::VectorXd ev = (es.eigenvalues().array() < 0.0).select(jitter, es.eigenvalues());
    out.R = es.eigenvectors() * ev.cast<cdouble>().asDiagonal() * es.eigenvectors().adjoint();
    out.R = 0.5 * (out.R + out.R.adjoint()).eval();
    if (clamps) ++*clamps;
  }
  if (!out.mu.allFinite() || !out.R.allFinite()) throw NumericalError("non-finite posterior", 0);
  return out;
}

bool step_covariance(Eigen::MatrixXd& R, const Eigen::MatrixXd& A, const RealLinearModel& model,
                     double sigma_x, double dt, double jitter, Eigen::MatrixXd& ar) {
  return covariance_update(R, A, model, sigma_x, dt, jitter, ar, nullptr);
}

double stationary_diagonal_variance(double d, double sigma, double sigma_x, double interaction) {
  if (!(d > 0.0)) throw InvalidArgument("stationary_diagonal_variance: d must be positive");
  const double s2 = sigma * sigma;
  return s2 / (d + std::sqrt(d * d + interaction * s2 / (sigma_x * sigma_x)));
}

PosteriorGaussian prior_posterior(const LsmParams& params, const ModeSet& ms) {
  const RealBasis basis(ms);
  const RealLinearModel model(basis, ms, params);
  const auto [mean, cov] = model.stationary_moments();
  return {basis.to_complex(mean), basis.covariance_to_complex(cov), 0.0};
}

FilterSeries run_filter(const TracerTrack& track, const LsmParams& params, const ModeSet& ms,
                        const FilterConfig& cfg) {
  const int l_count = track.tracer_count();
  cfg.validate(l_count);
  if (!(track.dt > 0.0)) throw InvalidArgument("run_filter: track dt must be positive");
  FilterSeries fs;
  fs.variant = cfg.variant;
  fs.dt = track.dt;
  fs.config = cfg;
  fs.basis = RealBasis(ms);
  const RealBasis& basis = fs.basis;
  const RealLinearModel model(basis, ms, params);
  const RealObservationBuilder obs(ms, basis);
  const int dim = basis.dim();
  const std::size_t n_steps = track.steps();
  const double dt = track.dt;
  const double s2 = 1.0 / (cfg.sigma_x * cfg.sigma_x);
  const Equilibrium eq = equilibrium_for_dispersion(model);

  Eigen::VectorXd mu;
  Eigen::MatrixXd R;
  if (cfg.initial) {
    mu = basis.to_real(cfg.initial->mu);
    R = basis.covariance_to_real(cfg.initial->R);
  } else {
    auto [m0, r0] = model.stationary_moments();
    mu = m0;
    R = r0;
  }
  fs.mean.resize(dim, static_cast<Eigen::Index>(n_steps + 1));
  fs.variance.resize(dim, static_cast<Eigen::Index>(n_steps + 1));
  fs.dispersion.resize(static_cast<Eigen::Index>(n_steps + 1));
  fs.mean.col(0) = mu;

  Eigen::MatrixXd A;
  Eigen::MatrixXd ar;
  if (cfg.variant == FilterVariant::Full) {
    fs.checkpoint_every = cfg.checkpoint_every;
    double logdet = 0.0;
    if (symmetrize_and_clamp(R, cfg.jitter, &logdet)) ++fs.clamp_count;
    fs.variance.col(0) = R.diagonal();
    fs.dispersion[0] = dispersion_full(R, logdet, eq, model);
    for (std::size_t n = 0; n < n_steps; ++n) {
      const auto col = static_cast<Eigen::Index>(n);
      if (n % static_cast<std::size_t>(cfg.checkpoint_every) == 0) fs.checkpoints.push_back(R);
      obs.build(track.positions.col(col), A);
      const Eigen::VectorXd innov = track.increments.col(col) - A * mu * dt;
      const bool clamped = covariance_update(R, A, model, cfg.sigma_x, dt, cfg.jitter, ar, &logdet);
      if (clamped) ++fs.clamp_count;
      const Eigen::VectorXd gain = s2 * (ar.transpose() * innov);
      mu += model.drift(mu) * dt + gain;
      if (!mu.allFinite() || !R.allFinite()) throw NumericalError("non-finite posterior", n + 1);
      fs.mean.col(col + 1) = mu;
      fs.variance.col(col + 1) = R.diagonal();
      fs.dispersion[col + 1] = dispersion_full(R, logdet, eq, model);
    }
    if (n_steps % static_cast<std::size_t>(cfg.checkpoint_every) == 0) fs.checkpoints.push_back(R);
    fs.terminal_cov = R;
    return fs;
  }

  // Diagonal variants.
  const Eigen::VectorXd lam = model.lambda_dense().diagonal();
  const Eigen::VectorXd q = model.noise_covariance_dense().diagonal();
  const bool randomized = cfg.variant == FilterVariant::Randomized;
  const int used = randomized ? cfg.L_prime : l_count;
  const Eigen::VectorXd interaction = obs.interaction_diagonal(used);
  const double gain_factor = randomized && cfg.rescale
                                 ? std::sqrt(static_cast<double>(l_count) / static_cast<double>(used))
                                 : 1.0;
  Eigen::VectorXd r(dim);
  if (cfg.variant == FilterVariant::DiagRiccati) {
    r = R.diagonal().cwiseMax(cfg.jitter);
  } else {
    for (int j = 0; j < dim; ++j) {
      const double s2q = q[j];
      const double d = -lam[j];
      const double c = interaction[j] * s2;
      double v = 0.0;
      if (c > 0.0) {
        v = s2q / (d + std::sqrt(d * d + c * s2q));
      } else {
        v = s2q / (2.0 * d);
      }
      r[j] = std::max(v, cfg.jitter);
    }
  }
  fs.variance.col(0) = r;
  fs.dispersion[0] = dispersion_diag(r, eq, model);

  Engine sel = make_engine(cfg.seed, Stream::Selection);
  std::vector<int> order(static_cast<std::size_t>(l_count));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> chosen(static_cast<std::size_t>(used));
  const bool all_tracers = !randomized || used == l_count;
  Eigen::VectorXd dx;

  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    if (all_tracers) {
      obs.build(track.positions.col(col), A);
      dx = track.increments.col(col);
    } else {
      for (int j = 0; j < used; ++j) {
        std::uniform_int_distribution<int> pick(j, l_count - 1);
        std::swap(order[j], order[pick(sel)]);
        chosen[j] = order[j];
      }
      obs.build_subset(track.positions.col(col), chosen, A);
      dx.resize(2 * used);
      for (int j = 0; j < used; ++j) dx.segment<2>(2 * j) = track.increments.col(col).segment<2>(2 * chosen[j]);
    }
    const Eigen::VectorXd innov = dx - A * mu * dt;
    const Eigen::VectorXd proj = A.transpose() * innov;
    mu += model.drift(mu) * dt + (gain_factor * s2) * r.cwiseProduct(proj);
    if (cfg.variant == FilterVariant::DiagRiccati) {
      r += dt * (2.0 * lam.cwiseProduct(r) + q - s2 * interaction.cwiseProduct(r.cwiseAbs2()));
      r = r.cwiseMax(cfg.jitter);
    }
    if (!mu.allFinite() || !r.allFinite()) throw NumericalError("non-finite posterior", n + 1);
    fs.mean.col(col + 1) = mu;
    fs.variance.col(col + 1) = r;
    fs.dispersion[col + 1] = dispersion_diag(r, eq, model);
  }
  fs.terminal_cov = r.asDiagonal();
  return fs;
}

CovarianceReplay::CovarianceReplay(const FilterSeries& series, const TracerTrack& track,
                                   const LsmParams& params, const ModeSet& ms)
    : series_(series),
      track_(track),
      model_(series.basis, ms, params),
      obs_(ms, series.basis) {
  if (track.steps() != series.steps()) throw InvalidArgument("CovarianceReplay: track/series length mismatch");
  if (series.variant == FilterVariant::Full && series.checkpoints.empty()) {
    throw InvalidArgument("CovarianceReplay: full filter series has no covariance tape");
  }
}

void CovarianceReplay::load_segment(std::size_t seg) {
  const auto c = static_cast<std::size_t>(series_.checkpoint_every);
  const std::size_t start = seg * c;
  const std::size_t stop = std::min(start + c - 1, series_.steps());
  segment_.resize(stop - start + 1);
  segment_[0] = series_.checkpoints.at(seg);
  Eigen::MatrixXd A, ar;
  Eigen::MatrixXd R = segment_[0];
  for (std::size_t n = start; n < stop; ++n) {
    obs_.build(track_.positions.col(static_cast<Eigen::Index>(n)), A);
    step_covariance(R, A, model_, series_.config.sigma_x, series_.dt, series_.config.jitter, ar);
    segment_[n - start + 1] = R;
  }
  loaded_ = seg;
}

const Eigen::MatrixXd& CovarianceReplay::at(std::size_t n) {
  if (series_.variant != FilterVariant::Full) {
    diag_ = series_.variance.col(static_cast<Eigen::Index>(n)).asDiagonal();
    return diag_;
  }
  if (n == series_.steps()) return series_.terminal_cov;
  const auto c = static_cast<std::size_t>(series_.checkpoint_every);
  const std::size_t seg = n / c;
  if (seg != loaded_) load_segment(seg);
  return segment_[n - seg * c];
}

}  // namespace lagda
