#include "lagda/smoother.hpp"

#include "lagda/error.hpp"
#include "lagda/rng.hpp"

#include <cmath>

namespace lagda {

Eigen::MatrixXd SmootherSeries::mode_variance() const {
  Eigen::MatrixXd out(basis.to_complex(mean.col(0)).size(), variance.cols());
  for (Eigen::Index c = 0; c < variance.cols(); ++c) out.col(c) = basis.complex_variance_diag(variance.col(c));
  return out;
}

namespace {

// Q R^-1 through a jitter-regularized Cholesky factorization of R.
class GainSolver {
 public:
  GainSolver(const Eigen::MatrixXd& q, double jitter) : q_(q), jitter_(jitter) {}

  void factor(const Eigen::MatrixXd& R, std::size_t step) {
    reg_ = R;
    reg_.diagonal().array() += jitter_;
    llt_.compute(reg_);
    if (llt_.info() != Eigen::Success) {
      throw NumericalError("filter covariance is singular beyond jitter", step);
    }
  }
  /// Q R^-1 as a dense matrix.
  Eigen::MatrixXd matrix() const { return llt_.solve(q_).transpose(); }

 private:
  const Eigen::MatrixXd& q_;
  double jitter_;
  Eigen::MatrixXd reg_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// The relaxation term Q R^-1 (mu - x) is stepped implicitly:
// (I + dt Q R^-1)^-1 = R (R + dt Q)^-1 =: G, which stays bounded when the
// filter covariance collapses towards zero after a large first update.
class Relaxation {
 public:
  Relaxation(const Eigen::MatrixXd& q, double dt, double jitter) : q_(q), dt_(dt), jitter_(jitter) {}

  void factor(const Eigen::MatrixXd& R, std::size_t step) {
    r_ = &R;
    reg_ = R + dt_ * q_;
    reg_.diagonal().array() += jitter_;
    llt_.compute(reg_);
    if (llt_.info() != Eigen::Success) {
      throw NumericalError("filter covariance is singular beyond jitter", step);
    }
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return *r_ * llt_.solve(v); }
  Eigen::MatrixXd matrix() const {
    return *r_ * llt_.solve(Eigen::MatrixXd::Identity(reg_.rows(), reg_.cols()));
  }

 private:
  const Eigen::MatrixXd& q_;
  double dt_;
  double jitter_;
  const Eigen::MatrixXd* r_ = nullptr;
  Eigen::MatrixXd reg_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

Eigen::MatrixXd terminal_factor(const Eigen::MatrixXd& R) {
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

}  // namespace

SmootherSeries run_backward_smoother(const FilterSeries& filter, const TracerTrack& track,
                                     const LsmParams& params, const ModeSet& ms,
                                     const SmootherConfig& cfg) {
  const RealLinearModel model(filter.basis, ms, params);
  const Eigen::MatrixXd q = model.noise_covariance_dense();
  const std::size_t n_steps = filter.steps();
  const double dt = filter.dt;
  CovarianceReplay replay(filter, track, params, ms);
  GainSolver gain(q, cfg.jitter);
  Relaxation relax(q, dt, cfg.jitter);

  SmootherSeries sm;
  sm.dt = dt;
  sm.basis = filter.basis;
  sm.mean.resize(filter.mean.rows(), filter.mean.cols());
  sm.variance.resize(filter.mean.rows(), filter.mean.cols());
  Eigen::VectorXd mu_s = filter.mean.col(static_cast<Eigen::Index>(n_steps));
  Eigen::MatrixXd R_s = filter.terminal_cov;
  sm.mean.col(static_cast<Eigen::Index>(n_steps)) = mu_s;
  sm.variance.col(static_cast<Eigen::Index>(n_steps)) = R_s.diagonal();

  for (std::size_t n = n_steps; n > 0; --n) {
    const auto col = static_cast<Eigen::Index>(n);
    const Eigen::MatrixXd& R = replay.at(n);
    relax.factor(R, n);
    const Eigen::VectorXd mu = filter.mean.col(col);
    const Eigen::VectorXd ahead = mu_s - dt * model.drift(mu_s);
    if (cfg.covariance) {
      if (cfg.form == SmootherCovarianceForm::Correct) {
        const Eigen::MatrixXd g = relax.matrix();
        const Eigen::MatrixXd lr = model.lambda_times(R_s);
        const Eigen::MatrixXd inner = R_s - dt * (lr + lr.transpose()) + dt * q;
        // The second term equals dt^2 G Q R^-1 Q G^T; it makes the step keep
        // R_s = R fixed whenever R is stationary for the prior dynamics.
        const Eigen::MatrixXd ig = Eigen::MatrixXd::Identity(g.rows(), g.cols()) - g;
        const Eigen::MatrixXd next = g * inner * g.transpose() + ig * R * ig.transpose();
        R_s = 0.5 * (next + next.transpose());
      } else {
        gain.factor(R, n);
        const Eigen::MatrixXd m = model.lambda_dense() + gain.matrix();
        const Eigen::MatrixXd right = R_s * (model.lambda_dense().transpose() + q * R);
        const Eigen::MatrixXd next = R_s + dt * (-(m * R_s) - right + q);
        R_s = 0.5 * (next + next.transpose());
      }
    }
    mu_s = mu + relax.apply(ahead - mu);
    if (!mu_s.allFinite() || !R_s.allFinite()) throw NumericalError("non-finite smoother state", n - 1);
    sm.mean.col(col - 1) = mu_s;
    sm.variance.col(col - 1) = R_s.diagonal();
  }
  sm.initial_cov = R_s;
  return sm;
}

namespace {

void backward_paths(const FilterSeries& filter, const TracerTrack& track, const LsmParams& params,
                    const ModeSet& ms, const Eigen::MatrixXd* smoother_mean, int count,
                    std::uint64_t seed, double jitter, bool keep, Eigen::MatrixXd* mean_out,
                    SampledPaths* out) {
  const RealLinearModel model(filter.basis, ms, params);
  const Eigen::MatrixXd q = model.noise_covariance_dense();
  const int dim = filter.basis.dim();
  const std::size_t n_steps = filter.steps();
  const auto cols = static_cast<Eigen::Index>(n_steps + 1);
  const double dt = filter.dt;
  const double sqdt = std::sqrt(dt);
  CovarianceReplay replay(filter, track, params, ms);
  Relaxation relax(q, dt, jitter);

  std::vector<NormalStream> noise;
  for (int j = 0; j < count; ++j) noise.emplace_back(seed, Stream::Sampler, static_cast<std::uint64_t>(j));
  const Eigen::MatrixXd lterm = terminal_factor(filter.terminal_cov);

  Eigen::VectorXd mu_s = filter.mean.col(cols - 1);
  std::vector<Eigen::VectorXd> u(count);
  Eigen::VectorXd xi(dim);
  for (int j = 0; j < count; ++j) {
    for (int i = 0; i < dim; ++i) xi[i] = noise[j]();
    u[j] = mu_s + lterm * xi;
  }
  if (mean_out) {
    mean_out->resize(dim, cols);
    mean_out->col(cols - 1) = mu_s;
  }
  if (keep) out->paths.assign(count, Eigen::MatrixXd(dim, cols));
  out->mean.setZero(dim, cols);
  out->variance.setZero(dim, cols);
  out->count = count;
  auto record = [&](Eigen::Index col) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd s2 = Eigen::VectorXd::Zero(dim);
    for (int j = 0; j < count; ++j) {
      if (keep) out->paths[j].col(col) = u[j];
      s += u[j];
    }
    const Eigen::VectorXd m = s / std::max(count, 1);
    for (int j = 0; j < count; ++j) s2 += (u[j] - m).cwiseAbs2();
    out->mean.col(col) = m;
    out->variance.col(col) = count > 1 ? Eigen::VectorXd(s2 / (count - 1)) : Eigen::VectorXd::Zero(dim);
  };
  record(cols - 1);

  for (std::size_t n = n_steps; n > 0; --n) {
    const auto col = static_cast<Eigen::Index>(n);
    relax.factor(replay.at(n), n);
    Eigen::VectorXd mu_prev;
    if (smoother_mean) {
      mu_prev = smoother_mean->col(col - 1);
    } else {
      const Eigen::VectorXd mu = filter.mean.col(col);
      mu_prev = mu + relax.apply(mu_s - dt * model.drift(mu_s) - mu);
    }
    for (int j = 0; j < count; ++j) {
      const Eigen::VectorXd e = u[j] - mu_s;
      for (int i = 0; i < dim; ++i) xi[i] = noise[j]();
      u[j] = mu_prev + relax.apply(e - dt * model.lambda_times(e) + sqdt * model.apply_noise(xi));
      if (!u[j].allFinite()) throw NumericalError("non-finite sampled path", n - 1);
    }
    mu_s = mu_prev;
    if (mean_out) mean_out->col(col - 1) = mu_s;
    record(col - 1);
  }
}

}  // namespace

SampledPaths sample_backward_trajectories(const SmootherSeries& smoother, const FilterSeries& filter,
                                          const TracerTrack& track, const LsmParams& params,
                                          const ModeSet& ms, int count, std::uint64_t seed,
                                          bool keep_paths, double jitter) {
  if (count < 1) throw InvalidArgument("sample_backward_trajectories: count must be >= 1");
  if (smoother.mean.cols() != filter.mean.cols()) {
    throw InvalidArgument("sample_backward_trajectories: smoother/filter length mismatch");
  }
  SampledPaths out;
  backward_paths(filter, track, params, ms, &smoother.mean, count, seed, jitter, keep_paths, nullptr, &out);
  return out;
}

Eigen::MatrixXcd sample_backward_trajectory(const SmootherSeries& smoother, const FilterSeries& filter,
                                            const TracerTrack& track, const LsmParams& params,
                                            const ModeSet& ms, std::uint64_t seed) {
  const auto s = sample_backward_trajectories(smoother, filter, track, params, ms, 1, seed, true);
  return s.complex_path(filter.basis, 0);
}

BackwardPass backward_mean_and_samples(const FilterSeries& filter, const TracerTrack& track,
                                       const LsmParams& params, const ModeSet& ms, int samples,
                                       std::uint64_t seed, double jitter) {
  BackwardPass bp;
  SampledPaths out;
  backward_paths(filter, track, params, ms, nullptr, samples, seed, jitter, true, &bp.smoother_mean, &out);
  bp.samples = std::move(out.paths);
  return bp;
}

}  // namespace lagda
