#include "lagda/estimation.hpp"

#include "lagda/error.hpp"
#include "lagda/parallel.hpp"
#include "lagda/smoother.hpp"

#include <fftw3.h>
#include <unsupported/Eigen/NonLinearOptimization>

#include <cmath>
#include <mutex>

namespace lagda {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Eigen::VectorXcd compute_acf(const Eigen::VectorXcd& series, int max_lag) {
  const auto n = static_cast<std::size_t>(series.size());
  if (max_lag < 1) throw InvalidArgument("compute_acf: max_lag must be >= 1");
  if (n < 4 * static_cast<std::size_t>(max_lag)) {
    throw InvalidArgument("compute_acf: series shorter than 4 * max_lag");
  }
  const cdouble mean = series.mean();
  const std::size_t len = next_pow2(2 * n);
  fftw_complex* buf = fftw_alloc_complex(len);
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_1d(static_cast<int>(len), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_1d(static_cast<int>(len), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < len; ++i) {
    const cdouble v = i < n ? series[static_cast<Eigen::Index>(i)] - mean : cdouble(0.0, 0.0);
    buf[i][0] = v.real();
    buf[i][1] = v.imag();
  }
  fftw_execute(fwd);
  for (std::size_t i = 0; i < len; ++i) {
    buf[i][0] = buf[i][0] * buf[i][0] + buf[i][1] * buf[i][1];
    buf[i][1] = 0.0;
  }
  fftw_execute(bwd);
  // buf[s] = len * sum_t u(t + s) conj(u(t)).
  Eigen::VectorXcd acf(max_lag + 1);
  const double c0 = buf[0][0];
  for (int s = 0; s <= max_lag; ++s) acf[s] = cdouble(buf[s][0], buf[s][1]);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  fftw_free(buf);
  const double var_scale = (series.array() - mean).abs2().sum();
  if (!(c0 > 0.0) || !(var_scale > 1e-300 * static_cast<double>(n))) {
    throw InvalidArgument("compute_acf: series has zero variance");
  }
  acf /= c0;
  acf[0] = 1.0;
  return acf;
}

namespace {

struct AnsatzFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const Eigen::VectorXcd* acf;
  double dt;
  int lags;

  int inputs() const { return 2; }
  int values() const { return 2 * lags; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    for (int j = 0; j < lags; ++j) {
      const double t = j * dt;
      const double e = std::exp(-x[0] * t);
      fvec[2 * j] = (*acf)[j].real() - e * std::cos(x[1] * t);
      fvec[2 * j + 1] = (*acf)[j].imag() - e * std::sin(x[1] * t);
    }
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    for (int j = 0; j < lags; ++j) {
      const double t = j * dt;
      const double e = std::exp(-x[0] * t);
      const double c = std::cos(x[1] * t);
      const double s = std::sin(x[1] * t);
      jac(2 * j, 0) = t * e * c;
      jac(2 * j, 1) = t * e * s;
      jac(2 * j + 1, 0) = t * e * s;
      jac(2 * j + 1, 1) = -t * e * c;
    }
    return 0;
  }
};

}  // namespace

AcfFit fit_acf_ansatz(const Eigen::VectorXcd& acf, double dt) {
  const int n = static_cast<int>(acf.size());
  if (n < 11) throw InvalidArgument("fit_acf_ansatz: need at least 10 lags");
  if (!(dt > 0.0)) throw InvalidArgument("fit_acf_ansatz: dt must be positive");
  const double level = std::exp(-1.0);
  double t_cross = -1.0;
  int j_cross = -1;
  for (int j = 1; j < n; ++j) {
    const double a0 = std::abs(acf[j - 1]);
    const double a1 = std::abs(acf[j]);
    if (a1 < level) {
      const double frac = a0 > a1 ? (a0 - level) / (a0 - a1) : 0.0;
      t_cross = (j - 1 + frac) * dt;
      j_cross = j;
      break;
    }
  }
  double c1_crude = 0.0;
  if (t_cross > 0.0) {
    c1_crude = 1.0 / t_cross;
  } else {
    const double a_last = std::abs(acf[n - 1]);
    if (!(a_last > 0.0) || a_last >= 1.0) {
      throw InvalidArgument("fit_acf_ansatz: ACF does not decay over the available lags");
    }
    c1_crude = -std::log(a_last) / ((n - 1) * dt);
    j_cross = n - 1;
  }
  const int window = std::min(n, static_cast<int>(std::ceil(5.0 / (c1_crude * dt))) + 1);
  if (window < 11) throw InvalidArgument("fit_acf_ansatz: fewer than 10 lags inside the fit window");

  // Phase slope up to the crossing seeds the oscillation rate.
  double phase = 0.0;
  for (int j = 1; j <= j_cross; ++j) {
    double dphi = std::arg(acf[j]) - std::arg(acf[j - 1]);
    while (dphi > M_PI) dphi -= 2.0 * M_PI;
    while (dphi <= -M_PI) dphi += 2.0 * M_PI;
    phase += dphi;
  }
  const double c2_crude = j_cross > 0 ? phase / (j_cross * dt) : 0.0;

  AnsatzFunctor functor{&acf, dt, window};
  Eigen::LevenbergMarquardt<AnsatzFunctor> lm(functor);
  lm.parameters.ftol = 1e-15;
  lm.parameters.xtol = 1e-15;
  lm.parameters.maxfev = 2000;
  Eigen::VectorXd x(2);
  x << c1_crude, c2_crude;
  lm.minimize(x);
  if (!x.allFinite() || !(x[0] > 0.0)) {
    throw InvalidArgument("fit_acf_ansatz: fit did not produce a positive decay rate");
  }
  Eigen::VectorXd f(2 * window);
  functor(x, f);
  return {x[0], x[1], std::sqrt(f.squaredNorm() / window), window};
}

DecorrelationTime decorrelation_time(const AcfFit& fit) {
  if (!(fit.c1 > 0.0)) throw InvalidArgument("decorrelation_time: c1 must be positive");
  const double den = fit.c1 * fit.c1 + fit.c2 * fit.c2;
  return {fit.c1 / den, fit.c2 / den};
}

ModeParams match_statistics(const ModeStatistics& s) {
  if (!(s.T > 0.0)) throw InvalidArgument("match_statistics: T must be positive");
  if (!(s.E > 0.0)) throw InvalidArgument("match_statistics: E must be positive");
  const double den = s.T * s.T + s.theta * s.theta;
  ModeParams p;
  p.f = cdouble(s.T, -s.theta) * s.m / den;
  p.d = s.T / den;
  p.omega = s.theta / den;
  p.sigma = std::sqrt(2.0 * s.E * s.T / den);
  return p;
}

ModeStatistics analytic_statistics(const ModeParams& p) {
  if (!(p.d > 0.0)) throw InvalidArgument("analytic_statistics: d must be positive");
  const double den = p.d * p.d + p.omega * p.omega;
  ModeStatistics s;
  s.m = p.f / cdouble(p.d, -p.omega);
  s.E = p.sigma * p.sigma / (2.0 * p.d);
  s.T = p.d / den;
  s.theta = p.omega / den;
  return s;
}

ModeStatistics series_statistics(const Eigen::VectorXcd& series, double dt, int max_lag, AcfFit* fit) {
  ModeStatistics st;
  st.m = series.mean();
  st.E = (series.array() - st.m).abs2().mean();
  const AcfFit af = fit_acf_ansatz(compute_acf(series, max_lag), dt);
  const auto tau = decorrelation_time(af);
  st.T = tau.T;
  st.theta = tau.theta;
  if (fit) *fit = af;
  return st;
}

MeanFlowParams regress_mean_flow(const Eigen::MatrixXd& w, double dt) {
  const auto dims = w.rows();
  const auto n = w.cols() - 1;
  if (dims < 1 || dims > 2) throw InvalidArgument("regress_mean_flow: one or two components expected");
  if (n < 99) throw InvalidArgument("regress_mean_flow: series needs at least 100 samples");
  Eigen::MatrixXd design(n, dims + 1);
  design.leftCols(dims) = w.leftCols(n).transpose();
  design.col(dims).setOnes();
  const Eigen::MatrixXd target = ((w.rightCols(n) - w.leftCols(n)) / dt).transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < dims + 1) throw InvalidArgument("regress_mean_flow: rank-deficient regression");
  const Eigen::MatrixXd coef = qr.solve(target);  // (dims + 1) x dims
  const Eigen::MatrixXd resid = target - design * coef;
  const Eigen::MatrixXd drift = coef.topRows(dims).transpose();

  MeanFlowParams mf;
  mf.noise.setZero();
  for (Eigen::Index i = 0; i < dims; ++i) {
    mf.damping[i] = -drift(i, i);
    mf.forcing[i] = coef(dims, i);
    const Eigen::VectorXd r = resid.col(i);
    const double var = (r.array() - r.mean()).square().sum() / static_cast<double>(n - 1);
    mf.noise(i, i) = std::sqrt(dt * var);
  }
  if (dims == 2) {
    mf.rotation[0] = drift(0, 1);
    mf.rotation[1] = drift(1, 0);
  } else {
    mf.noise(1, 1) = 1.0;
  }
  return mf;
}

Eigen::VectorXd stacked_damping_noise(const LsmParams& params, const ModeSet& ms) {
  const Eigen::VectorXd d = stacked_damping(params, ms);
  const Eigen::VectorXd s = stacked_noise(params, ms);
  Eigen::VectorXd out(d.size() + s.size());
  out << d, s;
  return out;
}

LsmParams update_from_samples(const std::vector<Eigen::MatrixXd>& samples, const RealBasis& basis,
                              const ModeSet& /*ms*/, double dt, const EstimationConfig& cfg,
                              const LsmParams& previous) {
  if (samples.empty()) throw InvalidArgument("update_from_samples: no samples");
  const auto n = samples.front().cols();
  const int max_lag = std::max(10, std::min(static_cast<int>(n / 4),
                                            static_cast<int>(std::llround(cfg.max_lag_time / dt))));
  LsmParams next = previous;
  const auto& blocks = basis.blocks();
  parallel_for(blocks.size(), cfg.workers, [&](std::size_t bi) {
    const auto& b = blocks[bi];
    if (b.mean_flow) return;
    ModeStatistics acc;
    for (const auto& z : samples) {
      const Eigen::VectorXcd u =
          (z.row(b.offset).transpose().cast<cdouble>() + cdouble(0.0, 1.0) * z.row(b.offset + 1).transpose().cast<cdouble>()) *
          M_SQRT1_2;
      const ModeStatistics st = series_statistics(u, dt, max_lag);
      acc.m += st.m;
      acc.E += st.E;
      acc.T += st.T;
      acc.theta += st.theta;
    }
    const double k = static_cast<double>(samples.size());
    acc.m /= k;
    acc.E /= k;
    acc.T /= k;
    acc.theta /= k;
    const ModeParams p = match_statistics(acc);
    next.modes[b.first] = p;
    ModeParams q = p;
    q.omega = -p.omega;
    q.f = std::conj(p.f);
    next.modes[b.second] = q;
  });
  for (const auto& b : blocks) {
    if (!b.mean_flow) continue;
    MeanFlowParams acc;
    acc.damping.setZero();
    acc.rotation.setZero();
    acc.forcing.setZero();
    acc.noise.setZero();
    for (const auto& z : samples) {
      const MeanFlowParams mf = regress_mean_flow(z.middleRows(b.offset, b.size), dt);
      acc.damping += mf.damping;
      acc.rotation += mf.rotation;
      acc.forcing += mf.forcing;
      acc.noise += mf.noise;
    }
    const double k = static_cast<double>(samples.size());
    acc.damping = (acc.damping / k).cwiseMax(cfg.min_damping);
    acc.rotation /= k;
    acc.forcing /= k;
    acc.noise /= k;
    if (b.size == 1) {
      acc.damping[1] = 1.0;
      acc.rotation.setZero();
      acc.noise(1, 1) = 1.0;
    }
    next.mean_flow = acc;
  }
  return next;
}

EstimationResult estimate_parameters_iterative(
    const TracerTrack& track, const ModeSet& ms, double sigma_x, const EstimationConfig& cfg,
    const std::function<void(const IterationRecord&)>& on_iteration) {
  if (!(cfg.eps > 0.0)) throw InvalidArgument("estimation: eps must be positive");
  if (cfg.max_iter < 1) throw InvalidArgument("estimation: max_iter must be >= 1");
  if (cfg.samples < 1) throw InvalidArgument("estimation: samples must be >= 1");
  EstimationResult res;
  LsmParams current = cfg.theta0 ? *cfg.theta0 : default_initial_guess(ms);
  validate(current, ms);
  FilterConfig fc;
  fc.variant = FilterVariant::Full;
  fc.sigma_x = sigma_x;
  fc.jitter = cfg.jitter;
  fc.checkpoint_every = cfg.checkpoint_every;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    LsmParams next;
    try {
      const FilterSeries fs = run_filter(track, current, ms, fc);
      const BackwardPass bp = backward_mean_and_samples(fs, track, current, ms, cfg.samples, cfg.seed, cfg.jitter);
      next = update_from_samples(bp.samples, fs.basis, ms, track.dt, cfg, current);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("estimation iteration ") + std::to_string(it) + ": " + e.what(), e.step());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("estimation iteration " + std::to_string(it) + ": " + e.what());
    }
    const Eigen::VectorXd prev_v = stacked_damping_noise(current, ms);
    const Eigen::VectorXd next_v = stacked_damping_noise(next, ms);
    const auto half = prev_v.size() / 2;
    IterationRecord rec;
    rec.iteration = it;
    rec.change = (next_v - prev_v).norm() / prev_v.norm();
    rec.change_d = (next_v.head(half) - prev_v.head(half)).norm() / prev_v.head(half).norm();
    rec.change_sigma = (next_v.tail(half) - prev_v.tail(half)).norm() / prev_v.tail(half).norm();
    rec.params = next;
    res.trace.push_back(rec);
    if (on_iteration) on_iteration(rec);
    current = next;
    if (rec.change < cfg.eps) {
      res.converged = true;
      break;
    }
  }
  res.params = current;
  return res;
}

LsmParams calibrate_from_series(const Eigen::MatrixXcd& flow, const ModeSet& ms, double dt,
                                const EstimationConfig& cfg) {
  if (flow.rows() != static_cast<Eigen::Index>(ms.size())) {
    throw InvalidArgument("calibrate_from_series: signal rows do not match the mode set");
  }
  const RealBasis basis(ms);
  Eigen::MatrixXd z(basis.dim(), flow.cols());
  for (Eigen::Index c = 0; c < flow.cols(); ++c) z.col(c) = basis.to_real(flow.col(c));
  return update_from_samples({z}, basis, ms, dt, cfg, default_initial_guess(ms));
}

}  // namespace lagda
