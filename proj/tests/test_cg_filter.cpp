#include "lagda/error.hpp"
#include "lagda/filter.hpp"
#include "lagda/observation.hpp"
#include "lagda/real_basis.hpp"
#include "lagda/simulate.hpp"
#include "lagda/torus.hpp"

#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace lagda;
using namespace lagda::testing;

namespace {

Eigen::VectorXd random_positions(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  Eigen::VectorXd x(2 * count);
  for (int i = 0; i < 2 * count; ++i) x[i] = u(rng);
  return x;
}

TruthRecord pair_truth(const LsmParams& p, const ModeSet& ms, int tracers, double dt, double T,
                       std::uint64_t seed) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.T = T;
  cfg.tracers = tracers;
  cfg.seed = seed;
  return simulate_coupled(p, ms, cfg);
}

}  // namespace

TEST_SUITE("cg_filter") {

TEST_CASE("observation matrix columns") {
  const ModeSet ms = build_gb_modeset(2, MeanFlow::XY);
  const int m = ms.find({0, 1}, ModeKind::GB);
  const ObservationMatrix a = build_observation_matrix(Eigen::Vector2d::Zero(), ms);
  CHECK(std::abs(a.A(0, m) - cdouble(0.0, -1.0)) < 1e-15);
  CHECK(std::abs(a.A(1, m)) < 1e-15);
  const int mx = ms.find({0, 0}, ModeKind::MeanFlowX);
  const int my = ms.find({0, 0}, ModeKind::MeanFlowY);
  CHECK(a.A(0, mx) == cdouble(1.0));
  CHECK(a.A(1, mx) == cdouble(0.0));
  CHECK(a.A(1, my) == cdouble(1.0));

  const Eigen::VectorXd x = random_positions(4, 5);
  const ObservationMatrix b = build_observation_matrix(x, ms);
  CHECK(build_observation_matrix(b.positions, ms).A == b.A);
  // Direct oracle: entry = exp(i k.x) r.
  for (int l = 0; l < 4; ++l) {
    for (std::size_t j = 0; j < ms.size(); ++j) {
      if (ms.mode(j).is_mean_flow()) continue;
      const Wavenumber k = ms.mode(j).k;
      const cdouble g = std::exp(cdouble(0.0, k.x * x[2 * l] + k.y * x[2 * l + 1]));
      const Eigen::Vector2cd r = ms.velocity_eigenvector(j);
      CHECK(std::abs(b.A(2 * l, j) - g * r[0]) < 1e-13);
      CHECK(std::abs(b.A(2 * l + 1, j) - g * r[1]) < 1e-13);
    }
  }
}

TEST_CASE("real observation matrix is A V") {
  const ModeSet ms = build_sw_modeset(2, 1.0);
  const RealBasis basis(ms);
  const RealObservationBuilder obs(ms, basis);
  const Eigen::VectorXd x = random_positions(3, 9);
  const Eigen::MatrixXcd av = build_observation_matrix(x, ms).A * basis.unitary();
  CHECK(av.imag().cwiseAbs().maxCoeff() < 1e-12);
  CHECK((obs.build(x) - av.real()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::MatrixXd sub;
  obs.build_subset(x, {2, 0}, sub);
  CHECK(sub.topRows(2) == obs.build(x).middleRows(4, 2));
  CHECK(sub.bottomRows(2) == obs.build(x).topRows(2));
}

TEST_CASE("interaction matrix diagonal, rank and mean-field decay") {
  const ModeSet ms = build_gb_modeset(2);
  const Eigen::VectorXd x3 = random_positions(3, 1);
  const Eigen::MatrixXcd P = interaction_matrix(x3, ms);
  const ObservationMatrix a = build_observation_matrix(x3, ms);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const double norm2 = ms.velocity_eigenvector(m).squaredNorm();
    CHECK(P(m, m).real() == doctest::Approx(3.0 * norm2));
    CHECK(std::abs(P(m, m).imag()) < 1e-15);
    CHECK((a.A.col(m).squaredNorm()) == doctest::Approx(3.0 * norm2));
  }
  CHECK((P - P.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
  // Direct summation oracle for the off-diagonal entries.
  for (std::size_t m = 0; m < ms.size(); ++m) {
    for (std::size_t n = 0; n < ms.size(); ++n) {
      cdouble sum = 0.0;
      const Wavenumber km = ms.mode(m).k, kn = ms.mode(n).k;
      for (int l = 0; l < 3; ++l) {
        const double ph = (km.x - kn.x) * x3[2 * l] + (km.y - kn.y) * x3[2 * l + 1];
        sum += std::exp(cdouble(0.0, -ph)) *
               ms.velocity_eigenvector(m).dot(ms.velocity_eigenvector(n));
      }
      // A^* A (m, n) = sum_l conj(g_m r_m) . (g_n r_n).
      CHECK(std::abs(P(m, n) - sum) < 1e-12);
    }
  }

  const Eigen::MatrixXcd P1 = interaction_matrix(random_positions(1, 2), ms);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(P1);
  int above = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) above += es.eigenvalues()[i] > 1e-10;
  CHECK(above <= 2);

  const ModeSet nms = normalized(ms);
  const int L = 500;
  const Eigen::MatrixXcd P500 = interaction_matrix(random_positions(L, 3), nms);
  double off = 0.0;
  for (Eigen::Index m = 0; m < P500.rows(); ++m)
    for (Eigen::Index n = 0; n < P500.cols(); ++n)
      if (m != n) off = std::max(off, std::abs(P500(m, n)) / L);
  CHECK(off < 0.2);
}

TEST_CASE("real interaction diagonal matches the complex one") {
  const ModeSet ms = build_gb_modeset(2, MeanFlow::XY);
  const RealBasis basis(ms);
  const RealObservationBuilder obs(ms, basis);
  const Eigen::VectorXd d = obs.interaction_diagonal(7);
  for (const auto& b : basis.blocks()) {
    const double expect = b.mean_flow ? 7.0 : 7.0 * ms.velocity_eigenvector(b.first).squaredNorm();
    for (int j = 0; j < b.size; ++j) CHECK(d[b.offset + j] == doctest::Approx(expect));
  }
}

TEST_CASE("stationary diagonal variance") {
  const double r = stationary_diagonal_variance(0.3, 1.0, 0.25, 25.0);
  CHECK(r == doctest::Approx(1.0 / (0.3 + std::sqrt(0.09 + 400.0))));
  CHECK(r == doctest::Approx(0.049256).epsilon(1e-4));
  // Root of -2 d r + sigma^2 - sigma_x^-2 P r^2 = 0.
  const double d = 0.7, s = 0.4, sx = 0.3, p = 12.0;
  const double v = stationary_diagonal_variance(d, s, sx, p);
  CHECK(std::abs(-2 * d * v + s * s - p * v * v / (sx * sx)) < 1e-13);
  CHECK(stationary_diagonal_variance(d, s, sx, 0.0) == doctest::Approx(s * s / (2 * d)));
}

TEST_CASE("no observations reduce the filter to the prior moment equations") {
  const ModeSet ms = single_pair_modeset();
  const double d = 0.5, omega = 0.8, sigma = 0.6;
  const cdouble f(0.3, -0.4);
  const LsmParams p = uniform_params(ms, d, omega, f, sigma);
  const TruthRecord truth = pair_truth(p, ms, 0, 0.001, 50.0 / d, 1);
  FilterConfig cfg;
  cfg.initial = PosteriorGaussian{Eigen::VectorXcd::Zero(2), Eigen::MatrixXcd::Zero(2, 2), 0.0};
  cfg.jitter = 0.0;
  const FilterSeries fs = run_filter(truth.tracers, p, ms, cfg);
  const Eigen::MatrixXd var = fs.mode_variance();
  const Eigen::MatrixXcd mu = fs.mean_complex();
  const auto n20 = static_cast<Eigen::Index>(std::llround(20.0 / d / 0.001));
  const cdouble mean_eq = f / cdouble(d, -omega);
  CHECK(std::abs(mu(0, n20) - mean_eq) < 1e-3);
  CHECK(std::abs(var(0, n20) - sigma * sigma / (2 * d)) < 1e-3);
  const Eigen::Index last = var.cols() - 1;
  CHECK(std::abs(var(0, last) - sigma * sigma / (2 * d)) < 1e-6);
  CHECK(std::abs(mu(1, last) - std::conj(mean_eq)) < 1e-6);
}

TEST_CASE("full filter matches a discrete Kalman filter for one pair") {
  const ModeSet ms = single_pair_modeset();
  const LsmParams p = uniform_params(ms, 0.4, 0.9, cdouble(0.2, 0.1), 0.8);
  const TruthRecord truth = pair_truth(p, ms, 1, 1e-4, 2.0, 8);
  FilterConfig cfg;
  const FilterSeries fs = run_filter(truth.tracers, p, ms, cfg);
  const PairKalmanOracle kf = pair_kalman_oracle(ms, p, truth.tracers, cfg.sigma_x, false);
  const Eigen::MatrixXcd mu = fs.mean_complex();
  Eigen::VectorXcd a(mu.cols()), b(mu.cols());
  for (Eigen::Index n = 0; n < mu.cols(); ++n) {
    a[n] = mu(0, n);
    b[n] = kf.filtered[n];
  }
  CHECK(rel_rms(a, b) < 1e-3);
}

TEST_CASE("complex reference step agrees with the real-coordinate filter") {
  const ModeSet ms = build_gb_modeset(1, MeanFlow::XY);
  LsmParams p = spectrum_params(build_gb_modeset(1), SpectrumModel{});
  LsmParams q = default_initial_guess(ms);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (ms.mode(m).is_mean_flow()) continue;
    q.modes[m] = p.modes[build_gb_modeset(1).find(ms.mode(m).k, ModeKind::GB)];
  }
  q.mean_flow.damping = {0.4, 0.6};
  q.mean_flow.forcing = {0.1, 0.0};
  const TruthRecord truth = pair_truth(q, ms, 4, 0.002, 1.0, 2);
  FilterConfig cfg;
  cfg.jitter = 0.0;
  const FilterSeries fs = run_filter(truth.tracers, q, ms, cfg);
  PosteriorGaussian post = prior_posterior(q, ms);
  for (std::size_t n = 0; n < truth.tracers.steps(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    const Eigen::MatrixXcd A = build_observation_matrix(truth.tracers.positions.col(col), ms).A;
    post = step_full_filter(post, truth.tracers.increments.col(col), A, q, ms, cfg.sigma_x, 0.002, 0.0);
  }
  const Eigen::VectorXcd mu_real = fs.basis.to_complex(fs.mean.col(fs.mean.cols() - 1));
  CHECK((post.mu - mu_real).norm() < 1e-10);
  CHECK((post.R - fs.basis.covariance_to_complex(fs.terminal_cov)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("full filter covariance stays hermitian and PSD; means keep conjugate symmetry") {
  const ModeSet ms = build_gb_modeset(2);
  const LsmParams p = spectrum_params(ms, SpectrumModel{});
  const TruthRecord truth = pair_truth(p, ms, 10, 0.002, 4.0, 6);
  for (FilterVariant v : {FilterVariant::Full, FilterVariant::DiagRiccati, FilterVariant::DiagConstant,
                          FilterVariant::Randomized}) {
    FilterConfig cfg;
    cfg.variant = v;
    cfg.L_prime = 4;
    const FilterSeries fs = run_filter(truth.tracers, p, ms, cfg);
    const Eigen::MatrixXcd mu = fs.mean_complex();
    double defect = 0.0;
    for (Eigen::Index n = 0; n < mu.cols(); ++n) defect = std::max(defect, conjugate_symmetry_defect(mu.col(n), ms));
    CHECK(defect < 1e-10);
    CHECK(fs.variance.minCoeff() > 0.0);
    if (v == FilterVariant::Full) {
      for (const auto& R : fs.checkpoints) {
        CHECK((R - R.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
      }
      const Eigen::MatrixXcd Rc = fs.basis.covariance_to_complex(fs.terminal_cov);
      CHECK((Rc - Rc.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("covariance clamp engages on an indefinite start") {
  const ModeSet ms = single_pair_modeset();
  const LsmParams p = uniform_params(ms, 0.5, 0.0, 0.0, 0.5);
  const TruthRecord truth = pair_truth(p, ms, 1, 0.01, 0.05, 1);
  FilterConfig cfg;
  Eigen::MatrixXcd R0 = Eigen::MatrixXcd::Zero(2, 2);
  R0(0, 1) = 1.0;
  R0(1, 0) = 1.0;
  cfg.initial = PosteriorGaussian{Eigen::VectorXcd::Zero(2), R0, 0.0};
  const FilterSeries fs = run_filter(truth.tracers, p, ms, cfg);
  CHECK(fs.clamp_count > 0);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fs.terminal_cov);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("randomized selection with all tracers equals the constant diagonal filter") {
  const ModeSet ms = build_gb_modeset(2);
  const LsmParams p = spectrum_params(ms, SpectrumModel{});
  const TruthRecord truth = pair_truth(p, ms, 8, 0.002, 4.0, 3);
  FilterConfig a;
  a.variant = FilterVariant::DiagConstant;
  FilterConfig b;
  b.variant = FilterVariant::Randomized;
  b.L_prime = 8;
  b.rescale = true;
  const FilterSeries fa = run_filter(truth.tracers, p, ms, a);
  const FilterSeries fb = run_filter(truth.tracers, p, ms, b);
  CHECK((fa.mean - fb.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((fa.variance - fb.variance).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant diagonal variance equals the stationary formula per mode") {
  const ModeSet ms = build_gb_modeset(2);
  const LsmParams p = spectrum_params(ms, SpectrumModel{});
  const TruthRecord truth = pair_truth(p, ms, 25, 0.002, 0.1, 3);
  FilterConfig cfg;
  cfg.variant = FilterVariant::DiagConstant;
  const FilterSeries fs = run_filter(truth.tracers, p, ms, cfg);
  const Eigen::MatrixXd var = fs.mode_variance();
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const double P = 25.0 * ms.velocity_eigenvector(m).squaredNorm();
    const double expect = stationary_diagonal_variance(p.modes[m].d, p.modes[m].sigma, 0.25, P);
    CHECK(var(m, var.cols() - 1) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("one pair: full and diagonal Riccati filters agree") {
  const ModeSet ms = single_pair_modeset();
  const LsmParams p = uniform_params(ms, 0.3, 0.5, 0.0, 0.7);
  // The pair couples to its partner through sum_l exp(2 i k.x_l), which only
  // vanishes on average; enough tracers keep it small.
  const TruthRecord truth = pair_truth(p, ms, 50, 0.002, 40.0, 4);
  FilterConfig full;
  FilterConfig diag;
  diag.variant = FilterVariant::DiagRiccati;
  const FilterSeries a = run_filter(truth.tracers, p, ms, full);
  const FilterSeries b = run_filter(truth.tracers, p, ms, diag);
  CHECK(rel_rms(b.mean_complex(), a.mean_complex()) < 0.02);
}

TEST_CASE("filter recovers the flow with many tracers") {
  const ModeSet ms = build_gb_modeset(3);
  const LsmParams p = spectrum_params(ms, SpectrumModel{});
  const TruthRecord truth = pair_truth(p, ms, 60, 0.002, 20.0, 12);
  const FilterSeries fs = run_filter(truth.tracers, p, ms, FilterConfig{});
  const Eigen::MatrixXcd mu = fs.mean_complex();
  const Eigen::Index half = mu.cols() / 2;
  double rmse = 0.0, corr = 0.0;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const Eigen::VectorXcd e = mu.row(m).segment(half, mu.cols() - half).transpose();
    const Eigen::VectorXcd t = truth.flow.row(m).segment(half, mu.cols() - half).transpose();
    Eigen::VectorXd es(2 * e.size()), ts(2 * t.size());
    es << e.real(), e.imag();
    ts << t.real(), t.imag();
    const double sd = std::sqrt((ts.array() - ts.mean()).square().mean());
    rmse += std::sqrt((es - ts).squaredNorm() / es.size()) / sd;
    const Eigen::ArrayXd ec = es.array() - es.mean(), tc = ts.array() - ts.mean();
    corr += (ec * tc).sum() / std::sqrt(ec.square().sum() * tc.square().sum());
  }
  rmse /= ms.size();
  corr /= ms.size();
  CHECK(rmse < 0.4);
  CHECK(corr > 0.9);
}

TEST_CASE("filter config validation") {
  FilterConfig cfg;
  cfg.variant = FilterVariant::Randomized;
  cfg.L_prime = 0;
  CHECK_THROWS_AS(cfg.validate(5), InvalidArgument);
  cfg.L_prime = 6;
  CHECK_THROWS_AS(cfg.validate(5), InvalidArgument);
  cfg.L_prime = 5;
  CHECK_NOTHROW(cfg.validate(5));
  cfg.jitter = -1.0;
  CHECK_THROWS_AS(cfg.validate(5), InvalidArgument);
  CHECK(filter_variant_from_string(to_string(FilterVariant::DiagRiccati)) == FilterVariant::DiagRiccati);
  CHECK_THROWS(filter_variant_from_string("kalman"));
}

}
