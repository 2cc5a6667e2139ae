#include "lagda/error.hpp"
#include "lagda/filter.hpp"
#include "lagda/metrics.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <random>

using namespace lagda;
using namespace lagda::testing;

namespace {

double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& R) {
  const Eigen::LLT<Eigen::MatrixXd> llt(R);
  const Eigen::VectorXd w = llt.matrixL().solve(x - mu);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * x.size() * std::log(2.0 * M_PI);
}

// E_p[log p - log q] by tensor Gauss-Hermite quadrature (3 nodes per axis,
// exact for the quadratic integrand).
double kl_quadrature(const Eigen::VectorXd& mu, const Eigen::MatrixXd& R, const Eigen::VectorXd& mu_q,
                     const Eigen::MatrixXd& R_q) {
  const double nodes[3] = {-std::sqrt(1.5), 0.0, std::sqrt(1.5)};
  const double weights[3] = {std::sqrt(M_PI) / 6.0, 2.0 * std::sqrt(M_PI) / 3.0, std::sqrt(M_PI) / 6.0};
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(R).matrixL();
  double sum = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        const Eigen::Vector3d t(nodes[a], nodes[b], nodes[c]);
        const Eigen::VectorXd x = mu + std::sqrt(2.0) * L * t;
        sum += weights[a] * weights[b] * weights[c] * (log_gauss(x, mu, R) - log_gauss(x, mu_q, R_q));
      }
  return sum / std::pow(M_PI, 1.5);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("rmse and correlation examples") {
  Eigen::VectorXd t(6);
  t << 1.0, -2.0, 0.5, 3.0, -1.5, -1.0;
  RmseCorr same = rmse_corr(t, t);
  CHECK(same.rmse == 0.0);
  CHECK(same.corr == doctest::Approx(1.0));
  RmseCorr neg = rmse_corr(Eigen::VectorXd(-t), t);
  CHECK(neg.corr == doctest::Approx(-1.0));
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(6, t.mean());
  CHECK(rmse_corr(flat, t).rmse == doctest::Approx(1.0));
  CHECK_THROWS_AS(rmse_corr(t, Eigen::VectorXd::Constant(6, 2.0)), InvalidArgument);
  CHECK_THROWS_AS(rmse_corr(Eigen::VectorXd(t.head(3)), t), InvalidArgument);
}

TEST_CASE("rmse and correlation invariances") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Eigen::VectorXd t(50), e(50);
  for (int i = 0; i < 50; ++i) {
    t[i] = nd(rng);
    e[i] = t[i] + 0.3 * nd(rng);
  }
  const RmseCorr base = rmse_corr(e, t);
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(50, 4.2);
  CHECK(rmse_corr(Eigen::VectorXd(e + shift), Eigen::VectorXd(t + shift)).corr == doctest::Approx(base.corr));
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(50);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 50, rng);
  const RmseCorr permuted = rmse_corr(Eigen::VectorXd(perm * e), Eigen::VectorXd(perm * t));
  CHECK(permuted.rmse == doctest::Approx(base.rmse));
  CHECK(permuted.corr == doctest::Approx(base.corr));
  // Oracle for the definitions.
  const double sd = std::sqrt((t.array() - t.mean()).square().mean());
  CHECK(base.rmse == doctest::Approx(std::sqrt((e - t).squaredNorm() / 50.0) / sd));
  const Eigen::ArrayXd ec = e.array() - e.mean(), tc = t.array() - t.mean();
  CHECK(base.corr == doctest::Approx((ec * tc).sum() / std::sqrt(ec.square().sum() * tc.square().sum())));
}

TEST_CASE("complex series stack real and imaginary parts") {
  Eigen::VectorXcd t(4), e(4);
  t << cdouble(1, 2), cdouble(-1, 0), cdouble(0.5, -1), cdouble(2, 1);
  e << cdouble(1, 1.5), cdouble(-0.5, 0), cdouble(0.5, -0.5), cdouble(1.5, 1);
  Eigen::VectorXd ts(8), es(8);
  ts << t.real(), t.imag();
  es << e.real(), e.imag();
  const RmseCorr a = rmse_corr(e, t), b = rmse_corr(es, ts);
  CHECK(a.rmse == doctest::Approx(b.rmse));
  CHECK(a.corr == doctest::Approx(b.corr));
  Eigen::MatrixXcd tm(2, 4), em(2, 4);
  tm.row(0) = t.transpose();
  tm.row(1) = (2.0 * t).transpose();
  em.row(0) = e.transpose();
  em.row(1) = (2.0 * e).transpose();
  const auto per = per_mode_rmse_corr(em, tm, 1, 4);
  CHECK(per.size() == 2);
  const RmseCorr tail = rmse_corr(Eigen::VectorXcd(e.tail(3)), Eigen::VectorXcd(t.tail(3)));
  CHECK(per[0].rmse == doctest::Approx(tail.rmse));
  CHECK(per[1].corr == doctest::Approx(tail.corr));
}

TEST_CASE("relative entropy examples") {
  Eigen::VectorXd mu(1), mu_eq(1);
  Eigen::MatrixXd R(1, 1), R_eq(1, 1);
  mu << 1.0;
  mu_eq << 0.0;
  R << 1.0;
  R_eq << 1.0;
  RelativeEntropy a = gaussian_relative_entropy(mu, R, mu_eq, R_eq);
  CHECK(a.signal == doctest::Approx(0.5));
  CHECK(a.dispersion == doctest::Approx(0.0));
  RelativeEntropy z = gaussian_relative_entropy(mu_eq, R_eq, mu_eq, R_eq);
  CHECK(z.signal == 0.0);
  CHECK(std::abs(z.dispersion) < 1e-15);
  Eigen::MatrixXd sing = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(gaussian_relative_entropy(mu, R, mu_eq, sing), InvalidArgument);
  Eigen::MatrixXd neg(1, 1);
  neg << -1.0;
  CHECK_THROWS_AS(gaussian_relative_entropy(mu, neg, mu_eq, R_eq), InvalidArgument);
}

TEST_CASE("relative entropy matches quadrature, is nonnegative and linearly invariant") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::MatrixXd R = random_spd(3, rng), R_eq = random_spd(3, rng);
    Eigen::VectorXd mu(3), mu_eq(3);
    for (int i = 0; i < 3; ++i) {
      mu[i] = nd(rng);
      mu_eq[i] = nd(rng);
    }
    const RelativeEntropy re = gaussian_relative_entropy(mu, R, mu_eq, R_eq);
    CHECK(re.signal >= 0.0);
    CHECK(re.dispersion >= 0.0);
    CHECK(re.signal + re.dispersion == doctest::Approx(kl_quadrature(mu, R, mu_eq, R_eq)).epsilon(1e-6));

    Eigen::Matrix3d T;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) T(i, j) = nd(rng) + (i == j ? 3.0 : 0.0);
    const Eigen::VectorXd tm = T * mu, tm_eq = T * mu_eq;
    const Eigen::MatrixXd tR = T * R * T.transpose(), tR_eq = T * R_eq * T.transpose();
    const RelativeEntropy mapped = gaussian_relative_entropy(tm, tR, tm_eq, tR_eq);
    CHECK(std::abs(mapped.signal - re.signal) < 1e-10);
    CHECK(std::abs(mapped.dispersion - re.dispersion) < 1e-10);
  }
}

TEST_CASE("complex relative entropy of a conjugate pair agrees with real coordinates") {
  const ModeSet ms = single_pair_modeset();
  const RealBasis basis(ms);
  Eigen::VectorXcd mu(2), mu_eq(2);
  mu << cdouble(0.3, -0.2), cdouble(0.3, 0.2);
  mu_eq << cdouble(0.1, 0.0), cdouble(0.1, 0.0);
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Identity(2, 2) * 0.4;
  R(0, 1) = cdouble(0.1, 0.05);
  R(1, 0) = std::conj(R(0, 1));
  const Eigen::MatrixXcd R_eq = Eigen::MatrixXcd::Identity(2, 2) * 0.9;
  const RelativeEntropy c = gaussian_relative_entropy(mu, R, mu_eq, R_eq);
  const RelativeEntropy r = gaussian_relative_entropy(basis.to_real(mu), basis.covariance_to_real(R),
                                                      basis.to_real(mu_eq), basis.covariance_to_real(R_eq));
  CHECK(c.signal == doctest::Approx(r.signal));
  CHECK(c.dispersion == doctest::Approx(r.dispersion));
}

TEST_CASE("relative error") {
  Eigen::VectorXd ref(3);
  ref << 1.0, -2.0, 0.5;
  CHECK(relative_error(ref, ref) == 0.0);
  CHECK(relative_error(Eigen::VectorXd(2.0 * ref), ref) == doctest::Approx(1.0));
  CHECK(relative_error(Eigen::VectorXd::Zero(3), ref) == doctest::Approx(1.0));
  CHECK_THROWS_AS(relative_error(ref, Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST_CASE("equilibrium prior") {
  const ModeSet ms = single_pair_modeset();
  const PosteriorGaussian a = equilibrium_prior(uniform_params(ms, 0.3, 0.0, 0.0, 1.0), ms);
  CHECK(a.mu.norm() == 0.0);
  CHECK(a.R(0, 0).real() == doctest::Approx(1.0 / 0.6));
  CHECK(std::abs(a.R(0, 1)) < 1e-15);
  const LsmParams p = uniform_params(ms, 1.0, 1.0, 1.0, 1.0);
  const PosteriorGaussian b = equilibrium_prior(p, ms);
  CHECK(std::abs(b.mu[0] - cdouble(0.5, 0.5)) < 1e-14);
  CHECK(0.5 * (std::norm(b.mu[0]) + b.R(0, 0).real()) == doctest::Approx(mode_energy(p.modes[0])));

  // Mean-flow block: stationary Lyapunov solution of the 2-D SDE.
  const ModeSet mf = build_gb_modeset(1, MeanFlow::XY);
  LsmParams q = spectrum_params(mf, SpectrumModel{});
  q.mean_flow.damping = {0.5, 0.8};
  q.mean_flow.rotation = {0.3, -0.3};
  q.mean_flow.forcing = {0.2, 0.1};
  q.mean_flow.noise = Eigen::Vector2d(0.4, 0.6).asDiagonal();
  const PosteriorGaussian c = equilibrium_prior(q, mf);
  const int ix = mf.find({0, 0}, ModeKind::MeanFlowX), iy = mf.find({0, 0}, ModeKind::MeanFlowY);
  Eigen::Matrix2d drift;
  drift << -0.5, 0.3, -0.3, -0.8;
  Eigen::Matrix2d S;
  S << c.R(ix, ix).real(), c.R(ix, iy).real(), c.R(iy, ix).real(), c.R(iy, iy).real();
  const Eigen::Matrix2d Q = Eigen::Vector2d(0.16, 0.36).asDiagonal();
  CHECK((drift * S + S * drift.transpose() + Q).norm() < 1e-12);
  const Eigen::Vector2d m = -drift.inverse() * Eigen::Vector2d(0.2, 0.1);
  CHECK(std::abs(c.mu[ix] - m[0]) < 1e-12);
  CHECK(std::abs(c.mu[iy] - m[1]) < 1e-12);

  LsmParams bad = uniform_params(ms, 1.0, 0.0, 0.0, 1.0);
  bad.modes[0].d = bad.modes[1].d = 0.0;
  CHECK_THROWS_AS(equilibrium_prior(bad, ms), InvalidArgument);
}

TEST_CASE("filter dispersion series and skill report") {
  const ModeSet ms = build_gb_modeset(1);
  const LsmParams p = spectrum_params(ms, SpectrumModel{});
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.T = 10.0;
  cfg.tracers = 5;
  cfg.seed = 2;
  const TruthRecord truth = simulate_coupled(p, ms, cfg);
  const FilterSeries fs = run_filter(truth.tracers, p, ms, FilterConfig{});
  // Per-step dispersion equals the closed form at a checkpoint.
  const PosteriorGaussian eq = equilibrium_prior(p, ms);
  const Eigen::MatrixXcd Rc = fs.basis.covariance_to_complex(fs.terminal_cov);
  const Eigen::VectorXcd mu = fs.basis.to_complex(fs.mean.col(fs.mean.cols() - 1));
  const RelativeEntropy last = gaussian_relative_entropy(mu, Rc, eq.mu, eq.R);
  CHECK(fs.dispersion[fs.dispersion.size() - 1] == doctest::Approx(last.dispersion).epsilon(1e-9));
  CHECK(fs.dispersion.minCoeff() > -1e-12);  // roundoff at the prior

  const SkillReport rep = skill_report(fs, truth.flow, p, ms);
  const auto per = per_mode_rmse_corr(fs.mean_complex(), truth.flow, 500, 1001);
  double r = 0.0;
  for (const auto& s : per) r += s.rmse;
  CHECK(rep.rmse == doctest::Approx(r / per.size()));
  CHECK(rep.signal >= 0.0);
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["rmse"].get<double>() == doctest::Approx(rep.rmse));
  CHECK(j["per_mode"].size() == ms.size());
  const RelativeEntropy avg = time_averaged_information(fs, p, ms, 0.5);
  CHECK(avg.dispersion == doctest::Approx(fs.dispersion.tail(501).mean()));
  CHECK(avg.signal == doctest::Approx(rep.signal));
}

TEST_CASE("excess kurtosis") {
  Eigen::VectorXd x(4);
  x << -1.0, -1.0, 1.0, 1.0;
  CHECK(excess_kurtosis(x) == doctest::Approx(-2.0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd g(200000);
  for (auto& v : g) v = nd(rng);
  CHECK(std::abs(excess_kurtosis(g)) < 0.05);
  CHECK_THROWS_AS(excess_kurtosis(Eigen::VectorXd::Zero(3)), InvalidArgument);
}

}
