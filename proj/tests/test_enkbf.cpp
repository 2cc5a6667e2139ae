#include "lagda/enkbf.hpp"
#include "lagda/error.hpp"
#include "lagda/filter.hpp"
#include "lagda/real_basis.hpp"
#include "lagda/rng.hpp"
#include "lagda/topographic.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace lagda;
using namespace lagda::testing;

namespace {

TruthRecord pair_truth(const LsmParams& p, const ModeSet& ms, int tracers, double dt, double T,
                       std::uint64_t seed) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.T = T;
  cfg.tracers = tracers;
  cfg.seed = seed;
  return simulate_coupled(p, ms, cfg);
}

Ensemble stationary_ensemble(const LsmParams& p, const ModeSet& ms, int members, std::uint64_t seed) {
  const RealLinearModel model(RealBasis(ms), ms, p);
  const auto [mean, cov] = model.stationary_moments();
  return initial_ensemble(mean, Eigen::LLT<Eigen::MatrixXd>(cov).matrixL(), members, seed);
}

}  // namespace

TEST_SUITE("enkbf") {

TEST_CASE("identical noiseless members follow the drift") {
  const TopoModelParams tp = regime_params(Regime::I, 3);
  const TopoDynamics dyn(tp);
  EnsembleModel model = topographic_ensemble_model(dyn);
  model.noise_factor.setZero();
  Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(dyn.dim(), -0.3, 0.4);
  Ensemble ens;
  ens.members = s.replicate(1, 2);
  std::vector<NormalStream> noise;
  noise.emplace_back(1, Stream::Ensemble, 0);
  noise.emplace_back(1, Stream::Ensemble, 1);
  EnkbfConfig cfg;
  cfg.collapse_check = false;
  const Eigen::VectorXd positions = Eigen::Vector4d(0.5, 1.0, 2.0, 3.0);
  const Eigen::VectorXd dX = Eigen::Vector4d(0.01, -0.02, 0.03, 0.0);
  const Ensemble next = enkbf_step(ens, dX, positions, model, 0.25, 0.01, noise, cfg);
  const Eigen::VectorXd expect = dyn.rk4_step(s, 0.01);
  CHECK((next.members.col(0) - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(next.members.col(0) == next.members.col(1));

  cfg.collapse_check = true;
  CHECK_THROWS_AS(enkbf_step(ens, dX, positions, model, 0.25, 0.01, noise, cfg), NumericalError);
}

TEST_CASE("ensemble observation operator is the model velocity") {
  const TopoModelParams tp = regime_params(Regime::II, 4);
  const TopoDynamics dyn(tp);
  const EnsembleModel model = topographic_ensemble_model(dyn);
  const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(dyn.dim(), 0.2, -0.5);
  const Eigen::VectorXd x = Eigen::Vector4d(0.1, 0.2, 4.0, 5.0);
  CHECK((model.observe(s, x) - dyn.velocity(s, x)).norm() == 0.0);
  // Independent evaluation: u = s0, v = d psi / dx.
  const Eigen::VectorXd vel = model.observe(s, x);
  for (int l = 0; l < 2; ++l) {
    double v = 0.0;
    for (int k = 1; k <= 4; ++k) {
      const cdouble psi(s[2 * k - 1], s[2 * k]);
      v += 2.0 * (cdouble(0.0, k) * psi * std::exp(cdouble(0.0, k * x[2 * l]))).real();
    }
    CHECK(vel[2 * l] == doctest::Approx(s[0]));
    CHECK(vel[2 * l + 1] == doctest::Approx(v));
  }
}

TEST_CASE("reduced drift truncations") {
  const TopoModelParams tp = regime_params(Regime::I, 6);
  const TopoDynamics red = reduced_drift(tp, 2);
  CHECK(red.dim() == 5);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(5);
  s[0] = 0.7;
  CHECK(red.drift(s)[0] == doctest::Approx(-tp.damping_u * 0.7));
  // The kept equations equal the full ones when the dropped modes are zero.
  const TopoDynamics full(tp);
  Eigen::VectorXd sf = Eigen::VectorXd::Zero(full.dim());
  sf.head(5) << 0.3, 0.1, -0.2, 0.05, 0.4;
  s = sf.head(5);
  CHECK((red.drift(s) - full.drift(sf).head(5)).norm() < 1e-15);
}

TEST_CASE("large ensemble tracks the conditional Gaussian filter") {
  const ModeSet ms = single_pair_modeset();
  const LsmParams p = uniform_params(ms, 0.5, 0.8, cdouble(0.1, 0.0), 0.9);
  const TruthRecord truth = pair_truth(p, ms, 2, 0.005, 5.0, 3);
  const FilterSeries fs = run_filter(truth.tracers, p, ms, FilterConfig{});
  EnkbfConfig cfg;
  const EnkbfSeries es = run_enkbf(truth.tracers, lsm_ensemble_model(p, ms), stationary_ensemble(p, ms, 2000, 4), cfg);
  CHECK(rel_rms(es.mean.cast<cdouble>(), fs.mean.cast<cdouble>()) < 0.1);
  // Ensemble spread follows the filter variance.
  const Eigen::Index last = fs.variance.cols() - 1;
  CHECK(es.variance.col(last).sum() == doctest::Approx(fs.variance.col(last).sum()).epsilon(0.2));
}

TEST_CASE("uninformative observations keep the free model climate") {
  const ModeSet ms = single_pair_modeset();
  const LsmParams p = uniform_params(ms, 0.5, 0.3, 0.0, 1.0);
  const TruthRecord truth = pair_truth(p, ms, 1, 0.01, 10.0, 5);
  EnkbfConfig cfg;
  cfg.sigma_x = 1e6;
  const int ne = 2000;
  const EnkbfSeries es = run_enkbf(truth.tracers, lsm_ensemble_model(p, ms), stationary_ensemble(p, ms, ne, 6), cfg);
  // z = sqrt(2) (Re U, Im U), so each coordinate carries sigma^2 / (2 d).
  const double climate = 1.0 / (2.0 * 0.5);
  const Eigen::Index last = es.variance.cols() - 1;
  for (int i = 0; i < 2; ++i) {
    CHECK(es.variance(i, last) == doctest::Approx(climate).epsilon(4.0 * std::sqrt(2.0 / ne)));
    CHECK(std::abs(es.mean(i, last)) < 4.0 * std::sqrt(climate / ne));
  }
}

TEST_CASE("seeded runs are bit identical") {
  const ModeSet ms = build_gb_modeset(1);
  const LsmParams p = spectrum_params(ms, SpectrumModel{});
  const TruthRecord truth = pair_truth(p, ms, 3, 0.01, 1.0, 7);
  const EnsembleModel model = lsm_ensemble_model(p, ms);
  const EnkbfSeries a = run_enkbf(truth.tracers, model, stationary_ensemble(p, ms, 50, 1), EnkbfConfig{});
  const EnkbfSeries b = run_enkbf(truth.tracers, model, stationary_ensemble(p, ms, 50, 1), EnkbfConfig{});
  CHECK(a.mean == b.mean);
  CHECK(a.variance == b.variance);
  // Members keep conjugate symmetry in complex form.
  const RealBasis basis(ms);
  CHECK(conjugate_symmetry_defect(basis.to_complex(a.mean.col(a.mean.cols() - 1)), ms) < 1e-12);
}

TEST_CASE("input validation") {
  const ModeSet ms = single_pair_modeset();
  const LsmParams p = uniform_params(ms, 0.5, 0.0, 0.0, 1.0);
  const EnsembleModel model = lsm_ensemble_model(p, ms);
  Ensemble one;
  one.members = Eigen::MatrixXd::Zero(2, 1);
  std::vector<NormalStream> noise;
  noise.emplace_back(1, Stream::Ensemble, 0);
  CHECK_THROWS_AS(enkbf_step(one, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), model, 0.25, 0.01, noise,
                             EnkbfConfig{}),
                  InvalidArgument);
}

}
