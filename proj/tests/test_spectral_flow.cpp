#include "lagda/error.hpp"
#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace lagda;

TEST_SUITE("spectral_flow") {

TEST_CASE("gb mode counts exclude the zero wavenumber") {
  CHECK(build_gb_modeset(5).size() == 120);
  CHECK(build_gb_modeset(3).size() == 48);
  CHECK(build_gb_modeset(3, MeanFlow::XY).size() == 50);
  CHECK(build_sw_modeset(3, 1.0).size() == 146);
}

TEST_CASE("gb eigenvector for k = (0, 1)") {
  const ModeSet ms = build_gb_modeset(1);
  const int m = ms.find({0, 1}, ModeKind::GB);
  REQUIRE(m >= 0);
  const Eigen::Vector2cd r = ms.velocity_eigenvector(m);
  CHECK(std::abs(r[0] - cdouble(0.0, -1.0)) < 1e-15);
  CHECK(std::abs(r[1]) < 1e-15);
}

TEST_CASE("gb eigenvectors are divergence free and conjugate paired") {
  const ModeSet ms = build_gb_modeset(4);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto k = ms.mode(m).k;
    const Eigen::Vector2cd r = ms.velocity_eigenvector(m);
    CHECK(std::abs(static_cast<double>(k.x) * r[0] + static_cast<double>(k.y) * r[1]) < 1e-15);
    const int p = ms.conj_pair(m);
    CHECK(ms.mode(p).k == -k);
    CHECK((ms.eigenvector(p) - ms.eigenvector(m).conjugate()).norm() < 1e-15);
    CHECK(ms.conj_pair(p) == static_cast<int>(m));
  }
}

TEST_CASE("shallow water frequencies and eigenvectors") {
  CHECK(gravity_frequency({1, 0}, 1.0, true) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(gravity_frequency({1, 0}, 1.0, false) == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-15));
  const ModeSet ms = build_sw_modeset(3, 1.0);
  const int m0 = ms.find({0, 0}, ModeKind::GravityPlus);
  REQUIRE(m0 >= 0);
  const Eigen::Vector3cd expect = Eigen::Vector3cd(cdouble(0, 1), 1.0, 0.0) / std::sqrt(2.0);
  CHECK((ms.eigenvector(m0) - expect).norm() < 1e-14);
  CHECK(ms.find({0, 0}, ModeKind::GB) < 0);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    CHECK(std::abs(ms.eigenvector(m).norm() - 1.0) < 1e-12);
    const int p = ms.conj_pair(m);
    CHECK((ms.eigenvector(p) - ms.eigenvector(m).conjugate()).norm() < 1e-12);
    if (ms.mode(m).kind == ModeKind::GravityPlus) CHECK(ms.mode(p).kind == ModeKind::GravityMinus);
  }
  // Eigenvectors of one wavenumber are mutually orthogonal.
  const int b = ms.find({1, 2}, ModeKind::GB);
  const int gp = ms.find({1, 2}, ModeKind::GravityPlus);
  const int gm = ms.find({1, 2}, ModeKind::GravityMinus);
  CHECK(std::abs(ms.eigenvector(b).dot(ms.eigenvector(gp))) < 1e-12);
  CHECK(std::abs(ms.eigenvector(b).dot(ms.eigenvector(gm))) < 1e-12);
  CHECK(std::abs(ms.eigenvector(gp).dot(ms.eigenvector(gm))) < 1e-12);
}

TEST_CASE("energy spectrum branches") {
  CHECK(energy_spectrum(1.0, 1.0, 2.0, 3.0) == doctest::Approx(1.0));
  CHECK(energy_spectrum(4.0, 1.0, 2.0, 3.0) == doctest::Approx(0.25));
  CHECK(energy_spectrum(2.0, 1.0, 2.0, 3.0) == doctest::Approx(2.0));
  CHECK(energy_spectrum(2.0 + 1e-12, 1.0, 2.0, 3.0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK_THROWS_AS(energy_spectrum(0.0, 1.0, 2.0, 3.0), InvalidArgument);
}

TEST_CASE("sigma from energy") {
  CHECK(sigma_from_energy(1.0, 0.3, 0.0) == doctest::Approx(std::sqrt(1.2)).epsilon(1e-14));
  const double s = sigma_from_energy(0.7, 0.45, 0.0);
  CHECK(0.5 * s * s / (2 * 0.45) == doctest::Approx(0.7).epsilon(1e-14));
  // d = 0.3 + 0.05 |k|^2 at k = (1, 0) with E = 1.
  CHECK(sigma_from_energy(1.0, 0.35, 0.0) == doctest::Approx(std::sqrt(1.4)).epsilon(1e-14));
  const LsmParams p = spectrum_params(build_gb_modeset(3), SpectrumModel{});
  const ModeSet ms = build_gb_modeset(3);
  const int m = ms.find({1, 0}, ModeKind::GB);
  CHECK(p.modes[m].d == doctest::Approx(0.35));
  CHECK(p.modes[m].sigma == doctest::Approx(std::sqrt(1.4)).epsilon(1e-14));
  CHECK_THROWS_AS(sigma_from_energy(0.1, 1.0, 1.0), InvalidArgument);
}

TEST_CASE("velocity evaluation") {
  const ModeSet ms = build_gb_modeset(2);
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(ms.size());
  CHECK(eval_velocity(zero, ms, {1.0, 2.0}).norm() == 0.0);

  const cdouble c(0.3, -0.7);
  Eigen::VectorXcd u = zero;
  const int m = ms.find({0, 1}, ModeKind::GB);
  u[m] = c;
  u[ms.conj_pair(m)] = std::conj(c);
  const Eigen::Vector2d v = eval_velocity(u, ms, {0.0, 0.0});
  const Eigen::Vector2cd r = ms.velocity_eigenvector(m);
  CHECK(v[0] == doctest::Approx(2.0 * (c * r[0]).real()));
  CHECK(v[1] == doctest::Approx(2.0 * (c * r[1]).real()));

  // Random symmetric coefficients: the brute-force complex sum is real on a grid.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::VectorXcd w(ms.size());
  for (std::size_t j = 0; j < ms.size(); ++j) {
    if (ms.conj_pair(j) > static_cast<int>(j)) {
      w[j] = {nd(rng), nd(rng)};
      w[ms.conj_pair(j)] = std::conj(w[j]);
    }
  }
  double max_imag = 0.0;
  for (int ix = 0; ix < 32; ++ix) {
    for (int iy = 0; iy < 32; ++iy) {
      const double x = 2 * M_PI * ix / 32, y = 2 * M_PI * iy / 32;
      Eigen::Vector2cd sum = Eigen::Vector2cd::Zero();
      for (std::size_t j = 0; j < ms.size(); ++j) {
        sum += w[j] * std::exp(cdouble(0, ms.mode(j).k.x * x + ms.mode(j).k.y * y)) * ms.velocity_eigenvector(j);
      }
      max_imag = std::max(max_imag, sum.imag().cwiseAbs().maxCoeff());
      const Eigen::Vector2d lib = eval_velocity(w, ms, {x, y});
      CHECK((lib - sum.real()).norm() < 1e-12);
    }
  }
  CHECK(max_imag < 1e-10);

  // Linearity.
  const Eigen::Vector2d x{0.4, 5.1};
  const Eigen::Vector2d lhs = eval_velocity(2.0 * w - 0.5 * u, ms, x);
  const Eigen::Vector2d rhs = 2.0 * eval_velocity(w, ms, x) - 0.5 * eval_velocity(u, ms, x);
  CHECK((lhs - rhs).norm() < 1e-13);

  // Broken symmetry is rejected.
  Eigen::VectorXcd bad = zero;
  bad[m] = c;
  CHECK_THROWS_AS(eval_velocity(bad, ms, {0.3, 0.2}), InvalidArgument);
}

TEST_CASE("gb fields are divergence free on a grid") {
  const ModeSet ms = build_gb_modeset(3);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  Eigen::VectorXcd w(ms.size());
  for (std::size_t j = 0; j < ms.size(); ++j) {
    if (ms.conj_pair(j) > static_cast<int>(j)) {
      w[j] = {nd(rng), nd(rng)};
      w[ms.conj_pair(j)] = std::conj(w[j]);
    }
  }
  const int n = 64;
  const double h = 2 * M_PI / n;
  const auto [u, v] = eval_velocity_grid(w, ms, n);
  const double scale = std::max(u.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff());
  REQUIRE(scale > 0.0);
  // Spectrally differentiated divergence sampled on the grid.
  double div_max = 0.0;
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      cdouble acc = 0.0;
      for (std::size_t j = 0; j < ms.size(); ++j) {
        const auto k = ms.mode(j).k;
        const Eigen::Vector2cd r = ms.velocity_eigenvector(j);
        acc += cdouble(0, 1) * (double(k.x) * r[0] + double(k.y) * r[1]) * w[j] *
               std::exp(cdouble(0, k.x * ix * h + k.y * iy * h));
      }
      div_max = std::max(div_max, std::abs(acc));
    }
  }
  CHECK(div_max / scale < 1e-6);
}

TEST_CASE("lsm parameter validation") {
  const ModeSet ms = build_gb_modeset(1);
  LsmParams p = default_initial_guess(ms);
  CHECK_NOTHROW(validate(p, ms));
  p.modes[0].d = -1.0;
  CHECK_THROWS_AS(validate(p, ms), InvalidArgument);
  p = default_initial_guess(ms);
  p.modes[0].omega = 1.0;  // partner keeps 0
  CHECK_THROWS_AS(validate(p, ms), InvalidArgument);
}

TEST_CASE("mode energy matches the stationary second moment") {
  ModeParams p;
  p.d = 1.0;
  p.omega = 1.0;
  p.f = 1.0;
  p.sigma = 0.8;
  const cdouble mu = p.f / cdouble(p.d, -p.omega);
  CHECK(std::abs(mu - cdouble(0.5, 0.5)) < 1e-15);
  CHECK(mode_energy(p) == doctest::Approx(0.5 * (std::norm(mu) + p.sigma * p.sigma / (2 * p.d))));
}

}
