#include "lagda/metrics.hpp"

#include "lagda/error.hpp"

#include <json.hpp>

#include <cmath>

namespace lagda {

RmseCorr rmse_corr(const Eigen::VectorXd& est, const Eigen::VectorXd& truth) {
  if (est.size() != truth.size()) throw InvalidArgument("rmse_corr: length mismatch");
  if (truth.size() < 2) throw InvalidArgument("rmse_corr: need at least two samples");
  const double tm = truth.mean();
  const double em = est.mean();
  const Eigen::ArrayXd tc = truth.array() - tm;
  const Eigen::ArrayXd ec = est.array() - em;
  const double tstd = std::sqrt(tc.square().mean());
  if (!(tstd > 0.0)) throw InvalidArgument("rmse_corr: truth has zero variance");
  RmseCorr out;
  out.rmse = std::sqrt((est - truth).array().square().mean()) / tstd;
  const double den = std::sqrt(tc.square().sum() * ec.square().sum());
  out.corr = den > 0.0 ? (tc * ec).sum() / den : 0.0;
  return out;
}

RmseCorr rmse_corr(const Eigen::VectorXcd& est, const Eigen::VectorXcd& truth) {
  Eigen::VectorXd e(2 * est.size()), t(2 * truth.size());
  e << est.real(), est.imag();
  t << truth.real(), truth.imag();
  return rmse_corr(e, t);
}

std::vector<RmseCorr> per_mode_rmse_corr(const Eigen::MatrixXcd& est, const Eigen::MatrixXcd& truth,
                                         Eigen::Index first, Eigen::Index last) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) {
    throw InvalidArgument("per_mode_rmse_corr: shape mismatch");
  }
  if (last < 0) last = est.cols();
  std::vector<RmseCorr> out;
  for (Eigen::Index m = 0; m < est.rows(); ++m) {
    const Eigen::VectorXcd e = est.row(m).segment(first, last - first).transpose();
    const Eigen::VectorXcd t = truth.row(m).segment(first, last - first).transpose();
    out.push_back(rmse_corr(e, t));
  }
  return out;
}

namespace {

template <typename Vec, typename Mat>
RelativeEntropy relative_entropy_impl(const Vec& mu, const Mat& R, const Vec& mu_eq, const Mat& R_eq) {
  const auto k = R_eq.rows();
  if (R.rows() != k || R.cols() != k || mu.size() != k || mu_eq.size() != k) {
    throw InvalidArgument("relative entropy: dimension mismatch");
  }
  const Mat req = 0.5 * (R_eq + R_eq.adjoint());
  Eigen::LLT<Mat> llt(req);
  if (llt.info() != Eigen::Success) throw InvalidArgument("relative entropy: R_eq is singular or not PSD");
  const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
  const Mat r = 0.5 * (R + R.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> check(r, Eigen::EigenvaluesOnly);
  if (check.eigenvalues().minCoeff() < -1e-12 * scale) throw InvalidArgument("relative entropy: R is not PSD");
  const auto& l = llt.matrixL();
  const Vec w = l.solve(mu - mu_eq);
  Mat c = l.solve(l.solve(r).adjoint()).adjoint();
  c = 0.5 * (c + c.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(c, Eigen::EigenvaluesOnly);
  RelativeEntropy out;
  out.signal = 0.5 * w.squaredNorm();
  double disp = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lam = es.eigenvalues()[i];
    disp += lam - std::log(lam) - 1.0;
  }
  out.dispersion = 0.5 * disp;
  return out;
}

}  // namespace

RelativeEntropy gaussian_relative_entropy(const Eigen::VectorXcd& mu, const Eigen::MatrixXcd& R,
                                          const Eigen::VectorXcd& mu_eq, const Eigen::MatrixXcd& R_eq) {
  return relative_entropy_impl<Eigen::VectorXcd, Eigen::MatrixXcd>(mu, R, mu_eq, R_eq);
}

RelativeEntropy gaussian_relative_entropy(const Eigen::VectorXd& mu, const Eigen::MatrixXd& R,
                                          const Eigen::VectorXd& mu_eq, const Eigen::MatrixXd& R_eq) {
  return relative_entropy_impl<Eigen::VectorXd, Eigen::MatrixXd>(mu, R, mu_eq, R_eq);
}

double relative_error(const Eigen::VectorXd& est, const Eigen::VectorXd& ref) {
  if (est.size() != ref.size()) throw InvalidArgument("relative_error: length mismatch");
  const double n = ref.norm();
  if (!(n > 0.0)) throw InvalidArgument("relative_error: zero reference");
  return (est - ref).norm() / n;
}

PosteriorGaussian equilibrium_prior(const LsmParams& params, const ModeSet& ms) {
  return prior_posterior(params, ms);
}

RelativeEntropy time_averaged_information(const FilterSeries& fs, const LsmParams& params,
                                          const ModeSet& ms, double start_fraction) {
  const RealLinearModel model(fs.basis, ms, params);
  const auto [mu_eq, r_eq] = model.stationary_moments();
  Eigen::LLT<Eigen::MatrixXd> llt(r_eq);
  if (llt.info() != Eigen::Success) throw InvalidArgument("information scores: singular equilibrium covariance");
  const auto n = static_cast<Eigen::Index>(fs.steps());
  const auto first = static_cast<Eigen::Index>(std::floor(start_fraction * static_cast<double>(n)));
  RelativeEntropy out;
  double count = 0.0;
  for (Eigen::Index c = first; c <= n; ++c) {
    const Eigen::VectorXd w = llt.matrixL().solve(fs.mean.col(c) - mu_eq);
    out.signal += 0.5 * w.squaredNorm();
    out.dispersion += fs.dispersion[c];
    count += 1.0;
  }
  out.signal /= count;
  out.dispersion /= count;
  return out;
}

double excess_kurtosis(const Eigen::VectorXd& x) {
  if (x.size() < 4) throw InvalidArgument("excess_kurtosis: need at least 4 samples");
  const Eigen::ArrayXd c = x.array() - x.mean();
  const double m2 = c.square().mean();
  if (!(m2 > 0.0)) throw InvalidArgument("excess_kurtosis: zero variance");
  return c.square().square().mean() / (m2 * m2) - 3.0;
}

std::string SkillReport::to_json() const {
  nlohmann::ordered_json j;
  j["rmse"] = rmse;
  j["corr"] = corr;
  j["signal"] = signal;
  j["dispersion"] = dispersion;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : per_mode) arr.push_back({{"rmse", s.rmse}, {"corr", s.corr}});
  j["per_mode"] = arr;
  return j.dump(2);
}

SkillReport skill_report(const FilterSeries& fs, const Eigen::MatrixXcd& truth, const LsmParams& params,
                         const ModeSet& ms, double start_fraction) {
  const Eigen::MatrixXcd est = fs.mean_complex();
  const auto n = est.cols();
  const auto first = static_cast<Eigen::Index>(std::floor(start_fraction * static_cast<double>(n - 1)));
  SkillReport rep;
  rep.per_mode = per_mode_rmse_corr(est, truth, first, n);
  for (const auto& s : rep.per_mode) {
    rep.rmse += s.rmse;
    rep.corr += s.corr;
  }
  rep.rmse /= static_cast<double>(rep.per_mode.size());
  rep.corr /= static_cast<double>(rep.per_mode.size());
  const auto info = time_averaged_information(fs, params, ms, start_fraction);
  rep.signal = info.signal;
  rep.dispersion = info.dispersion;
  return rep;
}

}  // namespace lagda
