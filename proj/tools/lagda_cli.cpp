// Command-line front end: simulate, estimate, filter, smooth, enkbf, metrics
// and experiment. Exit codes: 0 success, 1 runtime failure, 2 usage or
// configuration error.

#include "lagda/config.hpp"
#include "lagda/enkbf.hpp"
#include "lagda/error.hpp"
#include "lagda/estimation.hpp"
#include "lagda/experiment.hpp"
#include "lagda/filter.hpp"
#include "lagda/io.hpp"
#include "lagda/metrics.hpp"
#include "lagda/parallel.hpp"
#include "lagda/real_basis.hpp"
#include "lagda/simulate.hpp"
#include "lagda/smoother.hpp"
#include "lagda/topographic.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>

using namespace lagda;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string truth;
  std::string params;
  std::string posterior;
  std::optional<std::uint64_t> seed;
  std::string variant = "full";
  int tracers = 0;
  int L_prime = 0;
  int samples = 1;
  int members = 0;
  int workers = 0;
  int stride = 1;
  bool verify = false;
  bool quiet = false;
};

void say(const Options& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << '\n';
}

ExperimentConfig load_config(const Options& o, const std::string& fallback_text) {
  if (!o.config.empty()) return parse_config_file(o.config);
  if (!fallback_text.empty()) return parse_config_string(fallback_text);
  throw ConfigError("no configuration: pass --config or use a truth bundle that stores one");
}

struct Truth {
  TruthBundle bundle;
  ExperimentConfig cfg;
  ModeSet ms;
  std::optional<LsmParams> params;
};

Truth load_truth_dir(const Options& o) {
  if (o.truth.empty()) throw ConfigError("--truth is required");
  Truth t;
  t.bundle = load_truth(o.truth);
  t.cfg = load_config(o, t.bundle.config_text);
  validate_config(t.cfg, false);
  t.ms = t.cfg.model.build_modeset();
  if (static_cast<Eigen::Index>(t.ms.size()) != t.bundle.record.flow.rows()) {
    throw IoError(fmt::format("truth bundle has {} modes but the configured model has {}",
                              t.bundle.record.flow.rows(), t.ms.size()));
  }
  const std::string params_path = o.params.empty() ? o.truth + "/params.json" : o.params;
  if (!o.params.empty() || std::filesystem::exists(params_path)) {
    t.params = params_from_json(read_json(params_path), t.ms);
  }
  return t;
}

const LsmParams& require_params(const Truth& t) {
  if (!t.params) throw ConfigError("no LSM parameters: pass --params (the truth bundle has no params.json)");
  return *t.params;
}

TracerTrack select_tracers(const Truth& t, int count) {
  const auto& track = t.bundle.record.tracers;
  if (count <= 0) return track;
  if (count > track.tracer_count()) {
    throw ConfigError(fmt::format("--tracers {} exceeds the {} tracers in the truth bundle", count, track.tracer_count()));
  }
  return track.head(count);
}

Json base_manifest(const std::string& kind, const Truth& t) {
  Json j;
  j["kind"] = kind;
  j["version"] = kVersion;
  j["status"] = "complete";
  j["truth"] = t.bundle.manifest.value("config_crc32", Json());
  j["truth_seed"] = t.bundle.record.config.seed;
  j["config_crc32"] = text_crc32(t.cfg.source_text);
  return j;
}

int cmd_simulate(const Options& o) {
  ExperimentConfig cfg = load_config(o, {});
  if (o.seed) cfg.simulation.seed = *o.seed;
  validate_config(cfg, false);
  if (o.out.empty()) throw ConfigError("--out is required");
  SimConfig sc;
  sc.dt = cfg.simulation.dt;
  sc.T = cfg.simulation.T;
  sc.seed = cfg.simulation.seed;
  sc.sigma_x = cfg.simulation.sigma_x;
  sc.tracers = cfg.simulation.max_tracers();
  sc.record_noise = cfg.simulation.record_noise;
  const ModeSet ms = cfg.model.build_modeset();
  if (cfg.model.family == "topographic") {
    say(o, "simulating the layered topographic model");
    const TruthRecord rec = simulate_topographic(cfg.model.topo_params(), sc, cfg.simulation.spinup);
    save_truth(o.out, rec, ms, nullptr, cfg.source_text, {{"config_crc32", text_crc32(cfg.source_text)}});
  } else {
    const LsmParams params = cfg.model.true_params(ms);
    say(o, fmt::format("simulating {} modes with {} tracers", ms.size(), sc.tracers));
    const TruthRecord rec = simulate_coupled(params, ms, sc);
    save_truth(o.out, rec, ms, &params, cfg.source_text, {{"config_crc32", text_crc32(cfg.source_text)}});
  }
  say(o, "truth written to " + o.out);
  return 0;
}

int cmd_estimate(const Options& o) {
  Truth t = load_truth_dir(o);
  if (o.seed) t.cfg.estimation.seed = *o.seed;
  if (o.out.empty()) throw ConfigError("--out is required");
  const TracerTrack track = select_tracers(t, o.tracers);
  EstimationConfig ec;
  ec.eps = t.cfg.estimation.eps;
  ec.max_iter = t.cfg.estimation.max_iter;
  ec.max_lag_time = t.cfg.estimation.max_lag_time;
  ec.samples = t.cfg.estimation.samples;
  ec.seed = t.cfg.estimation.seed;
  ec.jitter = t.cfg.filter.jitter;
  ec.checkpoint_every = t.cfg.filter.checkpoint_every;
  ec.workers = o.workers > 0 ? o.workers : default_worker_count();
  LsmParams guess = default_initial_guess(t.ms);
  for (std::size_t m = 0; m < t.ms.size(); ++m) {
    if (t.ms.mode(m).is_mean_flow()) continue;
    guess.modes[m].d = t.cfg.estimation.init_d;
    guess.modes[m].sigma = t.cfg.estimation.init_sigma;
  }
  ec.theta0 = guess;
  say(o, fmt::format("estimating {} modes from {} tracers", t.ms.size(), track.tracer_count()));
  const auto result = estimate_parameters_iterative(track, t.ms, t.bundle.record.config.sigma_x, ec,
                                                    [&](const IterationRecord& r) {
                                                      say(o, fmt::format("iteration {}: change {:.3e}", r.iteration, r.change));
                                                    });
  ensure_directory(o.out);
  write_json(o.out + "/params.json", params_to_json(result.params, t.ms));
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : result.trace) {
    std::vector<std::string> row{std::to_string(r.iteration), format_double(r.change), format_double(r.change_d),
                                 format_double(r.change_sigma)};
    if (t.params) {
      row.push_back(format_double(relative_error(stacked_damping(r.params, t.ms), stacked_damping(*t.params, t.ms))));
      row.push_back(format_double(relative_error(stacked_noise(r.params, t.ms), stacked_noise(*t.params, t.ms))));
    } else {
      row.push_back("nan");
      row.push_back("nan");
    }
    rows.push_back(row);
  }
  write_table(o.out + "/fig1a.csv",
              {"iteration", "change", "change_d", "change_sigma", "rel_err_d", "rel_err_sigma"}, rows);
  Json body = base_manifest("estimate", t);
  body["seed"] = ec.seed;
  body["tracers"] = track.tracer_count();
  body["converged"] = result.converged;
  body["iterations"] = result.trace.size();
  write_manifest(o.out, body, {"fig1a.csv", "params.json"});
  say(o, fmt::format("{} after {} iterations", result.converged ? "converged" : "not converged", result.trace.size()));
  return 0;
}

int cmd_filter(const Options& o) {
  Truth t = load_truth_dir(o);
  if (o.seed) t.cfg.filter.seed = *o.seed;
  if (o.out.empty()) throw ConfigError("--out is required");
  const LsmParams& params = require_params(t);
  const TracerTrack track = select_tracers(t, o.tracers);
  FilterConfig fc;
  try {
    fc.variant = filter_variant_from_string(o.variant);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  fc.sigma_x = t.bundle.record.config.sigma_x;
  fc.jitter = t.cfg.filter.jitter;
  fc.L_prime = o.L_prime;
  fc.rescale = t.cfg.filter.rescale;
  fc.seed = t.cfg.filter.seed;
  fc.checkpoint_every = t.cfg.filter.checkpoint_every;
  say(o, fmt::format("{} filter, {} tracers", to_string(fc.variant), track.tracer_count()));
  const FilterSeries fs = run_filter(track, params, t.ms, fc);
  ensure_directory(o.out);
  write_complex_posterior(o.out + "/posterior.csv", fs.dt, fs.mean_complex(), fs.mode_variance(), o.stride);
  const SkillReport rep = skill_report(fs, t.bundle.record.flow, params, t.ms, t.cfg.filter.score_start);
  write_json(o.out + "/skill.json", Json::parse(rep.to_json()));
  Json body = base_manifest("filter", t);
  body["variant"] = to_string(fc.variant);
  body["seed"] = fc.seed;
  body["tracers"] = track.tracer_count();
  body["L_prime"] = fc.L_prime;
  body["rescale"] = fc.rescale;
  body["clamp_count"] = fs.clamp_count;
  body["stride"] = o.stride;
  write_manifest(o.out, body, {"posterior.csv", "skill.json"});
  say(o, fmt::format("rmse {:.4f}, corr {:.4f}", rep.rmse, rep.corr));
  return 0;
}

int cmd_smooth(const Options& o) {
  Truth t = load_truth_dir(o);
  if (o.seed) t.cfg.estimation.seed = *o.seed;
  if (o.out.empty()) throw ConfigError("--out is required");
  const LsmParams& params = require_params(t);
  const TracerTrack track = select_tracers(t, o.tracers);
  FilterConfig fc;
  fc.sigma_x = t.bundle.record.config.sigma_x;
  fc.jitter = t.cfg.filter.jitter;
  fc.checkpoint_every = t.cfg.filter.checkpoint_every;
  say(o, "forward filter");
  const FilterSeries fs = run_filter(track, params, t.ms, fc);
  say(o, "backward smoother");
  SmootherConfig sc;
  sc.jitter = fc.jitter;
  const SmootherSeries ss = run_backward_smoother(fs, track, params, t.ms, sc);
  ensure_directory(o.out);
  std::vector<std::string> files{"smoother.csv"};
  write_complex_posterior(o.out + "/smoother.csv", ss.dt, ss.mean_complex(), ss.mode_variance(), o.stride);
  if (o.samples > 0) {
    say(o, fmt::format("sampling {} backward trajectories", o.samples));
    const SampledPaths sp = sample_backward_trajectories(ss, fs, track, params, t.ms, o.samples,
                                                         t.cfg.estimation.seed, true, fc.jitter);
    for (int i = 0; i < sp.count; ++i) {
      const std::string name = fmt::format("sample_{}.csv", i);
      const Eigen::MatrixXcd path = sp.complex_path(fs.basis, static_cast<std::size_t>(i));
      write_complex_posterior(o.out + "/" + name, ss.dt, path, Eigen::MatrixXd::Zero(path.rows(), path.cols()),
                              o.stride);
      files.push_back(name);
    }
  }
  Json body = base_manifest("smooth", t);
  body["seed"] = t.cfg.estimation.seed;
  body["tracers"] = track.tracer_count();
  body["samples"] = o.samples;
  body["stride"] = o.stride;
  write_manifest(o.out, body, files);
  return 0;
}

int cmd_enkbf(const Options& o) {
  Truth t = load_truth_dir(o);
  if (o.seed) t.cfg.enkbf.seed = *o.seed;
  if (o.out.empty()) throw ConfigError("--out is required");
  const TracerTrack track = select_tracers(t, o.tracers);
  const int members = o.members > 0 ? o.members : t.cfg.enkbf.members;
  EnsembleModel model;
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor;
  std::function<Eigen::VectorXcd(const Eigen::VectorXd&)> to_modes;
  if (t.cfg.model.family == "topographic") {
    const TopoDynamics dyn(t.cfg.model.topo_params());
    model = topographic_ensemble_model(dyn);
    Eigen::MatrixXd states(dyn.dim(), t.bundle.record.flow.cols());
    for (Eigen::Index c = 0; c < states.cols(); ++c) states.col(c) = dyn.from_layered(t.bundle.record.flow.col(c));
    mean = states.rowwise().mean();
    factor = ((states.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix().asDiagonal();
    to_modes = [dyn](const Eigen::VectorXd& s) { return dyn.to_layered(s); };
  } else {
    const LsmParams& params = require_params(t);
    model = lsm_ensemble_model(params, t.ms);
    const RealBasis basis(t.ms);
    const auto [prior_mean, prior_cov] = RealLinearModel(basis, t.ms, params).stationary_moments();
    mean = prior_mean;
    Eigen::LLT<Eigen::MatrixXd> llt(prior_cov);
    if (llt.info() != Eigen::Success) throw NumericalError("prior covariance is not positive definite", 0);
    factor = llt.matrixL();
    to_modes = [basis](const Eigen::VectorXd& z) { return basis.to_complex(z); };
  }
  EnkbfConfig ec;
  ec.sigma_x = t.bundle.record.config.sigma_x;
  ec.seed = t.cfg.enkbf.seed;
  say(o, fmt::format("EnKBF with {} members, {} tracers", members, track.tracer_count()));
  const EnkbfSeries es = run_enkbf(track, model, initial_ensemble(mean, factor, members, ec.seed), ec);
  ensure_directory(o.out);
  write_real_posterior(o.out + "/posterior.csv", es.dt, es.mean, es.variance, o.stride);
  Eigen::MatrixXcd modes(t.bundle.record.flow.rows(), es.mean.cols());
  for (Eigen::Index c = 0; c < es.mean.cols(); ++c) modes.col(c) = to_modes(es.mean.col(c));
  const auto first = static_cast<Eigen::Index>(std::floor(t.cfg.filter.score_start * static_cast<double>(modes.cols())));
  const auto per_mode = per_mode_rmse_corr(modes, t.bundle.record.flow, first);
  Json skill = Json::array();
  for (const auto& s : per_mode) skill.push_back({{"rmse", s.rmse}, {"corr", s.corr}});
  write_json(o.out + "/skill.json", {{"per_mode", skill}});
  Json body = base_manifest("enkbf", t);
  body["seed"] = ec.seed;
  body["members"] = members;
  body["tracers"] = track.tracer_count();
  body["stride"] = o.stride;
  write_manifest(o.out, body, {"posterior.csv", "skill.json"});
  return 0;
}

int cmd_metrics(const Options& o) {
  Truth t = load_truth_dir(o);
  if (o.posterior.empty()) throw ConfigError("--posterior is required");
  if (o.out.empty()) throw ConfigError("--out is required");
  const Json pm = read_manifest(o.posterior);
  const auto problems = verify_manifest(o.posterior);
  if (!problems.empty()) throw IoError("posterior bundle failed verification: " + problems.front());
  const std::string file = std::filesystem::exists(o.posterior + "/posterior.csv") ? "/posterior.csv" : "/smoother.csv";
  const CsvTable table = read_csv(o.posterior + file);
  const Eigen::Index k = t.bundle.record.flow.rows();
  if (table.data.cols() != 1 + 3 * k) {
    throw IoError("posterior table does not hold complex per-mode series for this model");
  }
  // The posterior may be subsampled; align on the stored times.
  const double dt = t.bundle.record.config.dt;
  Eigen::MatrixXcd est(k, table.data.rows());
  Eigen::MatrixXcd truth(k, table.data.rows());
  for (Eigen::Index r = 0; r < table.data.rows(); ++r) {
    const auto n = static_cast<Eigen::Index>(std::llround(table.data(r, 0) / dt));
    if (n < 0 || n >= t.bundle.record.flow.cols()) throw IoError("posterior time outside the truth record");
    truth.col(r) = t.bundle.record.flow.col(n);
    for (Eigen::Index m = 0; m < k; ++m) est(m, r) = {table.data(r, 1 + 3 * m), table.data(r, 2 + 3 * m)};
  }
  const auto first = static_cast<Eigen::Index>(std::floor(t.cfg.filter.score_start * static_cast<double>(est.cols())));
  const auto per_mode = per_mode_rmse_corr(est, truth, first);
  double rmse = 0.0, corr = 0.0;
  Json arr = Json::array();
  for (std::size_t m = 0; m < per_mode.size(); ++m) {
    rmse += per_mode[m].rmse;
    corr += per_mode[m].corr;
    const auto& idx = t.ms.mode(m);
    arr.push_back({{"kx", idx.k.x}, {"ky", idx.k.y}, {"kind", to_string(idx.kind)}, {"rmse", per_mode[m].rmse},
                   {"corr", per_mode[m].corr}});
  }
  Json report;
  report["rmse"] = rmse / static_cast<double>(k);
  report["corr"] = corr / static_cast<double>(k);
  report["per_mode"] = arr;
  ensure_directory(o.out);
  write_json(o.out + "/metrics.json", report);
  Json body = base_manifest("metrics", t);
  body["posterior"] = pm.value("kind", "");
  write_manifest(o.out, body, {"metrics.json"});
  say(o, fmt::format("rmse {:.4f}, corr {:.4f}", report["rmse"].get<double>(), report["corr"].get<double>()));
  return 0;
}

int cmd_experiment(const Options& o) {
  ExperimentConfig cfg = load_config(o, {});
  if (o.seed) cfg.simulation.seed = *o.seed;
  if (o.workers > 0) cfg.workers = o.workers;
  const std::string out = o.out.empty() ? cfg.output : o.out;
  if (out.empty()) throw ConfigError("no output directory: pass --out or set experiment.output");
  validate_config(cfg, true);
  run_experiment(cfg, out, [&](const std::string& msg) { say(o, msg); });
  say(o, "bundle written to " + out);
  return 0;
}

int verify(const Options& o) {
  if (o.out.empty()) throw ConfigError("--verify needs --out <bundle directory>");
  const auto problems = verify_manifest(o.out);
  for (const auto& p : problems) std::cerr << p << '\n';
  if (!problems.empty()) return 1;
  say(o, "all checksums match");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian data assimilation with linear stochastic flow models"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "Experiment configuration file")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    sub->add_option("--seed", o.seed, "Override the seed this command consumes");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--verify", o.verify, "Recompute the checksums of the bundle in --out and exit");
    sub->add_flag("-q,--quiet", o.quiet, "Suppress progress messages");
  };
  auto truth_opts = [&](CLI::App* sub) {
    sub->add_option("--truth", o.truth, "Truth bundle written by `simulate`");
    sub->add_option("--params", o.params, "LSM parameter JSON (default: the truth bundle's params.json)");
    sub->add_option("--tracers", o.tracers, "Use only the first N tracers (default: all)")->check(CLI::NonNegativeNumber);
    sub->add_option("--stride", o.stride, "Write every N-th time step of the series")->check(CLI::PositiveNumber);
  };

  auto* sim = app.add_subcommand("simulate", "Simulate the coupled flow and tracers; writes a truth bundle");
  common(sim, false);
  auto* est = app.add_subcommand("estimate", "Estimate LSM parameters from tracer paths (iterative algorithm)");
  common(est, false);
  truth_opts(est);
  est->add_option("--workers", o.workers, "Worker threads (default: LAGDA_WORKERS or core count)");
  auto* fil = app.add_subcommand("filter", "Run a conditional Gaussian filter on a truth bundle");
  common(fil, false);
  truth_opts(fil);
  fil->add_option("--variant", o.variant, "full | diag_riccati | diag_constant | randomized");
  fil->add_option("--lprime", o.L_prime, "Tracers drawn per step for the randomized variant");
  auto* smo = app.add_subcommand("smooth", "Forward filter, backward smoother and sampled trajectories");
  common(smo, false);
  truth_opts(smo);
  smo->add_option("--samples", o.samples, "Number of backward-sampled trajectories to write")
      ->check(CLI::NonNegativeNumber);
  auto* enk = app.add_subcommand("enkbf", "Ensemble Kalman-Bucy filter on a truth bundle");
  common(enk, false);
  truth_opts(enk);
  enk->add_option("--members", o.members, "Ensemble size (default: enkbf.members)");
  auto* met = app.add_subcommand("metrics", "Score a posterior bundle against its truth bundle");
  common(met, false);
  met->add_option("--truth", o.truth, "Truth bundle written by `simulate`");
  met->add_option("--posterior", o.posterior, "Bundle written by `filter`, `smooth` or `enkbf`");
  auto* exp = app.add_subcommand("experiment", "Run a configured experiment and write a report bundle");
  common(exp, false);
  exp->add_option("--workers", o.workers, "Worker threads (default: LAGDA_WORKERS or core count)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (o.verify) return verify(o);
    if (sim->parsed()) {
      if (o.config.empty()) throw ConfigError("simulate needs --config");
      return cmd_simulate(o);
    }
    if (est->parsed()) return cmd_estimate(o);
    if (fil->parsed()) return cmd_filter(o);
    if (smo->parsed()) return cmd_smooth(o);
    if (enk->parsed()) return cmd_enkbf(o);
    if (met->parsed()) return cmd_metrics(o);
    if (exp->parsed()) {
      if (o.config.empty()) throw ConfigError("experiment needs --config");
      return cmd_experiment(o);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
