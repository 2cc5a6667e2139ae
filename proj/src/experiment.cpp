#include "lagda/experiment.hpp"

#include "lagda/enkbf.hpp"
#include "lagda/error.hpp"
#include "lagda/estimation.hpp"
#include "lagda/filter.hpp"
#include "lagda/metrics.hpp"
#include "lagda/parallel.hpp"
#include "lagda/simulate.hpp"
#include "lagda/topographic.hpp"

#include <boost/crc.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>

namespace lagda {

std::string skill_key(const std::string& variant, int L, int L_prime) {
  return fmt::format("variant={},L={},Lp={}", variant, L, L_prime);
}

std::string text_crc32(const std::string& text) {
  boost::crc_32_type crc;
  crc.process_bytes(text.data(), text.size());
  return fmt::format("{:08x}", crc.checksum());
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Bundle {
 public:
  Bundle(std::string dir, Json body) : dir_(std::move(dir)), body_(std::move(body)) {}

  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  void add(const std::string& name) {
    std::lock_guard<std::mutex> lock(mutex_);
    files_.push_back(name);
  }

  void commit(const std::string& status, const std::string& error = {}) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::sort(files_.begin(), files_.end());
    Json body = body_;
    body["status"] = status;
    if (!error.empty()) body["error"] = error;
    write_manifest(dir_, body, files_);
  }

 private:
  std::string dir_;
  Json body_;
  std::vector<std::string> files_;
  std::mutex mutex_;
};

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Context {
  Context(const ExperimentConfig& c, Bundle& b) : cfg(c), out(b) {}

  const ExperimentConfig& cfg;
  Bundle& out;
  int workers = 1;
  int stride = 1;
  ProgressLog log;
  std::mutex log_mutex;

  void note(const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    log(msg);
  }

  std::size_t score_first(Eigen::Index cols) const {
    return static_cast<std::size_t>(std::floor(cfg.filter.score_start * static_cast<double>(cols)));
  }
};

std::string num(double x) { return format_double(x); }

SimConfig sim_config(const SimulationSpec& s) {
  SimConfig c;
  c.dt = s.dt;
  c.T = s.T;
  c.seed = s.seed;
  c.sigma_x = s.sigma_x;
  c.tracers = s.max_tracers();
  c.record_noise = s.record_noise;
  return c;
}

FilterConfig filter_config(const ExperimentConfig& c, FilterVariant v, int L_prime) {
  FilterConfig f;
  f.variant = v;
  f.sigma_x = c.simulation.sigma_x;
  f.jitter = c.filter.jitter;
  f.L_prime = L_prime;
  f.rescale = c.filter.rescale;
  f.seed = c.filter.seed;
  f.checkpoint_every = c.filter.checkpoint_every;
  return f;
}

EstimationConfig estimation_config(const ExperimentConfig& c, const ModeSet& ms) {
  EstimationConfig e;
  e.eps = c.estimation.eps;
  e.max_iter = c.estimation.max_iter;
  e.max_lag_time = c.estimation.max_lag_time;
  e.samples = c.estimation.samples;
  e.seed = c.estimation.seed;
  e.jitter = c.filter.jitter;
  e.checkpoint_every = c.filter.checkpoint_every;
  e.workers = 1;
  LsmParams guess = default_initial_guess(ms);
  for (std::size_t m = 0; m < ms.size(); ++m) {
    if (ms.mode(m).is_mean_flow()) continue;
    guess.modes[m].d = c.estimation.init_d;
    guess.modes[m].sigma = c.estimation.init_sigma;
  }
  e.theta0 = guess;
  return e;
}

Json skill_entry(const std::string& variant, int L, int Lp, const SkillReport& rep) {
  Json j;
  j["variant"] = variant;
  j["L"] = L;
  j["L_prime"] = Lp;
  j["rmse"] = rep.rmse;
  j["corr"] = rep.corr;
  j["signal"] = rep.signal;
  j["dispersion"] = rep.dispersion;
  Json pm = Json::array();
  for (const auto& s : rep.per_mode) pm.push_back({{"rmse", s.rmse}, {"corr", s.corr}});
  j["per_mode"] = pm;
  return j;
}

void write_truth_series(Context& ctx, const Eigen::VectorXd& times, const Eigen::MatrixXcd& flow) {
  std::vector<int> cols;
  for (Eigen::Index c = 0; c < flow.cols(); c += ctx.stride) cols.push_back(static_cast<int>(c));
  if (cols.back() != flow.cols() - 1) cols.push_back(static_cast<int>(flow.cols() - 1));
  Eigen::MatrixXd data(static_cast<Eigen::Index>(cols.size()), 1 + 2 * flow.rows());
  for (std::size_t r = 0; r < cols.size(); ++r) {
    data(r, 0) = times[cols[r]];
    for (Eigen::Index m = 0; m < flow.rows(); ++m) {
      data(r, 1 + 2 * m) = flow(m, cols[r]).real();
      data(r, 2 + 2 * m) = flow(m, cols[r]).imag();
    }
  }
  write_csv(ctx.out.path("truth_flow.csv"), complex_series_header(static_cast<int>(flow.rows())), data);
  ctx.out.add("truth_flow.csv");
}

void write_posterior(Context& ctx, const std::string& name, double dt, const Eigen::MatrixXcd& mean,
                     const Eigen::MatrixXd& variance) {
  write_complex_posterior(ctx.out.path(name), dt, mean, variance, ctx.stride);
  ctx.out.add(name);
}

double mean_rmse_of_kind(const SkillReport& rep, const ModeSet& ms, bool gravity) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto kind = ms.mode(m).kind;
    if (ms.mode(m).is_mean_flow()) continue;
    const bool is_gravity = kind == ModeKind::GravityPlus || kind == ModeKind::GravityMinus;
    if (is_gravity != gravity) continue;
    sum += rep.per_mode[m].rmse;
    ++count;
  }
  return count ? sum / count : kNaN;
}

// ---------------------------------------------------------------- gb_param_est

Json run_param_est(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const ModeSet ms = stage("model", [&] { return cfg.model.build_modeset(); });
  const LsmParams truth_params = stage("model", [&] { return cfg.model.true_params(ms); });
  ctx.note(fmt::format("simulating {} modes, {} tracers, T = {}", ms.size(), cfg.simulation.max_tracers(),
                       cfg.simulation.T));
  const TruthRecord rec = stage("simulate", [&] { return simulate_coupled(truth_params, ms, sim_config(cfg.simulation)); });
  ctx.stride = std::max<int>(1, static_cast<int>(std::ceil(static_cast<double>(rec.flow.cols() - 1) / (cfg.series_rows - 1))));
  write_truth_series(ctx, rec.times, rec.flow);
  write_json(ctx.out.path("params_true.json"), params_to_json(truth_params, ms));
  ctx.out.add("params_true.json");

  const auto& Ls = cfg.simulation.tracers;
  const auto& variants = cfg.filter.variants;
  struct CellResult {
    double err_d = kNaN;
    double err_sigma = kNaN;
    int iterations = 0;
    bool converged = false;
    std::vector<SkillReport> reports;
  };
  std::vector<CellResult> results(Ls.size());
  const auto true_d = stacked_damping(truth_params, ms);
  const auto true_sigma = stacked_noise(truth_params, ms);

  parallel_for(Ls.size(), ctx.workers, [&](std::size_t i) {
    const int L = Ls[i];
    const TracerTrack track = rec.tracers.head(L);
    CellResult& res = results[i];
    LsmParams used = truth_params;
    if (cfg.estimation.enabled) {
      ctx.note(fmt::format("L = {}: estimating parameters", L));
      const auto est = stage(fmt::format("estimate L={}", L), [&] {
        return estimate_parameters_iterative(track, ms, cfg.simulation.sigma_x, estimation_config(cfg, ms));
      });
      used = est.params;
      res.iterations = static_cast<int>(est.trace.size());
      res.converged = est.converged;
      std::vector<std::vector<std::string>> rows;
      for (const auto& it : est.trace) {
        rows.push_back({std::to_string(it.iteration), num(it.change),
                        num(relative_error(stacked_damping(it.params, ms), true_d)),
                        num(relative_error(stacked_noise(it.params, ms), true_sigma))});
      }
      const std::string name = fmt::format("fig1a_L{}.csv", L);
      write_table(ctx.out.path(name), {"iteration", "change", "rel_err_d", "rel_err_sigma"}, rows);
      ctx.out.add(name);
      write_json(ctx.out.path(fmt::format("params_L{}.json", L)), params_to_json(used, ms));
      ctx.out.add(fmt::format("params_L{}.json", L));

      std::vector<std::vector<std::string>> spec;
      for (ModeKind kind : {ModeKind::GB, ModeKind::GravityPlus, ModeKind::GravityMinus}) {
        const auto t = shell_energies(truth_params, ms, kind);
        const auto e = shell_energies(used, ms, kind);
        for (std::size_t s = 0; s < t.size(); ++s) {
          spec.push_back({to_string(kind), std::to_string(t[s].k2), num(std::sqrt(static_cast<double>(t[s].k2))),
                          num(t[s].energy), num(e[s].energy)});
        }
      }
      const std::string sname = fmt::format("fig1e_L{}.csv", L);
      write_table(ctx.out.path(sname), {"kind", "k2", "k", "energy_true", "energy_est"}, spec);
      ctx.out.add(sname);
    }
    res.err_d = relative_error(stacked_damping(used, ms), true_d);
    res.err_sigma = relative_error(stacked_noise(used, ms), true_sigma);
    for (FilterVariant v : variants) {
      ctx.note(fmt::format("L = {}: {} filter", L, to_string(v)));
      const std::string tag = fmt::format("filter {} L={}", to_string(v), L);
      const FilterSeries fs = stage(tag, [&] { return run_filter(track, used, ms, filter_config(cfg, v, 0)); });
      res.reports.push_back(stage(tag, [&] { return skill_report(fs, rec.flow, used, ms, cfg.filter.score_start); }));
      write_posterior(ctx, fmt::format("posterior_{}_L{}.csv", to_string(v), L), fs.dt, fs.mean_complex(),
                      fs.mode_variance());
    }
  });

  Json skill = Json::object();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto& rep = results[i].reports[v];
      Json e = skill_entry(to_string(variants[v]), Ls[i], 0, rep);
      e["rel_err_d"] = results[i].err_d;
      e["rel_err_sigma"] = results[i].err_sigma;
      skill[skill_key(to_string(variants[v]), Ls[i], 0)] = e;
      rows.push_back({to_string(variants[v]), std::to_string(Ls[i]), num(results[i].err_d), num(results[i].err_sigma),
                      std::to_string(results[i].iterations), results[i].converged ? "1" : "0", num(rep.rmse),
                      num(rep.corr), num(rep.signal), num(rep.dispersion)});
    }
  }
  write_table(ctx.out.path("fig3.csv"),
              {"variant", "L", "rel_err_d", "rel_err_sigma", "iterations", "converged", "rmse", "corr", "signal",
               "dispersion"},
              rows);
  ctx.out.add("fig3.csv");
  return skill;
}

// -------------------------------------------------------------- approx_filters

Json run_approx_filters(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const ModeSet ms = stage("model", [&] { return cfg.model.build_modeset(); });
  const LsmParams params = stage("model", [&] { return cfg.model.true_params(ms); });
  ctx.note(fmt::format("simulating {} modes, {} tracers, T = {}", ms.size(), cfg.simulation.max_tracers(),
                       cfg.simulation.T));
  const TruthRecord rec = stage("simulate", [&] { return simulate_coupled(params, ms, sim_config(cfg.simulation)); });
  ctx.stride = std::max<int>(1, static_cast<int>(std::ceil(static_cast<double>(rec.flow.cols() - 1) / (cfg.series_rows - 1))));
  write_truth_series(ctx, rec.times, rec.flow);

  struct Cell {
    FilterVariant variant;
    int L;
    int Lp;
  };
  std::vector<Cell> cells;
  for (FilterVariant v : cfg.filter.variants) {
    for (int L : cfg.simulation.tracers) {
      if (v == FilterVariant::Randomized) {
        for (int lp : cfg.filter.L_prime) {
          if (lp <= L) cells.push_back({v, L, lp});
        }
      } else {
        cells.push_back({v, L, 0});
      }
    }
  }
  std::vector<SkillReport> reports(cells.size());
  std::vector<std::size_t> clamps(cells.size(), 0);
  parallel_for(cells.size(), ctx.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    const std::string tag = fmt::format("filter {} L={} Lp={}", to_string(c.variant), c.L, c.Lp);
    ctx.note(tag);
    const FilterSeries fs = stage(tag, [&] {
      return run_filter(rec.tracers.head(c.L), params, ms, filter_config(cfg, c.variant, c.Lp));
    });
    reports[i] = stage(tag, [&] { return skill_report(fs, rec.flow, params, ms, cfg.filter.score_start); });
    clamps[i] = fs.clamp_count;
    write_posterior(ctx, fmt::format("posterior_{}_L{}_Lp{}.csv", to_string(c.variant), c.L, c.Lp), fs.dt,
                    fs.mean_complex(), fs.mode_variance());
  });

  Json skill = Json::object();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& rep = reports[i];
    const double gb = mean_rmse_of_kind(rep, ms, false);
    const double grav = mean_rmse_of_kind(rep, ms, true);
    Json e = skill_entry(to_string(c.variant), c.L, c.Lp, rep);
    e["rmse_gb"] = gb;
    e["rmse_gravity"] = std::isnan(grav) ? Json() : Json(grav);
    e["clamps"] = clamps[i];
    skill[skill_key(to_string(c.variant), c.L, c.Lp)] = e;
    rows.push_back({to_string(c.variant), std::to_string(c.L), std::to_string(c.Lp), num(rep.rmse), num(rep.corr),
                    num(rep.signal), num(rep.dispersion), num(gb), num(grav), std::to_string(clamps[i])});
  }
  write_table(ctx.out.path("fig4.csv"),
              {"variant", "L", "L_prime", "rmse", "corr", "signal", "dispersion", "rmse_gb", "rmse_gravity",
               "clamps"},
              rows);
  ctx.out.add("fig4.csv");
  return skill;
}

// ------------------------------------------------------------ randomized_sweep

Json run_randomized_sweep(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const ModeSet ms = stage("model", [&] { return cfg.model.build_modeset(); });
  const LsmParams params = stage("model", [&] { return cfg.model.true_params(ms); });
  const int L = cfg.simulation.max_tracers();
  ctx.note(fmt::format("simulating {} modes, {} tracers, T = {}", ms.size(), L, cfg.simulation.T));
  const TruthRecord rec = stage("simulate", [&] { return simulate_coupled(params, ms, sim_config(cfg.simulation)); });
  ctx.stride = std::max<int>(1, static_cast<int>(std::ceil(static_cast<double>(rec.flow.cols() - 1) / (cfg.series_rows - 1))));
  write_truth_series(ctx, rec.times, rec.flow);

  ctx.note(fmt::format("reference full filter with L = {}", L));
  const FilterSeries ref = stage("filter full reference", [&] {
    return run_filter(rec.tracers, params, ms, filter_config(cfg, FilterVariant::Full, 0));
  });
  const SkillReport ref_rep = stage("metrics full reference", [&] {
    return skill_report(ref, rec.flow, params, ms, cfg.filter.score_start);
  });
  write_posterior(ctx, fmt::format("posterior_full_L{}.csv", L), ref.dt, ref.mean_complex(), ref.mode_variance());

  const auto& lps = cfg.filter.L_prime;
  std::vector<SkillReport> rand_rep(lps.size()), fixed_rep(lps.size());
  std::vector<double> gap(lps.size());
  parallel_for(lps.size(), ctx.workers, [&](std::size_t i) {
    const int lp = lps[i];
    const std::string tag = fmt::format("filter randomized L={} Lp={}", L, lp);
    ctx.note(tag);
    const FilterSeries rs = stage(tag, [&] {
      return run_filter(rec.tracers, params, ms, filter_config(cfg, FilterVariant::Randomized, lp));
    });
    rand_rep[i] = stage(tag, [&] { return skill_report(rs, rec.flow, params, ms, cfg.filter.score_start); });
    gap[i] = (rs.mean - ref.mean).cwiseAbs().maxCoeff();
    write_posterior(ctx, fmt::format("posterior_randomized_L{}_Lp{}.csv", L, lp), rs.dt, rs.mean_complex(),
                    rs.mode_variance());
    const std::string ftag = fmt::format("filter full L={}", lp);
    const FilterSeries fx = stage(ftag, [&] {
      return run_filter(rec.tracers.head(lp), params, ms, filter_config(cfg, FilterVariant::Full, 0));
    });
    fixed_rep[i] = stage(ftag, [&] { return skill_report(fx, rec.flow, params, ms, cfg.filter.score_start); });
  });

  Json skill = Json::object();
  skill[skill_key("full", L, 0)] = skill_entry("full", L, 0, ref_rep);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < lps.size(); ++i) {
    Json e = skill_entry("randomized", L, lps[i], rand_rep[i]);
    e["max_mean_gap"] = gap[i];
    skill[skill_key("randomized", L, lps[i])] = e;
    skill[skill_key("full", lps[i], 0)] = skill_entry("full", lps[i], 0, fixed_rep[i]);
    rows.push_back({std::to_string(L), std::to_string(lps[i]), num(rand_rep[i].rmse), num(rand_rep[i].corr),
                    num(fixed_rep[i].rmse), num(fixed_rep[i].corr), num(ref_rep.rmse), num(gap[i])});
  }
  write_table(ctx.out.path("fig10.csv"),
              {"L", "L_prime", "rmse_randomized", "corr_randomized", "rmse_fixed", "corr_fixed", "rmse_full",
               "max_mean_gap"},
              rows);
  ctx.out.add("fig10.csv");
  return skill;
}

// --------------------------------------------------------- layered topographic

std::string layered_label(const ModeIndex& idx) {
  return idx.is_mean_flow() ? std::string("u") : fmt::format("k={}", idx.k.x);
}

// Rows of `part` (layered set `part_ms`) embedded into the full layered set.
Eigen::MatrixXcd embed_layered(const Eigen::MatrixXcd& part, const ModeSet& part_ms, const ModeSet& full_ms) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(full_ms.size()), part.cols());
  for (std::size_t m = 0; m < part_ms.size(); ++m) {
    const int t = full_ms.find(part_ms.mode(m).k, part_ms.mode(m).kind);
    if (t >= 0) out.row(t) = part.row(static_cast<Eigen::Index>(m));
  }
  return out;
}

// Layered rows restricted to `part_ms`.
Eigen::MatrixXcd restrict_layered(const Eigen::MatrixXcd& full, const ModeSet& full_ms, const ModeSet& part_ms) {
  Eigen::MatrixXcd out(static_cast<Eigen::Index>(part_ms.size()), full.cols());
  for (std::size_t m = 0; m < part_ms.size(); ++m) {
    const int s = full_ms.find(part_ms.mode(m).k, part_ms.mode(m).kind);
    if (s < 0) throw InvalidArgument("restrict_layered: mode missing from the full set");
    out.row(static_cast<Eigen::Index>(m)) = full.row(s);
  }
  return out;
}

// Inverse of layered_to_gb_series: v_k = i vhat_(k,0) / k and u from the
// x mean-flow slot.
Eigen::MatrixXcd gb_to_layered_series(const Eigen::MatrixXcd& gb, const ModeSet& gb_ms, const ModeSet& layered_ms) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(layered_ms.size()), gb.cols());
  for (std::size_t m = 0; m < layered_ms.size(); ++m) {
    const auto& idx = layered_ms.mode(m);
    const int s = gb_ms.find(idx.k, idx.kind);
    if (s < 0) continue;
    if (idx.is_mean_flow()) {
      out.row(static_cast<Eigen::Index>(m)) = gb.row(s);
    } else {
      out.row(static_cast<Eigen::Index>(m)) = cdouble(0.0, 1.0 / idx.k.x) * gb.row(s);
    }
  }
  return out;
}

struct TopoSetup {
  TopoModelParams tp;
  ModeSet ms;
  TruthRecord rec;
  Eigen::MatrixXd states;  // dim x (N + 1)
};

TopoSetup topo_setup(Context& ctx) {
  const auto& cfg = ctx.cfg;
  TopoSetup s;
  s.tp = stage("model", [&] { return cfg.model.topo_params(); });
  s.ms = stage("model", [&] { return cfg.model.build_modeset(); });
  ctx.note(fmt::format("simulating layered model, K = {}, {} tracers, T = {}", s.tp.K, cfg.simulation.max_tracers(),
                       cfg.simulation.T));
  s.rec = stage("simulate", [&] {
    return simulate_topographic(s.tp, sim_config(cfg.simulation), cfg.simulation.spinup);
  });
  const TopoDynamics dyn(s.tp);
  s.states.resize(dyn.dim(), s.rec.flow.cols());
  for (Eigen::Index c = 0; c < s.rec.flow.cols(); ++c) s.states.col(c) = dyn.from_layered(s.rec.flow.col(c));
  ctx.stride = std::max<int>(1, static_cast<int>(std::ceil(static_cast<double>(s.rec.flow.cols() - 1) / (cfg.series_rows - 1))));
  write_truth_series(ctx, s.rec.times, s.rec.flow);

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"u", num(excess_kurtosis(s.states.row(0).transpose()))});
  for (int k = 1; k <= s.tp.K; ++k) {
    rows.push_back({fmt::format("re_psi{}", k), num(excess_kurtosis(s.states.row(2 * k - 1).transpose()))});
  }
  write_table(ctx.out.path("fig7.csv"), {"variable", "excess_kurtosis"}, rows);
  ctx.out.add("fig7.csv");
  return s;
}

struct LayeredScore {
  std::string filter;
  int L = 0;
  std::vector<RmseCorr> per_mode;
};

LayeredScore score_layered(Context& ctx, const std::string& filter, int L, const Eigen::MatrixXcd& est,
                           const Eigen::MatrixXcd& truth) {
  return {filter, L, per_mode_rmse_corr(est, truth, static_cast<Eigen::Index>(ctx.score_first(truth.cols())))};
}

Eigen::MatrixXcd run_topo_enkbf(Context& ctx, const TopoSetup& s, const TracerTrack& track, int kept,
                                const std::string& tag) {
  const TopoModelParams rp = kept == s.tp.K ? s.tp : reduced_model(s.tp, kept);
  const TopoDynamics dyn(rp);
  const EnsembleModel model = topographic_ensemble_model(dyn);
  // Climatological start from the truth statistics of the retained coordinates.
  const Eigen::MatrixXd z = s.states.topRows(dyn.dim());
  const Eigen::VectorXd mean = z.rowwise().mean();
  const Eigen::VectorXd sd = ((z.colwise() - mean).array().square().rowwise().mean()).sqrt();
  const Ensemble init = initial_ensemble(mean, sd.asDiagonal(), ctx.cfg.enkbf.members, ctx.cfg.enkbf.seed);
  EnkbfConfig ec;
  ec.sigma_x = ctx.cfg.simulation.sigma_x;
  ec.seed = ctx.cfg.enkbf.seed;
  const EnkbfSeries es = stage(tag, [&] { return run_enkbf(track, model, init, ec); });
  Eigen::MatrixXcd layered(2 * kept + 1, es.mean.cols());
  for (Eigen::Index c = 0; c < es.mean.cols(); ++c) layered.col(c) = dyn.to_layered(es.mean.col(c));
  return embed_layered(layered, build_layered_modeset(kept, true), s.ms);
}

Eigen::MatrixXcd run_lsm_filter(Context& ctx, const TracerTrack& track, const LsmParams& params, const ModeSet& ms,
                                const std::string& tag, const std::string& file) {
  const FilterSeries fs = stage(tag, [&] {
    return run_filter(track, params, ms, filter_config(ctx.cfg, FilterVariant::Full, 0));
  });
  const Eigen::MatrixXcd mean = fs.mean_complex();
  write_posterior(ctx, file, fs.dt, mean, fs.mode_variance());
  return mean;
}

Json layered_skill(const std::vector<LayeredScore>& scores, const ModeSet& ms, Bundle& out, const std::string& table) {
  Json skill = Json::object();
  std::vector<std::vector<std::string>> rows;
  for (const auto& sc : scores) {
    Json e;
    e["variant"] = sc.filter;
    e["L"] = sc.L;
    e["L_prime"] = 0;
    double rmse = 0.0, corr = 0.0;
    Json pm = Json::object();
    for (std::size_t m = 0; m < sc.per_mode.size(); ++m) {
      const auto label = layered_label(ms.mode(m));
      rmse += sc.per_mode[m].rmse;
      corr += sc.per_mode[m].corr;
      pm[label] = {{"rmse", sc.per_mode[m].rmse}, {"corr", sc.per_mode[m].corr}};
      rows.push_back({sc.filter, std::to_string(sc.L), label, num(sc.per_mode[m].rmse), num(sc.per_mode[m].corr)});
    }
    e["rmse"] = rmse / static_cast<double>(sc.per_mode.size());
    e["corr"] = corr / static_cast<double>(sc.per_mode.size());
    e["per_mode"] = pm;
    skill[skill_key(sc.filter, sc.L, 0)] = e;
  }
  write_table(out.path(table), {"filter", "L", "mode", "rmse", "corr"}, rows);
  out.add(table);
  return skill;
}

ModeSet data_driven_modeset(const ExperimentConfig& cfg) {
  return build_gb_modeset(cfg.enkbf.data_driven_kmax, MeanFlow::X);
}

Json run_topographic_compare(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const TopoSetup s = topo_setup(ctx);
  const int kept = cfg.enkbf.reduced_modes;
  const ModeSet reduced_ms = build_layered_modeset(kept, true);
  const ModeSet dd_ms = data_driven_modeset(cfg);
  const double dt = cfg.simulation.dt;
  const auto& Ls = cfg.simulation.tracers;

  // Filter 4 is calibrated from the retained truth signals only.
  const LsmParams reduced_params = stage("calibrate reduced", [&] {
    return calibrate_from_series(restrict_layered(s.rec.flow, s.ms, reduced_ms), reduced_ms, dt,
                                 estimation_config(cfg, reduced_ms));
  });
  std::optional<LsmParams> all_params;
  if (!cfg.estimation.enabled) {
    all_params = stage("calibrate all", [&] {
      return calibrate_from_series(s.rec.flow, s.ms, dt, estimation_config(cfg, s.ms));
    });
  }

  std::vector<std::vector<LayeredScore>> per_cell(Ls.size());
  parallel_for(Ls.size(), ctx.workers, [&](std::size_t i) {
    const int L = Ls[i];
    const TracerTrack track = s.rec.tracers.head(L);
    auto& out = per_cell[i];
    if (cfg.enkbf.enabled) {
      ctx.note(fmt::format("L = {}: EnKBF, all modes", L));
      out.push_back(score_layered(ctx, "enkbf_all", L,
                                  run_topo_enkbf(ctx, s, track, s.tp.K, fmt::format("enkbf all L={}", L)), s.rec.flow));
      ctx.note(fmt::format("L = {}: EnKBF, {} modes", L, kept));
      out.push_back(score_layered(ctx, "enkbf_reduced", L,
                                  run_topo_enkbf(ctx, s, track, kept, fmt::format("enkbf reduced L={}", L)),
                                  s.rec.flow));
    }
    LsmParams params_all;
    if (all_params) {
      params_all = *all_params;
    } else {
      ctx.note(fmt::format("L = {}: estimating layered LSM", L));
      params_all = stage(fmt::format("estimate layered L={}", L), [&] {
        return estimate_parameters_iterative(track, s.ms, cfg.simulation.sigma_x, estimation_config(cfg, s.ms)).params;
      });
    }
    ctx.note(fmt::format("L = {}: LSM filters", L));
    out.push_back(score_layered(ctx, "lsm_all", L,
                                run_lsm_filter(ctx, track, params_all, s.ms, fmt::format("filter lsm all L={}", L),
                                               fmt::format("posterior_lsm_all_L{}.csv", L)),
                                s.rec.flow));
    const Eigen::MatrixXcd red = run_lsm_filter(ctx, track, reduced_params, reduced_ms,
                                                fmt::format("filter lsm reduced L={}", L),
                                                fmt::format("posterior_lsm_reduced_L{}.csv", L));
    out.push_back(score_layered(ctx, "lsm_reduced", L, embed_layered(red, reduced_ms, s.ms), s.rec.flow));
    if (cfg.enkbf.data_driven) {
      ctx.note(fmt::format("L = {}: data-driven LSM", L));
      const LsmParams dd = stage(fmt::format("estimate data-driven L={}", L), [&] {
        return estimate_parameters_iterative(track, dd_ms, cfg.simulation.sigma_x, estimation_config(cfg, dd_ms)).params;
      });
      const Eigen::MatrixXcd gb = run_lsm_filter(ctx, track, dd, dd_ms, fmt::format("filter data-driven L={}", L),
                                                 fmt::format("posterior_lsm_data_driven_L{}.csv", L));
      out.push_back(score_layered(ctx, "lsm_data_driven", L, gb_to_layered_series(gb, dd_ms, s.ms), s.rec.flow));
    }
  });

  std::vector<LayeredScore> all;
  for (auto& c : per_cell) all.insert(all.end(), c.begin(), c.end());
  return layered_skill(all, s.ms, ctx.out, "fig8.csv");
}

Json run_data_driven(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const TopoSetup s = topo_setup(ctx);
  const ModeSet dd_ms = data_driven_modeset(cfg);
  const auto& Ls = cfg.simulation.tracers;
  std::vector<LayeredScore> scores(Ls.size());
  parallel_for(Ls.size(), ctx.workers, [&](std::size_t i) {
    const int L = Ls[i];
    const TracerTrack track = s.rec.tracers.head(L);
    ctx.note(fmt::format("L = {}: estimating data-driven LSM ({} modes)", L, dd_ms.size()));
    const LsmParams dd = stage(fmt::format("estimate data-driven L={}", L), [&] {
      return estimate_parameters_iterative(track, dd_ms, cfg.simulation.sigma_x, estimation_config(cfg, dd_ms)).params;
    });
    write_json(ctx.out.path(fmt::format("params_L{}.json", L)), params_to_json(dd, dd_ms));
    ctx.out.add(fmt::format("params_L{}.json", L));
    std::vector<std::vector<std::string>> spec;
    for (std::size_t m = 0; m < dd_ms.size(); ++m) {
      const auto& idx = dd_ms.mode(m);
      if (idx.is_mean_flow()) continue;
      spec.push_back({std::to_string(idx.k.x), std::to_string(idx.k.y), num(mode_energy(dd.modes[m]))});
    }
    const std::string sname = fmt::format("figs1_L{}.csv", L);
    write_table(ctx.out.path(sname), {"kx", "ky", "energy"}, spec);
    ctx.out.add(sname);
    const Eigen::MatrixXcd gb = run_lsm_filter(ctx, track, dd, dd_ms, fmt::format("filter data-driven L={}", L),
                                               fmt::format("posterior_lsm_data_driven_L{}.csv", L));
    scores[i] = score_layered(ctx, "lsm_data_driven", L, gb_to_layered_series(gb, dd_ms, s.ms), s.rec.flow);
  });
  return layered_skill(scores, s.ms, ctx.out, "figs3.csv");
}

}  // namespace

Json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, const ProgressLog& log) {
  validate_config(cfg, true);
  ensure_directory(out_dir);
  {
    std::ofstream cf(out_dir + "/config.ini", std::ios::binary | std::ios::trunc);
    if (!cf) throw IoError("cannot write file: " + out_dir + "/config.ini");
    cf << cfg.source_text;
  }
  Json body;
  body["kind"] = "experiment";
  body["experiment"] = cfg.kind;
  body["version"] = kVersion;
  body["status"] = "incomplete";
  body["config_crc32"] = text_crc32(cfg.source_text);
  body["seeds"] = {{"simulation", cfg.simulation.seed},
                   {"filter", cfg.filter.seed},
                   {"estimation", cfg.estimation.seed},
                   {"enkbf", cfg.enkbf.seed},
                   {"topography", cfg.model.theta_seed}};
  Bundle bundle(out_dir, body);
  bundle.add("config.ini");
  bundle.commit("incomplete");

  Context ctx(cfg, bundle);
  ctx.workers = cfg.workers > 0 ? cfg.workers : default_worker_count();
  ctx.log = log;
  try {
    Json skill;
    if (cfg.kind == "gb_param_est") skill = run_param_est(ctx);
    else if (cfg.kind == "approx_filters") skill = run_approx_filters(ctx);
    else if (cfg.kind == "randomized_sweep") skill = run_randomized_sweep(ctx);
    else if (cfg.kind == "topographic_compare") skill = run_topographic_compare(ctx);
    else skill = run_data_driven(ctx);
    write_json(bundle.path("skill.json"), skill);
    bundle.add("skill.json");
    bundle.commit("complete");
    return skill;
  } catch (const StageError& e) {
    bundle.commit("failed", e.what());
    throw;
  } catch (const std::exception& e) {
    bundle.commit("failed", std::string("output: ") + e.what());
    throw StageError("output", e.what());
  }
}

}  // namespace lagda
