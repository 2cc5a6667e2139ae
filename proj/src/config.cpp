#include "lagda/config.hpp"

#include "lagda/error.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lagda {

namespace pt = boost::property_tree;

MeanFlow mean_flow_from_string(const std::string& s) {
  if (s == "none") return MeanFlow::None;
  if (s == "x") return MeanFlow::X;
  if (s == "xy") return MeanFlow::XY;
  throw ConfigError("mean_flow must be none, x or xy (got '" + s + "')");
}

std::string to_string(MeanFlow mf) {
  switch (mf) {
    case MeanFlow::None: return "none";
    case MeanFlow::X: return "x";
    case MeanFlow::XY: return "xy";
  }
  return "none";
}

ModeSet ModelSpec::build_modeset() const {
  ModeSet ms;
  if (family == "gb") {
    ms = build_gb_modeset(kmax, mean_flow);
  } else if (family == "sw") {
    ms = build_sw_modeset(kmax, rossby);
  } else if (family == "layered" || family == "topographic") {
    ms = build_layered_modeset(kmax, true);
  } else {
    throw ConfigError("unknown model family '" + family + "'");
  }
  return normalized ? lagda::normalized(ms) : ms;
}

LsmParams ModelSpec::true_params(const ModeSet& ms) const {
  if (family == "topographic") throw ConfigError("the topographic family has no spectrum LSM");
  SpectrumModel sm = spectrum;
  sm.rossby = rossby;
  return spectrum_params(ms, sm);
}

TopoModelParams ModelSpec::topo_params() const {
  TopoModelParams tp = regime_params(regime, kmax, theta_seed);
  tp.damping = Eigen::VectorXd::Constant(kmax, topo_damping);
  tp.damping_u = topo_damping;
  tp.beta = beta;
  tp.p = topo_power;
  tp.H1 = H1;
  tp.H2 = H2;
  tp.topography = Eigen::VectorXcd();
  tp.topography = tp.h();
  return tp;
}

int SimulationSpec::max_tracers() const {
  return tracers.empty() ? 0 : *std::max_element(tracers.begin(), tracers.end());
}

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"experiment", {"kind", "output", "workers", "series_rows"}},
      {"model",
       {"family", "kmax", "mean_flow", "rossby", "normalized", "d", "nu", "E0", "k0", "alpha",
        "gravity_energy_ratio", "regime", "beta", "p", "H1", "H2", "damping", "theta_seed"}},
      {"simulation", {"dt", "T", "sigma_x", "seed", "tracers", "spinup", "record_noise"}},
      {"filter", {"variants", "L_prime", "rescale", "jitter", "checkpoint_every", "score_start", "seed"}},
      {"estimation",
       {"enabled", "eps", "max_iter", "max_lag_time", "samples", "seed", "init_d", "init_sigma"}},
      {"enkbf", {"enabled", "members", "seed", "reduced_modes", "data_driven", "data_driven_kmax"}},
  };
  return s;
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (!quoted && line[i] == '#') return line.substr(0, i);
  }
  return line;
}

std::string unquote(std::string v) {
  boost::algorithm::trim(v);
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
    v = v.substr(1, v.size() - 2);
  }
  return v;
}

class Reader {
 public:
  Reader(const pt::ptree& tree) : tree_(tree) {}

  bool has(const std::string& sec, const std::string& key) const {
    return tree_.get_child_optional(pt::ptree::path_type(sec + "/" + key, '/')).has_value();
  }
  std::string raw(const std::string& sec, const std::string& key) const {
    return unquote(tree_.get<std::string>(pt::ptree::path_type(sec + "/" + key, '/')));
  }
  void str(const std::string& sec, const std::string& key, std::string& out) const {
    if (has(sec, key)) out = raw(sec, key);
  }
  template <typename T>
  void num(const std::string& sec, const std::string& key, T& out) const {
    if (!has(sec, key)) return;
    const std::string v = raw(sec, key);
    try {
      std::size_t pos = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out = std::stod(v, &pos);
      } else if constexpr (std::is_unsigned_v<T>) {
        out = static_cast<T>(std::stoull(v, &pos));
      } else {
        out = static_cast<T>(std::stoll(v, &pos));
      }
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("invalid number for '" + sec + "." + key + "': '" + v + "'");
    }
  }
  void flag(const std::string& sec, const std::string& key, bool& out) const {
    if (!has(sec, key)) return;
    const std::string v = boost::algorithm::to_lower_copy(raw(sec, key));
    if (v == "true" || v == "1" || v == "yes") out = true;
    else if (v == "false" || v == "0" || v == "no") out = false;
    else throw ConfigError("invalid boolean for '" + sec + "." + key + "': '" + v + "'");
  }
  std::vector<std::string> list(const std::string& sec, const std::string& key) const {
    std::string v = raw(sec, key);
    if (!v.empty() && v.front() == '[') {
      if (v.back() != ']') throw ConfigError("unterminated list for '" + sec + "." + key + "'");
      v = v.substr(1, v.size() - 2);
    }
    std::vector<std::string> parts;
    boost::algorithm::split(parts, v, boost::algorithm::is_any_of(","));
    std::vector<std::string> out;
    for (auto& p : parts) {
      p = unquote(p);
      if (!p.empty()) out.push_back(p);
    }
    return out;
  }
  void int_list(const std::string& sec, const std::string& key, std::vector<int>& out) const {
    if (!has(sec, key)) return;
    out.clear();
    for (const auto& p : list(sec, key)) {
      try {
        std::size_t pos = 0;
        out.push_back(std::stoi(p, &pos));
        if (pos != p.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("invalid integer '" + p + "' in '" + sec + "." + key + "'");
      }
    }
  }

 private:
  const pt::ptree& tree_;
};

}  // namespace

ExperimentConfig parse_config_string(const std::string& text) {
  std::stringstream cleaned;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) cleaned << strip_comment(line) << '\n';
  pt::ptree tree;
  try {
    pt::read_ini(cleaned, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) {
      if (body.empty()) throw ConfigError("unknown key '" + section + "' outside any section");
      throw ConfigError("unknown section '" + section + "'");
    }
    for (const auto& [key, value] : body) {
      (void)value;
      if (!it->second.count(key)) throw ConfigError("unknown key '" + section + "." + key + "'");
    }
  }

  const Reader r(tree);
  ExperimentConfig c;
  c.source_text = text;
  r.str("experiment", "kind", c.kind);
  r.str("experiment", "output", c.output);
  r.num("experiment", "workers", c.workers);
  r.num("experiment", "series_rows", c.series_rows);

  auto& m = c.model;
  r.str("model", "family", m.family);
  r.num("model", "kmax", m.kmax);
  if (r.has("model", "mean_flow")) m.mean_flow = mean_flow_from_string(r.raw("model", "mean_flow"));
  r.num("model", "rossby", m.rossby);
  r.flag("model", "normalized", m.normalized);
  r.num("model", "d", m.spectrum.d);
  r.num("model", "nu", m.spectrum.nu);
  r.num("model", "E0", m.spectrum.E0);
  r.num("model", "k0", m.spectrum.k0);
  r.num("model", "alpha", m.spectrum.alpha);
  r.num("model", "gravity_energy_ratio", m.spectrum.gravity_energy_ratio);
  if (r.has("model", "regime")) {
    const std::string reg = r.raw("model", "regime");
    if (reg == "I" || reg == "1") m.regime = Regime::I;
    else if (reg == "II" || reg == "2") m.regime = Regime::II;
    else throw ConfigError("model.regime must be I or II");
  }
  r.num("model", "beta", m.beta);
  r.num("model", "p", m.topo_power);
  r.num("model", "H1", m.H1);
  r.num("model", "H2", m.H2);
  r.num("model", "damping", m.topo_damping);
  r.num("model", "theta_seed", m.theta_seed);

  auto& s = c.simulation;
  r.num("simulation", "dt", s.dt);
  r.num("simulation", "T", s.T);
  r.num("simulation", "sigma_x", s.sigma_x);
  r.num("simulation", "seed", s.seed);
  r.int_list("simulation", "tracers", s.tracers);
  r.num("simulation", "spinup", s.spinup);
  r.flag("simulation", "record_noise", s.record_noise);

  auto& f = c.filter;
  if (r.has("filter", "variants")) {
    f.variants.clear();
    for (const auto& v : r.list("filter", "variants")) {
      try {
        f.variants.push_back(filter_variant_from_string(v));
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("filter.variants: ") + e.what());
      }
    }
  }
  r.int_list("filter", "L_prime", f.L_prime);
  r.flag("filter", "rescale", f.rescale);
  r.num("filter", "jitter", f.jitter);
  r.num("filter", "checkpoint_every", f.checkpoint_every);
  r.num("filter", "score_start", f.score_start);
  r.num("filter", "seed", f.seed);

  auto& e = c.estimation;
  r.flag("estimation", "enabled", e.enabled);
  r.num("estimation", "eps", e.eps);
  r.num("estimation", "max_iter", e.max_iter);
  r.num("estimation", "max_lag_time", e.max_lag_time);
  r.num("estimation", "samples", e.samples);
  r.num("estimation", "seed", e.seed);
  r.num("estimation", "init_d", e.init_d);
  r.num("estimation", "init_sigma", e.init_sigma);

  auto& n = c.enkbf;
  r.flag("enkbf", "enabled", n.enabled);
  r.num("enkbf", "members", n.members);
  r.num("enkbf", "seed", n.seed);
  r.num("enkbf", "reduced_modes", n.reduced_modes);
  r.flag("enkbf", "data_driven", n.data_driven);
  r.num("enkbf", "data_driven_kmax", n.data_driven_kmax);
  return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str());
}

void validate_config(const ExperimentConfig& c, bool require_kind) {
  if (require_kind) {
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
      throw ConfigError("experiment.kind must be one of gb_param_est, approx_filters, randomized_sweep, "
                        "topographic_compare, data_driven_lsm (got '" + c.kind + "')");
    }
  }
  const auto& m = c.model;
  if (m.family != "gb" && m.family != "sw" && m.family != "layered" && m.family != "topographic") {
    throw ConfigError("model.family must be gb, sw, layered or topographic");
  }
  if (m.kmax < 1) throw ConfigError("model.kmax must be >= 1");
  if (!(m.rossby > 0.0)) throw ConfigError("model.rossby must be positive");
  if (!(m.spectrum.d > 0.0) || m.spectrum.nu < 0.0) throw ConfigError("model.d must be positive and model.nu >= 0");
  if (!(m.topo_damping > 0.0)) throw ConfigError("model.damping must be positive");
  const auto& s = c.simulation;
  if (!(s.dt > 0.0)) throw ConfigError("simulation.dt must be positive");
  if (!(s.T >= s.dt)) throw ConfigError("simulation.T must be >= simulation.dt");
  if (!(s.sigma_x > 0.0)) throw ConfigError("simulation.sigma_x must be positive");
  if (s.tracers.empty()) throw ConfigError("simulation.tracers must list at least one count");
  for (int l : s.tracers) {
    if (l < 1) throw ConfigError("simulation.tracers entries must be >= 1");
  }
  if (s.spinup < 0.0) throw ConfigError("simulation.spinup must be >= 0");
  const auto& f = c.filter;
  if (f.variants.empty()) throw ConfigError("filter.variants must not be empty");
  if (f.jitter < 0.0) throw ConfigError("filter.jitter must be >= 0");
  if (f.checkpoint_every < 1) throw ConfigError("filter.checkpoint_every must be >= 1");
  if (f.score_start < 0.0 || f.score_start >= 1.0) throw ConfigError("filter.score_start must lie in [0, 1)");
  for (int lp : f.L_prime) {
    if (lp < 1 || lp > s.max_tracers()) throw ConfigError("filter.L_prime entries must lie in [1, max tracers]");
  }
  const auto& e = c.estimation;
  if (!(e.eps > 0.0)) throw ConfigError("estimation.eps must be positive");
  if (e.max_iter < 1) throw ConfigError("estimation.max_iter must be >= 1");
  if (e.samples < 1) throw ConfigError("estimation.samples must be >= 1");
  if (!(e.init_d > 0.0) || e.init_sigma < 0.0) throw ConfigError("estimation.init_d must be positive");
  if (!(e.max_lag_time > 0.0)) throw ConfigError("estimation.max_lag_time must be positive");
  const auto& n = c.enkbf;
  if (n.members < 2) throw ConfigError("enkbf.members must be >= 2");
  if (m.family == "topographic" && (n.reduced_modes < 1 || n.reduced_modes > m.kmax)) throw ConfigError("enkbf.reduced_modes must lie in [1, kmax]");
  if (n.data_driven_kmax < 1) throw ConfigError("enkbf.data_driven_kmax must be >= 1");
  if (c.workers < 0) throw ConfigError("experiment.workers must be >= 0");
  if (c.series_rows < 2) throw ConfigError("experiment.series_rows must be >= 2");
  if (c.kind == "data_driven_lsm" && !e.enabled) {
    throw ConfigError("data_driven_lsm needs estimation.enabled = true");
  }
  if ((c.kind == "topographic_compare" || c.kind == "data_driven_lsm") && m.family != "topographic") {
    throw ConfigError(c.kind + " needs model.family = topographic");
  }
  if ((c.kind == "gb_param_est" || c.kind == "approx_filters" || c.kind == "randomized_sweep") &&
      m.family == "topographic") {
    throw ConfigError(c.kind + " needs a linear model family (gb, sw or layered)");
  }
  if (c.kind == "randomized_sweep" && f.L_prime.empty()) {
    throw ConfigError("randomized_sweep needs filter.L_prime");
  }
}

}  // namespace lagda
