#pragma once

// Experiment configuration: a sectioned key = value text file
//
//   [experiment]
//   kind = "gb_param_est"
//   [simulation]
//   tracers = [2, 12, 60]
//
// Strings may be quoted, lists use brackets, '#' starts a comment. Every key
// is checked against the schema below; unknown keys raise ConfigError.

#include "lagda/filter.hpp"
#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"
#include "lagda/topographic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lagda {

struct ModelSpec {
  /// gb | sw | layered | topographic
  std::string family = "gb";
  int kmax = 3;
  MeanFlow mean_flow = MeanFlow::None;
  double rossby = 1.0;
  bool normalized = false;
  SpectrumModel spectrum;
  // Layered topographic model.
  Regime regime = Regime::I;
  double beta = 1.0;
  double topo_power = 1.0;
  double H1 = 1.0;
  double H2 = 0.5;
  double topo_damping = 0.0125;
  std::uint64_t theta_seed = 7;

  /// Mode set of the truth model (layered set for the topographic family).
  ModeSet build_modeset() const;
  /// Energy-spectrum LSM (not defined for the topographic family).
  LsmParams true_params(const ModeSet& ms) const;
  TopoModelParams topo_params() const;
};

struct SimulationSpec {
  double dt = 0.002;
  double T = 10.0;
  double sigma_x = 0.25;
  std::uint64_t seed = 1;
  std::vector<int> tracers{10};
  double spinup = 0.0;
  bool record_noise = false;

  int max_tracers() const;
};

struct FilterSpec {
  std::vector<FilterVariant> variants{FilterVariant::Full};
  std::vector<int> L_prime;
  bool rescale = true;
  double jitter = 1e-10;
  int checkpoint_every = 100;
  double score_start = 0.5;
  std::uint64_t seed = 1;
};

struct EstimationSpec {
  bool enabled = true;
  double eps = 1e-2;
  int max_iter = 10;
  double max_lag_time = 20.0;
  int samples = 1;
  std::uint64_t seed = 11;
  double init_d = 1.0;
  double init_sigma = 1.0;
};

struct EnkbfSpec {
  bool enabled = true;
  int members = 500;
  std::uint64_t seed = 3;
  int reduced_modes = 2;
  bool data_driven = false;
  int data_driven_kmax = 6;
};

struct ExperimentConfig {
  std::string kind;
  std::string output;
  int workers = 0;  // 0: environment default
  /// Upper bound on rows in per-run series CSVs (series are subsampled).
  int series_rows = 1001;
  ModelSpec model;
  SimulationSpec simulation;
  FilterSpec filter;
  EstimationSpec estimation;
  EnkbfSpec enkbf;
  std::string source_text;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"gb_param_est", "approx_filters", "randomized_sweep",
                                              "topographic_compare", "data_driven_lsm"};
  return kinds;
}

ExperimentConfig parse_config_string(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
/// Semantic checks; `require_kind` demands a valid experiment kind.
void validate_config(const ExperimentConfig& cfg, bool require_kind);

MeanFlow mean_flow_from_string(const std::string& s);
std::string to_string(MeanFlow mf);

}  // namespace lagda
