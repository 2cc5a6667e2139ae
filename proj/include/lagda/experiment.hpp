#pragma once

// Configuration-driven experiment bundles. A run writes into one directory:
// manifest.json (status, config hash, seeds, file checksums), config.ini,
// skill.json (scores keyed by variant, L and L'), figure tables named
// figN*.csv and per-cell posterior series.

#include "lagda/config.hpp"
#include "lagda/io.hpp"

#include <functional>
#include <string>

namespace lagda {

using ProgressLog = std::function<void(const std::string&)>;

/// Runs the configured experiment into `out_dir` and returns the aggregate
/// skill JSON. Failures are rethrown as StageError after the manifest is
/// rewritten with status "failed".
Json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                    const ProgressLog& log = {});

/// Key used in skill.json, e.g. "variant=full,L=12,Lp=0".
std::string skill_key(const std::string& variant, int L, int L_prime);

/// CRC-32 of a string, lowercase hex.
std::string text_crc32(const std::string& text);

}  // namespace lagda
