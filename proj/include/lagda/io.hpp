#pragma once

// On-disk formats. Series go to CSV with every number printed as %.17e (the
// text round-trips to the identical double); metadata goes to a JSON
// manifest that lists every data file with its CRC-32.

#include "lagda/lsm.hpp"
#include "lagda/modes.hpp"
#include "lagda/simulate.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <string>
#include <vector>

namespace lagda {

using Json = nlohmann::ordered_json;

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kVersion = "0.1.0";

struct CsvTable {
  std::vector<std::string> header;
  /// One row per record.
  Eigen::MatrixXd data;

  /// Index of a named column; throws IoError if absent.
  int column(const std::string& name) const;
};

std::string format_double(double x);
/// Rows of `data` become CSV records under `header`.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& data);
CsvTable read_csv(const std::string& path);
/// Mixed text/number table; cells are written verbatim.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

/// Lowercase hex CRC-32 of the file contents.
std::string file_crc32(const std::string& path);

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& j);

/// Writes `body` plus a "files" list (name, bytes, crc32) for each named file
/// in `dir` to dir/manifest.json.
void write_manifest(const std::string& dir, Json body, const std::vector<std::string>& files);
/// Throws IoError naming dir/manifest.json when it is missing.
Json read_manifest(const std::string& dir);
/// Recomputes every listed checksum; returns one message per mismatch or
/// missing file (empty when the bundle is intact).
std::vector<std::string> verify_manifest(const std::string& dir);

Json params_to_json(const LsmParams& params, const ModeSet& ms);
/// Mode entries are matched by (kx, ky, kind); throws IoError on mismatch.
LsmParams params_from_json(const Json& j, const ModeSet& ms);

Json mode_table_json(const ModeSet& ms);

/// Header for interleaved complex series: t, m0_re, m0_im, m1_re, ...
std::vector<std::string> complex_series_header(int modes);

/// Posterior series: t, then per mode mean_re, mean_im, var. Only every
/// `stride`-th column (plus the last) is written.
void write_complex_posterior(const std::string& path, double dt, const Eigen::MatrixXcd& mean,
                             const Eigen::MatrixXd& variance, int stride = 1);
/// Real-coordinate variant: t, then per coordinate mean, var.
void write_real_posterior(const std::string& path, double dt, const Eigen::MatrixXd& mean,
                          const Eigen::MatrixXd& variance, int stride = 1);

struct TruthBundle {
  TruthRecord record;
  Json manifest;
  /// Experiment configuration text stored with the run.
  std::string config_text;
};

/// Writes times.csv, flow.csv, positions.csv, increments.csv, modes.json,
/// optionally noise.csv and params.json, then the manifest. `extra` is merged
/// into the manifest body.
void save_truth(const std::string& dir, const TruthRecord& rec, const ModeSet& ms,
                const LsmParams* params, const std::string& config_text, const Json& extra = {});
TruthBundle load_truth(const std::string& dir);

/// Creates `dir` (and parents) if needed.
void ensure_directory(const std::string& dir);

}  // namespace lagda
