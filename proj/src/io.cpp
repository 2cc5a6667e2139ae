#include "lagda/io.hpp"

#include "lagda/error.hpp"

#include <boost/crc.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lagda {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  return out;
}

Json vec2_json(const Eigen::Vector2d& v) { return Json::array({v[0], v[1]}); }

Eigen::Vector2d vec2_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::vector<int> sample_columns(Eigen::Index cols, int stride) {
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  std::vector<int> out;
  for (Eigen::Index c = 0; c < cols; c += stride) out.push_back(static_cast<int>(c));
  if (cols > 0 && out.back() != cols - 1) out.push_back(static_cast<int>(cols - 1));
  return out;
}

}  // namespace

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw IoError("missing CSV column '" + name + "'");
}

std::string format_double(double x) { return fmt::format("{:.17e}", x); }

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& data) {
  if (static_cast<Eigen::Index>(header.size()) != data.cols()) {
    throw InvalidArgument("CSV header has " + std::to_string(header.size()) + " names for " +
                          std::to_string(data.cols()) + " columns");
  }
  fmt::memory_buffer buf;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buf.push_back(',');
    fmt::format_to(std::back_inserter(buf), "{}", header[i]);
  }
  buf.push_back('\n');
  auto out = open_out(path);
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      if (c) buf.push_back(',');
      fmt::format_to(std::back_inserter(buf), "{:.17e}", data(r, c));
    }
    buf.push_back('\n');
    if (buf.size() > (1 << 20)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  auto out = open_out(path);
  auto line = [&](const std::vector<std::string>& cells) {
    if (cells.size() != header.size()) throw InvalidArgument("table row width does not match header: " + path);
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!out) throw IoError("write failed: " + path);
}

CsvTable read_csv(const std::string& path) {
  auto in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV file: " + path);
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) t.header.push_back(name);
  }
  const auto cols = static_cast<Eigen::Index>(t.header.size());
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const char* p = line.c_str();
    for (Eigen::Index c = 0; c < cols; ++c) {
      char* end = nullptr;
      values.push_back(std::strtod(p, &end));
      if (end == p) throw IoError(fmt::format("{}: bad number in row {}", path, rows + 1));
      p = end;
      if (c + 1 < cols) {
        if (*p != ',') throw IoError(fmt::format("{}: row {} has too few fields", path, rows + 1));
        ++p;
      }
    }
    if (*p != '\0' && *p != '\r') throw IoError(fmt::format("{}: row {} has too many fields", path, rows + 1));
    ++rows;
  }
  t.data.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) t.data(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  }
  return t;
}

std::string file_crc32(const std::string& path) {
  auto in = open_in(path);
  boost::crc_32_type crc;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    crc.process_bytes(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return fmt::format("{:08x}", crc.checksum());
}

Json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
}

void write_json(const std::string& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

void write_manifest(const std::string& dir, Json body, const std::vector<std::string>& files) {
  Json list = Json::array();
  for (const auto& name : files) {
    const std::string path = join(dir, name);
    list.push_back({{"name", name},
                    {"bytes", static_cast<std::uint64_t>(fs::file_size(path))},
                    {"crc32", file_crc32(path)}});
  }
  body["files"] = list;
  write_json(join(dir, kManifestName), body);
}

Json read_manifest(const std::string& dir) { return read_json(join(dir, kManifestName)); }

std::vector<std::string> verify_manifest(const std::string& dir) {
  const Json m = read_manifest(dir);
  std::vector<std::string> problems;
  if (!m.contains("files")) {
    problems.push_back("manifest lists no files");
    return problems;
  }
  for (const auto& f : m.at("files")) {
    const std::string name = f.at("name").get<std::string>();
    const std::string path = join(dir, name);
    if (!fs::exists(path)) {
      problems.push_back("missing file: " + name);
      continue;
    }
    const std::string crc = file_crc32(path);
    if (crc != f.at("crc32").get<std::string>()) {
      problems.push_back("checksum mismatch: " + name + " (manifest " + f.at("crc32").get<std::string>() +
                         ", actual " + crc + ")");
    }
  }
  return problems;
}

Json mode_table_json(const ModeSet& ms) {
  Json arr = Json::array();
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto& idx = ms.mode(m);
    arr.push_back({{"index", m}, {"kx", idx.k.x}, {"ky", idx.k.y}, {"kind", to_string(idx.kind)},
                   {"conj", ms.conj_pair(m)}});
  }
  return arr;
}

Json params_to_json(const LsmParams& params, const ModeSet& ms) {
  Json modes = Json::array();
  for (std::size_t m = 0; m < ms.size(); ++m) {
    const auto& idx = ms.mode(m);
    if (idx.is_mean_flow()) continue;
    const auto& p = params.modes.at(m);
    modes.push_back({{"kx", idx.k.x},
                     {"ky", idx.k.y},
                     {"kind", to_string(idx.kind)},
                     {"d", p.d},
                     {"omega", p.omega},
                     {"f_re", p.f.real()},
                     {"f_im", p.f.imag()},
                     {"sigma", p.sigma}});
  }
  const auto& mf = params.mean_flow;
  Json j;
  j["modes"] = modes;
  j["mean_flow"] = {{"damping", vec2_json(mf.damping)},
                    {"rotation", vec2_json(mf.rotation)},
                    {"forcing", vec2_json(mf.forcing)},
                    {"noise", Json::array({vec2_json(mf.noise.row(0).transpose()),
                                           vec2_json(mf.noise.row(1).transpose())})}};
  return j;
}

LsmParams params_from_json(const Json& j, const ModeSet& ms) {
  LsmParams params = default_initial_guess(ms);
  try {
    std::vector<bool> seen(ms.size(), false);
    for (const auto& e : j.at("modes")) {
      const Wavenumber k{e.at("kx").get<int>(), e.at("ky").get<int>()};
      const ModeKind kind = mode_kind_from_string(e.at("kind").get<std::string>());
      const int m = ms.find(k, kind);
      if (m < 0) {
        throw IoError(fmt::format("parameter entry ({}, {}, {}) is not in the mode set", k.x, k.y,
                                  to_string(kind)));
      }
      auto& p = params.modes[static_cast<std::size_t>(m)];
      p.d = e.at("d").get<double>();
      p.omega = e.at("omega").get<double>();
      p.f = {e.at("f_re").get<double>(), e.at("f_im").get<double>()};
      p.sigma = e.at("sigma").get<double>();
      seen[static_cast<std::size_t>(m)] = true;
    }
    for (std::size_t m = 0; m < ms.size(); ++m) {
      if (!ms.mode(m).is_mean_flow() && !seen[m]) {
        throw IoError(fmt::format("parameters missing for mode ({}, {}, {})", ms.mode(m).k.x,
                                  ms.mode(m).k.y, to_string(ms.mode(m).kind)));
      }
    }
    if (j.contains("mean_flow")) {
      const auto& mf = j.at("mean_flow");
      params.mean_flow.damping = vec2_from(mf.at("damping"));
      params.mean_flow.rotation = vec2_from(mf.at("rotation"));
      params.mean_flow.forcing = vec2_from(mf.at("forcing"));
      params.mean_flow.noise.row(0) = vec2_from(mf.at("noise").at(0)).transpose();
      params.mean_flow.noise.row(1) = vec2_from(mf.at("noise").at(1)).transpose();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed parameter JSON: ") + e.what());
  }
  validate(params, ms);
  return params;
}

std::vector<std::string> complex_series_header(int modes) {
  std::vector<std::string> h{"t"};
  for (int m = 0; m < modes; ++m) {
    h.push_back(fmt::format("m{}_re", m));
    h.push_back(fmt::format("m{}_im", m));
  }
  return h;
}

void write_complex_posterior(const std::string& path, double dt, const Eigen::MatrixXcd& mean,
                             const Eigen::MatrixXd& variance, int stride) {
  const auto cols = sample_columns(mean.cols(), stride);
  const auto k = mean.rows();
  std::vector<std::string> header{"t"};
  for (Eigen::Index m = 0; m < k; ++m) {
    header.push_back(fmt::format("m{}_mean_re", m));
    header.push_back(fmt::format("m{}_mean_im", m));
    header.push_back(fmt::format("m{}_var", m));
  }
  Eigen::MatrixXd data(static_cast<Eigen::Index>(cols.size()), 1 + 3 * k);
  for (std::size_t r = 0; r < cols.size(); ++r) {
    const int c = cols[r];
    data(r, 0) = c * dt;
    for (Eigen::Index m = 0; m < k; ++m) {
      data(r, 1 + 3 * m) = mean(m, c).real();
      data(r, 2 + 3 * m) = mean(m, c).imag();
      data(r, 3 + 3 * m) = variance(m, c);
    }
  }
  write_csv(path, header, data);
}

void write_real_posterior(const std::string& path, double dt, const Eigen::MatrixXd& mean,
                          const Eigen::MatrixXd& variance, int stride) {
  const auto cols = sample_columns(mean.cols(), stride);
  const auto n = mean.rows();
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < n; ++i) {
    header.push_back(fmt::format("z{}_mean", i));
    header.push_back(fmt::format("z{}_var", i));
  }
  Eigen::MatrixXd data(static_cast<Eigen::Index>(cols.size()), 1 + 2 * n);
  for (std::size_t r = 0; r < cols.size(); ++r) {
    const int c = cols[r];
    data(r, 0) = c * dt;
    for (Eigen::Index i = 0; i < n; ++i) {
      data(r, 1 + 2 * i) = mean(i, c);
      data(r, 2 + 2 * i) = variance(i, c);
    }
  }
  write_csv(path, header, data);
}

void save_truth(const std::string& dir, const TruthRecord& rec, const ModeSet& ms,
                const LsmParams* params, const std::string& config_text, const Json& extra) {
  ensure_directory(dir);
  const auto n1 = rec.flow.cols();
  const auto k = rec.flow.rows();
  std::vector<std::string> files;

  write_csv(join(dir, "times.csv"), {"t"}, rec.times);
  files.push_back("times.csv");

  Eigen::MatrixXd flow(n1, 1 + 2 * k);
  flow.col(0) = rec.times;
  for (Eigen::Index m = 0; m < k; ++m) {
    flow.col(1 + 2 * m) = rec.flow.row(m).real().transpose();
    flow.col(2 + 2 * m) = rec.flow.row(m).imag().transpose();
  }
  write_csv(join(dir, "flow.csv"), complex_series_header(static_cast<int>(k)), flow);
  files.push_back("flow.csv");

  const int l_count = rec.tracers.tracer_count();
  std::vector<std::string> ph{"t"};
  std::vector<std::string> ih;
  for (int l = 0; l < l_count; ++l) {
    ph.push_back(fmt::format("x{}", l));
    ph.push_back(fmt::format("y{}", l));
    ih.push_back(fmt::format("dx{}", l));
    ih.push_back(fmt::format("dy{}", l));
  }
  Eigen::MatrixXd pos(rec.tracers.positions.cols(), 1 + 2 * l_count);
  pos.col(0) = rec.times;
  pos.rightCols(2 * l_count) = rec.tracers.positions.transpose();
  write_csv(join(dir, "positions.csv"), ph, pos);
  files.push_back("positions.csv");
  write_csv(join(dir, "increments.csv"), ih, rec.tracers.increments.transpose());
  files.push_back("increments.csv");

  if (rec.noise.size() > 0) {
    std::vector<std::string> nh;
    for (Eigen::Index i = 0; i < rec.noise.rows(); ++i) nh.push_back(fmt::format("xi{}", i));
    write_csv(join(dir, "noise.csv"), nh, rec.noise.transpose());
    files.push_back("noise.csv");
  }
  write_json(join(dir, "modes.json"), mode_table_json(ms));
  files.push_back("modes.json");
  if (params) {
    write_json(join(dir, "params.json"), params_to_json(*params, ms));
    files.push_back("params.json");
  }
  if (!config_text.empty()) {
    auto out = open_out(join(dir, "config.ini"));
    out << config_text;
    files.push_back("config.ini");
  }

  const auto& c = rec.config;
  Json body;
  body["kind"] = "truth";
  body["version"] = kVersion;
  body["status"] = "complete";
  body["model"] = rec.model;
  body["seed"] = c.seed;
  body["simulation"] = {{"dt", c.dt},
                        {"T", c.T},
                        {"sigma_x", c.sigma_x},
                        {"tracers", c.tracers},
                        {"stationary_start", c.stationary_start},
                        {"record_noise", c.record_noise}};
  for (const auto& [key, value] : extra.items()) body[key] = value;
  write_manifest(dir, body, files);
}

TruthBundle load_truth(const std::string& dir) {
  TruthBundle b;
  b.manifest = read_manifest(dir);
  const auto problems = verify_manifest(dir);
  if (!problems.empty()) throw IoError("truth bundle " + dir + " failed verification: " + problems.front());
  auto& rec = b.record;
  try {
    const auto& sim = b.manifest.at("simulation");
    rec.model = b.manifest.at("model").get<std::string>();
    rec.config.seed = b.manifest.at("seed").get<std::uint64_t>();
    rec.config.dt = sim.at("dt").get<double>();
    rec.config.T = sim.at("T").get<double>();
    rec.config.sigma_x = sim.at("sigma_x").get<double>();
    rec.config.tracers = sim.at("tracers").get<int>();
    rec.config.stationary_start = sim.at("stationary_start").get<bool>();
    rec.config.record_noise = sim.at("record_noise").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed truth manifest in " + dir + ": " + e.what());
  }

  rec.times = read_csv(join(dir, "times.csv")).data.col(0);
  const auto flow = read_csv(join(dir, "flow.csv"));
  const Eigen::Index k = (flow.data.cols() - 1) / 2;
  rec.flow.resize(k, flow.data.rows());
  for (Eigen::Index m = 0; m < k; ++m) {
    rec.flow.row(m).real() = flow.data.col(1 + 2 * m).transpose();
    rec.flow.row(m).imag() = flow.data.col(2 + 2 * m).transpose();
  }
  const auto pos = read_csv(join(dir, "positions.csv"));
  rec.tracers.dt = rec.config.dt;
  rec.tracers.positions = pos.data.rightCols(pos.data.cols() - 1).transpose();
  rec.tracers.increments = read_csv(join(dir, "increments.csv")).data.transpose();
  if (fs::exists(join(dir, "noise.csv"))) rec.noise = read_csv(join(dir, "noise.csv")).data.transpose();
  if (rec.tracers.positions.rows() != 2 * rec.config.tracers ||
      rec.tracers.increments.cols() + 1 != rec.tracers.positions.cols() ||
      rec.times.size() != rec.flow.cols() || rec.flow.cols() != rec.tracers.positions.cols()) {
    throw IoError("truth bundle " + dir + " has inconsistent series lengths");
  }
  rec.config.initial_flow = rec.flow.col(0);
  rec.config.initial_tracers.clear();
  for (int l = 0; l < rec.config.tracers; ++l) {
    rec.config.initial_tracers.emplace_back(rec.tracers.positions(2 * l, 0), rec.tracers.positions(2 * l + 1, 0));
  }
  if (fs::exists(join(dir, "config.ini"))) {
    auto in = open_in(join(dir, "config.ini"));
    std::stringstream ss;
    ss << in.rdbuf();
    b.config_text = ss.str();
  }
  return b;
}

}  // namespace lagda
