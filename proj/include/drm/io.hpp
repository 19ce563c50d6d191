#pragma once

// Artifact formats.
//
// Tables are comma separated with one header line; every float is printed
// with 17 significant digits so values round-trip exactly. Structured
// records (manifest, reports, text checkpoints) are JSON.
//
// Binary checkpoint layout, all fields little-endian:
//
//   offset  size  field
//   0       8     magic "DRMCKPT1"
//   8       4     u32 format version (1)
//   12      4     u32 activation (0 relu, 1 smooth_sqrt, 2 identity)
//   16      8     f64 rho
//   24      4     i32 input_dim
//   28      4     i32 hidden_layers
//   32      4     i32 width
//   36      4     i32 output_dim
//   40      8     u64 seed
//   48      8     u64 epoch
//   56      8     u64 parameter count N
//   64      8*N   f64 parameters, flattened layer by layer (weights
//                 row-major, then bias)

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drm/diagnostics.hpp"
#include "drm/error.hpp"
#include "drm/network.hpp"
#include "drm/ntk.hpp"
#include "drm/trainer.hpp"

namespace drm {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void write_table(const std::filesystem::path& path, const Table& t) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path.string());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  Table t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::Io, path.string() + " has no header");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == t.header.size(), ErrorCode::Io, "ragged row in " + path.string());
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  Table t{{"epoch", "loss"}, {}};
  for (const auto& r : history) t.rows.push_back({static_cast<double>(r.epoch), r.loss});
  write_table(path, t);
}

inline std::vector<LossRecord> read_loss_history(const std::filesystem::path& path) {
  const Table t = read_table(path);
  require(t.header == std::vector<std::string>{"epoch", "loss"}, ErrorCode::Io, "unexpected loss history header");
  std::vector<LossRecord> out;
  for (const auto& r : t.rows) out.push_back({static_cast<long>(r[0]), r[1], 0.0, 0.0});
  return out;
}

inline void write_fields(const std::filesystem::path& path, const FieldGrid& g) {
  Table t;
  t.header = g.dim == 1 ? std::vector<std::string>{"x", "u", "u_x"} : std::vector<std::string>{"x", "y", "u", "u_x", "u_y"};
  if (g.u_yy) t.header.push_back("u_yy");
  for (Eigen::Index n = 0; n < g.size(); ++n) {
    std::vector<double> row;
    for (int j = 0; j < g.dim; ++j) row.push_back(g.points(j, n));
    row.push_back(g.u[n]);
    for (int j = 0; j < g.dim; ++j) row.push_back(g.grad(j, n));
    if (g.u_yy) row.push_back((*g.u_yy)[n]);
    t.rows.push_back(std::move(row));
  }
  write_table(path, t);
}

inline FieldGrid read_fields(const std::filesystem::path& path) {
  const Table t = read_table(path);
  FieldGrid g;
  require(!t.header.empty(), ErrorCode::Io, "empty field table");
  g.dim = t.header.size() >= 2 && t.header[1] == "y" ? 2 : 1;
  const bool has_uyy = t.header.back() == "u_yy";
  const Eigen::Index n = static_cast<Eigen::Index>(t.rows.size());
  g.points.resize(g.dim, n);
  g.u.resize(n);
  g.grad.resize(g.dim, n);
  if (has_uyy) g.u_yy = Eigen::VectorXd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < g.dim; ++j) g.points(j, i) = r[static_cast<std::size_t>(j)];
    g.u[i] = r[static_cast<std::size_t>(g.dim)];
    for (int j = 0; j < g.dim; ++j) g.grad(j, i) = r[static_cast<std::size_t>(g.dim + 1 + j)];
    if (has_uyy) (*g.u_yy)[i] = r.back();
  }
  g.resolution = g.dim == 1 ? static_cast<int>(n) : static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return g;
}

inline void write_spectrum(const std::filesystem::path& path, const Eigen::VectorXd& eigenvalues) {
  Table t{{"k", "lambda"}, {}};
  for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) t.rows.push_back({static_cast<double>(k + 1), eigenvalues[k]});
  write_table(path, t);
}

inline Eigen::VectorXd read_spectrum(const std::filesystem::path& path) {
  const Table t = read_table(path);
  require(t.header == std::vector<std::string>{"k", "lambda"}, ErrorCode::Io, "unexpected spectrum header");
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = t.rows[i][1];
  return v;
}

// ---- JSON records --------------------------------------------------------

inline nlohmann::json to_json(const NetworkConfig& c) {
  return {{"input_dim", c.input_dim},   {"hidden_layers", c.hidden_layers},   {"width", c.width},
          {"activation", c.activation.name()}, {"rho", c.activation.rho}, {"output_dim", c.output_dim}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.width = j.at("width").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>(), j.at("rho").get<double>());
  c.activation.rho = j.at("rho").get<double>();
  c.output_dim = j.at("output_dim").get<int>();
  return c;
}

inline nlohmann::json to_json(const FeatureMap& f) {
  return {{"kind", f.name()}, {"exponent", f.exponent}, {"identity_dim", f.identity_dim}};
}

inline FeatureMap feature_map_from_json(const nlohmann::json& j) {
  FeatureMap f;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "identity") f.kind = FeatureKind::Identity;
  else if (kind == "fourier1d") f.kind = FeatureKind::Fourier1D;
  else if (kind == "fourier2d_plus_identity") f.kind = FeatureKind::Fourier2DPlusIdentity;
  else throw Error(ErrorCode::Io, "unknown feature map kind '" + kind + "'");
  f.exponent = j.at("exponent").get<int>();
  f.identity_dim = j.at("identity_dim").get<int>();
  return f;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_interior", c.batch_interior},
          {"batch_boundary", c.batch_boundary},
          {"lr0", c.lr0},
          {"seed", c.seed},
          {"schedule", to_string(c.schedule)},
          {"sampling", to_string(c.sampling)},
          {"pool_interior", c.pool_interior},
          {"pool_boundary", c.pool_boundary},
          {"optimizer", to_string(c.optimizer)},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"history_stride", c.history_stride}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<long>();
  c.batch_interior = j.at("batch_interior").get<int>();
  c.batch_boundary = j.at("batch_boundary").get<int>();
  c.lr0 = j.at("lr0").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.schedule = parse_schedule(j.at("schedule").get<std::string>());
  c.sampling = parse_sampling(j.at("sampling").get<std::string>());
  c.pool_interior = j.at("pool_interior").get<int>();
  c.pool_boundary = j.at("pool_boundary").get<int>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.adam.beta1 = j.at("adam_beta1").get<double>();
  c.adam.beta2 = j.at("adam_beta2").get<double>();
  c.adam.eps = j.at("adam_eps").get<double>();
  c.history_stride = j.at("history_stride").get<long>();
  return c;
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"problem", {{"name", m.problem.name}, {"lambda", m.problem.lambda}, {"eps", m.problem.eps}}},
          {"network", to_json(m.network)},
          {"feature_map", to_json(m.feature_map)},
          {"train", to_json(m.train)},
          {"version", m.version},
          {"wall_clock_seconds", m.wall_clock_seconds},
          {"final_loss", m.final_loss},
          {"epochs_completed", m.epochs_completed},
          {"history_stride", m.history_stride}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  const auto& p = j.at("problem");
  m.problem.name = p.at("name").get<std::string>();
  m.problem.lambda = p.at("lambda").get<double>();
  m.problem.eps = p.at("eps").get<double>();
  m.network = network_config_from_json(j.at("network"));
  m.feature_map = feature_map_from_json(j.at("feature_map"));
  m.train = train_config_from_json(j.at("train"));
  m.version = j.at("version").get<std::string>();
  m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  m.final_loss = j.at("final_loss").get<double>();
  m.epochs_completed = j.at("epochs_completed").get<long>();
  m.history_stride = j.at("history_stride").get<long>();
  return m;
}

inline nlohmann::json to_json(const TransitionReport& r, double threshold) {
  return {{"count", r.count}, {"states", r.states}, {"unclassified_fraction", r.unclassified_fraction},
          {"threshold", threshold}};
}

inline nlohmann::json to_json(const EnergyReport& r) {
  return {{"grid_energy", r.grid_energy},
          {"mc_energy", r.mc_energy},
          {"mc_standard_error", r.mc_standard_error},
          {"boundary_penalty", r.boundary_penalty}};
}

inline nlohmann::json to_json(const DecayFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"k_lo", f.k_lo}, {"k_hi", f.k_hi}, {"used", f.used}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

// ---- checkpoints ---------------------------------------------------------

struct Checkpoint {
  NetworkConfig config;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  ParameterVector params;

  Network network() const { return Network(config.activation, params); }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  require(pos + 8 <= in.size(), ErrorCode::Io, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}
inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  require(pos + 4 <= in.size(), ErrorCode::Io, "truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}
inline double get_f64(const std::string& in, std::size_t& pos) { return std::bit_cast<double>(get_u64(in, pos)); }

inline std::uint32_t activation_code(ActivationKind k) {
  switch (k) {
    case ActivationKind::ReLU: return 0;
    case ActivationKind::SmoothSqrt: return 1;
    case ActivationKind::Identity: return 2;
  }
  return 0;
}

constexpr std::array<char, 8> kCheckpointMagic{'D', 'R', 'M', 'C', 'K', 'P', 'T', '1'};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  std::string out(detail::kCheckpointMagic.begin(), detail::kCheckpointMagic.end());
  detail::put_u32(out, 1);
  detail::put_u32(out, detail::activation_code(c.config.activation.kind));
  detail::put_f64(out, c.config.activation.rho);
  detail::put_u32(out, static_cast<std::uint32_t>(c.config.input_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(c.config.hidden_layers));
  detail::put_u32(out, static_cast<std::uint32_t>(c.config.width));
  detail::put_u32(out, static_cast<std::uint32_t>(c.config.output_dim));
  detail::put_u64(out, c.seed);
  detail::put_u64(out, c.epoch);
  const Eigen::VectorXd flat = c.params.flatten();
  detail::put_u64(out, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) detail::put_f64(out, flat[i]);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  require(bytes.size() >= 64 && std::equal(detail::kCheckpointMagic.begin(), detail::kCheckpointMagic.end(), bytes.begin()),
          ErrorCode::Io, "not a checkpoint file");
  std::size_t pos = 8;
  require(detail::get_u32(bytes, pos) == 1, ErrorCode::Io, "unsupported checkpoint version");
  Checkpoint c;
  const std::uint32_t act = detail::get_u32(bytes, pos);
  const double rho = detail::get_f64(bytes, pos);
  require(act <= 2, ErrorCode::Io, "bad activation code");
  c.config.activation = act == 0 ? Activation::relu() : act == 1 ? Activation::smooth_sqrt(rho) : Activation::identity();
  c.config.activation.rho = rho;
  c.config.input_dim = static_cast<int>(detail::get_u32(bytes, pos));
  c.config.hidden_layers = static_cast<int>(detail::get_u32(bytes, pos));
  c.config.width = static_cast<int>(detail::get_u32(bytes, pos));
  c.config.output_dim = static_cast<int>(detail::get_u32(bytes, pos));
  c.seed = detail::get_u64(bytes, pos);
  c.epoch = detail::get_u64(bytes, pos);
  const std::uint64_t n = detail::get_u64(bytes, pos);
  require(n == parameter_count(c.config), ErrorCode::Io, "parameter count does not match the stored shape");
  c.params = init(c.config, 0);
  Eigen::VectorXd flat(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) flat[static_cast<Eigen::Index>(i)] = detail::get_f64(bytes, pos);
  c.params.assign_flat(flat);
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

/// Textual checkpoint (JSON); doubles are written in round-trip form.
inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  const Eigen::VectorXd flat = c.params.flatten();
  return {{"network", to_json(c.config)},
          {"seed", c.seed},
          {"epoch", c.epoch},
          {"parameters", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  c.config = network_config_from_json(j.at("network"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.epoch = j.at("epoch").get<std::uint64_t>();
  const auto values = j.at("parameters").get<std::vector<double>>();
  require(values.size() == parameter_count(c.config), ErrorCode::Io, "parameter count does not match the stored shape");
  c.params = init(c.config, 0);
  c.params.assign_flat(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  return c;
}

}  // namespace drm
