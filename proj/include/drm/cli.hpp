#pragma once

// Command-line front end: run specs, presets, and the train / ntk / sweep
// commands. Everything here is usable without going through argv, which is
// how the tests drive it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drm/diagnostics.hpp"
#include "drm/error.hpp"
#include "drm/fourier_features.hpp"
#include "drm/io.hpp"
#include "drm/network.hpp"
#include "drm/ntk.hpp"
#include "drm/problems.hpp"
#include "drm/trainer.hpp"

namespace drm::cli {

namespace fs = std::filesystem;

/// Everything needed to reproduce one training run. Unset optionals take
/// defaults that depend on the problem dimension.
struct RunSpec {
  std::string problem = "DW1D";
  int layers = 5;
  int width = 128;
  std::optional<std::string> activation;  // relu (1D) / smooth_sqrt (2D)
  double rho = 0.1;
  std::optional<int> fourier_i;           // nullopt: no feature map
  long epochs = 20000;
  double lr = 1e-4;
  std::optional<double> lambda;           // 500, or 0 for ConvexSurrogate
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::string> sampling;    // resample (1D) / fixed_pool (2D)
  long history_stride = 100;
  std::string out;

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

inline bool is_known_problem(const std::string& p) {
  return p == "DW1D" || p == "DW1D_Lower" || p == "Twin2D" || p == "Twin2D_Reg" || p == "ConvexSurrogate";
}

inline int problem_dimension(const std::string& p) { return p == "Twin2D" || p == "Twin2D_Reg" ? 2 : 1; }

inline std::string resolved_activation(const RunSpec& s) {
  if (s.activation) return *s.activation;
  return problem_dimension(s.problem) == 2 ? "smooth_sqrt" : "relu";
}

inline double resolved_lambda(const RunSpec& s) {
  if (s.lambda) return *s.lambda;
  return s.problem == "ConvexSurrogate" ? 0.0 : 500.0;
}

inline std::string resolved_sampling(const RunSpec& s) {
  if (s.sampling) return *s.sampling;
  return problem_dimension(s.problem) == 2 ? "fixed_pool" : "resample";
}

/// All problems with the spec, each prefixed by the offending field.
inline std::vector<std::string> violations(const RunSpec& s) {
  std::vector<std::string> v;
  if (!is_known_problem(s.problem)) v.push_back("problem: unknown problem '" + s.problem + "'");
  if (s.layers < 1) v.push_back("layers: must be >= 1");
  if (s.width < 1) v.push_back("width: must be >= 1");
  const std::string act = resolved_activation(s);
  if (act != "relu" && act != "smooth_sqrt" && act != "smooth" && act != "identity")
    v.push_back("activation: unknown activation '" + act + "'");
  if (!(s.rho > 0.0) || !std::isfinite(s.rho)) v.push_back("rho: must be > 0");
  if (s.fourier_i && (*s.fourier_i < 0 || *s.fourier_i > 20)) v.push_back("fourier-i: must lie in [0, 20]");
  if (s.epochs < 1) v.push_back("epochs: must be >= 1");
  if (!(s.lr > 0.0) || !std::isfinite(s.lr)) v.push_back("lr: must be > 0");
  if (s.lambda && (!(*s.lambda >= 0.0) || !std::isfinite(*s.lambda))) v.push_back("lambda: must be >= 0");
  if (!(s.eps >= 0.0) || !std::isfinite(s.eps)) v.push_back("eps: must be >= 0");
  if (s.eps != 0.0 && s.problem != "Twin2D_Reg") v.push_back("eps: only Twin2D_Reg has a regularization term");
  if (s.problem == "Twin2D_Reg" && act == "relu")
    v.push_back("activation: Twin2D_Reg needs second derivatives, relu has none");
  const std::string smp = resolved_sampling(s);
  if (smp != "resample" && smp != "fixed_pool" && smp != "pool")
    v.push_back("sampling: unknown sampling mode '" + smp + "'");
  if (s.history_stride < 1) v.push_back("history-stride: must be >= 1");
  return v;
}

inline void validate(const RunSpec& s) {
  const auto v = violations(s);
  if (v.empty()) return;
  std::string msg = "invalid run spec: ";
  for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : "") + v[i];
  throw Error(ErrorCode::InvalidSpec, msg);
}

using AnyProblem = std::variant<VariationalProblem, ConvexSurrogate>;

struct ResolvedRun {
  AnyProblem problem;
  NetworkConfig network;
  FeatureMap feature_map;
  TrainConfig train;
};

inline ResolvedRun resolve(const RunSpec& s) {
  validate(s);
  ResolvedRun r;
  const int dim = problem_dimension(s.problem);
  if (s.problem == "ConvexSurrogate")
    r.problem = ConvexSurrogate{resolved_lambda(s)};
  else
    r.problem = VariationalProblem::make(parse_problem_id(s.problem), resolved_lambda(s), s.eps);
  r.feature_map = feature_map_for(dim, s.fourier_i.value_or(-1));
  r.network.input_dim = r.feature_map.output_dim();
  r.network.hidden_layers = s.layers;
  r.network.width = s.width;
  r.network.activation = parse_activation(resolved_activation(s), s.rho);
  r.train = TrainConfig::defaults_for(dim);
  r.train.epochs = s.epochs;
  r.train.lr0 = s.lr;
  r.train.seed = s.seed;
  r.train.sampling = parse_sampling(resolved_sampling(s));
  r.train.history_stride = s.history_stride;
  return r;
}

// ---- config files ---------------------------------------------------------

inline nlohmann::json to_json(const RunSpec& s) {
  nlohmann::json j{{"problem", s.problem}, {"layers", s.layers}, {"width", s.width},
                   {"rho", s.rho},         {"epochs", s.epochs}, {"lr", s.lr},
                   {"eps", s.eps},         {"seed", s.seed},     {"history_stride", s.history_stride}};
  j["activation"] = s.activation ? nlohmann::json(*s.activation) : nlohmann::json(nullptr);
  j["fourier_i"] = s.fourier_i ? nlohmann::json(*s.fourier_i) : nlohmann::json(nullptr);
  j["lambda"] = s.lambda ? nlohmann::json(*s.lambda) : nlohmann::json(nullptr);
  j["sampling"] = s.sampling ? nlohmann::json(*s.sampling) : nlohmann::json(nullptr);
  if (!s.out.empty()) j["out"] = s.out;
  return j;
}

/// Overlays the keys present in `j` onto `s`. Unknown keys and type
/// mismatches are collected into one error.
inline void apply_json(RunSpec& s, const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::InvalidSpec, "config must be a JSON object");
  std::vector<std::string> errors;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      errors.push_back(std::string(key) + ": wrong type");
    }
  };
  auto get_opt = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
      field.reset();
      return;
    }
    try {
      field = j.at(key).get<typename std::remove_reference_t<decltype(field)>::value_type>();
    } catch (const nlohmann::json::exception&) {
      errors.push_back(std::string(key) + ": wrong type");
    }
  };
  static const std::vector<std::string> known{"preset", "problem", "layers", "width", "activation", "rho",
                                              "fourier_i", "epochs", "lr", "lambda", "eps", "seed",
                                              "sampling", "history_stride", "out"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) errors.push_back(key + ": unknown key");
  get("problem", s.problem);
  get("layers", s.layers);
  get("width", s.width);
  get_opt("activation", s.activation);
  get("rho", s.rho);
  get_opt("fourier_i", s.fourier_i);
  get("epochs", s.epochs);
  get("lr", s.lr);
  get_opt("lambda", s.lambda);
  get("eps", s.eps);
  get("seed", s.seed);
  get_opt("sampling", s.sampling);
  get("history_stride", s.history_stride);
  get("out", s.out);
  if (!errors.empty()) {
    std::string msg = "invalid config: ";
    for (std::size_t i = 0; i < errors.size(); ++i) msg += (i ? "; " : "") + errors[i];
    throw Error(ErrorCode::InvalidSpec, msg);
  }
}

// ---- presets --------------------------------------------------------------

/// Full-scale experiment presets plus the scaled settings used by the
/// acceptance suite (prefixed "acc").
inline const std::map<std::string, RunSpec>& presets() {
  static const std::map<std::string, RunSpec> table = [] {
    std::map<std::string, RunSpec> m;
    auto one_d = [](const std::string& problem, int layers, std::optional<int> fi, long epochs) {
      RunSpec s;
      s.problem = problem;
      s.layers = layers;
      s.width = 128;
      s.activation = "relu";
      s.fourier_i = fi;
      s.epochs = epochs;
      return s;
    };
    auto two_d = [](int layers, int width, std::optional<int> fi, double eps, long epochs) {
      RunSpec s;
      s.problem = eps > 0.0 ? "Twin2D_Reg" : "Twin2D";
      s.layers = layers;
      s.width = width;
      s.activation = "smooth_sqrt";
      s.fourier_i = fi;
      s.eps = eps;
      s.epochs = epochs;
      s.sampling = "fixed_pool";
      return s;
    };
    const char* abc = "abcdef";
    for (int k = 0; k < 3; ++k) m["fig2" + std::string(1, abc[k])] = one_d("DW1D", 5 + 2 * k, std::nullopt, 100000);
    for (int k = 0; k < 3; ++k) m["fig3" + std::string(1, abc[k])] = one_d("DW1D", 5, 2 + k, 100000);
    for (int k = 0; k < 3; ++k) {
      m["fig4" + std::string(1, abc[k])] = one_d("DW1D_Lower", 3 + 2 * k, std::nullopt, 200000);
      m["fig4" + std::string(1, abc[k + 3])] = one_d("DW1D_Lower", 3 + 2 * k, std::nullopt, 500000);
      m["fig5" + std::string(1, abc[k])] = one_d("DW1D_Lower", 3, 1 + k, 200000);
      m["fig5" + std::string(1, abc[k + 3])] = one_d("DW1D_Lower", 3, 1 + k, 500000);
      m["fig6" + std::string(1, abc[k])] = two_d(3 + 2 * k, 128, std::nullopt, 0.0, 300000);
    }
    for (int k = 0; k < 4; ++k) {
      m["fig7" + std::string(1, abc[k])] = two_d(3, 128, 1 + k, 0.0, 300000);
      m["fig8" + std::string(1, abc[k])] = two_d(3, 128, 1 + k, 0.1 / 16, 300000);
      m["fig9" + std::string(1, abc[k])] = two_d(3, 128, 1 + k, 0.1 / 4, 300000);
    }
    m["acc1"] = one_d("DW1D", 5, std::nullopt, 20000);
    m["acc2a"] = one_d("DW1D", 3, 2, 50000);
    m["acc2b"] = one_d("DW1D", 3, 3, 50000);
    m["acc3"] = one_d("DW1D_Lower", 3, std::nullopt, 50000);
    m["acc4"] = two_d(3, 64, 2, 0.0, 30000);
    m["acc5a"] = two_d(3, 64, 3, 0.1 / 4, 30000);
    m["acc5b"] = two_d(3, 64, 4, 0.1 / 4, 30000);
    return m;
  }();
  return table;
}

inline RunSpec preset(const std::string& name) {
  const auto& t = presets();
  const auto it = t.find(name);
  if (it == t.end()) throw Error(ErrorCode::InvalidSpec, "preset: unknown preset '" + name + "'");
  return it->second;
}

// ---- train ----------------------------------------------------------------

/// Resolutions used for the exported field grid and diagnostics.
struct ExportSettings {
  int field_resolution_1d = 1001;
  int field_resolution_2d = 101;
  int slope_samples = 1001;
  double threshold = 0.5;
  long mc_samples = 100000;
};

struct TrainOutcome {
  RunManifest manifest;
  TransitionReport transitions;
  EnergyReport energy;
  ParameterVector params;
};

/// Creates `dir`, refusing to reuse an existing one unless `force`.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  require(!dir.empty(), ErrorCode::InvalidSpec, "out: an output directory is required");
  if (fs::exists(dir) && !force)
    throw Error(ErrorCode::Io, "output directory " + dir.string() + " exists (use --force to overwrite)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::Io, "cannot create output directory " + dir.string());
}

template <EnergyDensity P>
TrainOutcome post_process(const P& prob, const Network& net, const FeatureMap& fmap, const ExportSettings& ex,
                          std::uint64_t seed) {
  TrainOutcome o;
  const int R = prob.dimension() == 1 ? ex.field_resolution_1d : ex.field_resolution_2d;
  o.energy = energy_report(net, fmap, prob, R, ex.mc_samples, seed ^ 0xD1B54A32D192ED03ULL);
  o.transitions = count_transitions(slope_samples(net, fmap, prob, ex.slope_samples), ex.threshold);
  return o;
}

/// Trains one spec and writes every artifact into `dir`:
///   manifest.json, loss_history.csv, checkpoint.bin, fields.csv,
///   transitions.json, energy.json.
/// On a non-finite loss the last finite parameters are saved as
/// checkpoint_last_finite.bin before the error propagates.
inline TrainOutcome run_training(const RunSpec& spec, const fs::path& dir, bool force,
                                 const ExportSettings& ex = {}, std::ostream* log = nullptr) {
  const ResolvedRun run = resolve(spec);
  prepare_output_dir(dir, force);
  write_json(dir / "spec.json", to_json(spec));
  return std::visit(
      [&](const auto& prob) {
        TrainHooks hooks;
        hooks.on_checkpoint = [&](long epoch, const Network& net) {
          write_checkpoint(dir / "checkpoint.bin",
                           Checkpoint{run.network, spec.seed, static_cast<std::uint64_t>(epoch), net.params});
          if (log) *log << "epoch " << epoch << "/" << run.train.epochs << '\n' << std::flush;
        };
        TrainResult result;
        try {
          result = train(prob, run.network, run.feature_map, run.train, hooks);
        } catch (const TrainingAborted& e) {
          write_checkpoint(dir / "checkpoint_last_finite.bin",
                           Checkpoint{run.network, spec.seed, static_cast<std::uint64_t>(e.epoch()), e.last_finite()});
          throw;
        }
        const Network net(run.network.activation, result.params);
        TrainOutcome o = post_process(prob, net, run.feature_map, ex, spec.seed);
        o.manifest = result.manifest;
        o.params = result.params;
        write_json(dir / "manifest.json", drm::to_json(result.manifest));
        write_loss_history(dir / "loss_history.csv", result.history);
        write_fields(dir / "fields.csv", evaluate_grid(net, run.feature_map, prob,
                                                       prob.dimension() == 1 ? ex.field_resolution_1d
                                                                             : ex.field_resolution_2d));
        write_json(dir / "transitions.json", drm::to_json(o.transitions, ex.threshold));
        nlohmann::json energy = drm::to_json(o.energy);
        energy["total"] = o.energy.grid_energy + o.energy.boundary_penalty;
        write_json(dir / "energy.json", energy);
        return o;
      },
      run.problem);
}

// ---- ntk ------------------------------------------------------------------

struct NtkOptions {
  int points = 256;        // per axis
  double span = 1.0;       // points at span * (k + 0.5) / points
  int seeds = 1;           // Gram matrices averaged over seed, seed+1, ...
  bool scalar = false;     // value-only kernel instead of the (u, grad u) blocks
  int fit_lo = 4;
  int fit_hi = 64;
  bool dynamics = false;   // compare gradient descent with the linearized solution
  long steps = 200;
  long record_every = 10;
  int top_modes = 5;
};

inline Eigen::MatrixXd ntk_points(int dim, int n, double span) {
  require(n >= 1, ErrorCode::InvalidSpec, "points: must be >= 1");
  if (dim == 1) {
    Eigen::MatrixXd p(1, n);
    for (int k = 0; k < n; ++k) p(0, k) = span * (k + 0.5) / n;
    return p;
  }
  Eigen::MatrixXd p(2, static_cast<Eigen::Index>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      p(0, iy * n + ix) = span * (ix + 0.5) / n;
      p(1, iy * n + ix) = span * (iy + 0.5) / n;
    }
  return p;
}

/// Largest eigenvalues over n of a reference kernel on the grid i/n.
inline Eigen::VectorXd self_test_spectrum(const std::string& kernel, int n, int k_max = 2) {
  std::function<double(double, double)> k;
  if (kernel == "constant")
    k = [](double, double) { return 1.0; };
  else if (kernel == "brownian")
    k = [](double a, double b) { return std::min(a, b); };
  else
    throw Error(ErrorCode::InvalidSpec, "self-test: unknown kernel '" + kernel + "'");
  return operator_eigenvalue_relation(k, {n}, k_max).front().scaled;
}

inline nlohmann::json run_ntk(const RunSpec& spec, const NtkOptions& opt, const fs::path& dir, bool force) {
  const ResolvedRun run = resolve(spec);
  require(opt.seeds >= 1, ErrorCode::InvalidSpec, "seeds: must be >= 1");
  prepare_output_dir(dir, force);
  const int dim = problem_dimension(spec.problem);
  const Eigen::MatrixXd pts = ntk_points(dim, opt.points, opt.span);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < opt.seeds; ++i) seeds.push_back(spec.seed + static_cast<std::uint64_t>(i));
  const EnsembleSpectrum ens = ensemble_gram(run.network, run.feature_map, pts, seeds, !opt.scalar);
  write_spectrum(dir / "spectrum.csv", ens.mean.eigenvalues);

  nlohmann::json report{{"points", pts.cols()},
                        {"seeds", opt.seeds},
                        {"kernel", opt.scalar ? "scalar" : "block"},
                        {"block", ens.mean.block},
                        {"lambda_1", ens.mean.eigenvalues[0]}};
  try {
    report["fit"] = drm::to_json(eigendecay_fit(ens.mean.eigenvalues, opt.fit_lo, opt.fit_hi));
  } catch (const Error& e) {
    report["fit_error"] = e.what();
  }
  if (opt.dynamics) {
    std::visit(
        [&](const auto& prob) {
          const Network net(run.network, spec.seed);
          const DynamicsComparison dc = compare_linearized_dynamics(prob, net, run.feature_map, pts, spec.lr,
                                                                    opt.steps, opt.record_every, opt.top_modes);
          Table t{{"step", "measured_norm", "predicted_norm", "measured_top", "predicted_top"}, {}};
          for (std::size_t i = 0; i < dc.steps.size(); ++i)
            t.rows.push_back({static_cast<double>(dc.steps[i]), dc.measured_norm[i], dc.predicted_norm[i],
                              dc.measured_top[i], dc.predicted_top[i]});
          write_table(dir / "dynamics.csv", t);
          report["dynamics"] = {{"parameter_drift", dc.parameter_drift},
                                {"gram_drift", dc.gram_drift},
                                {"complex_spectrum", dc.initial.complex_spectrum}};
        },
        run.problem);
  }
  write_json(dir / "ntk_report.json", report);
  return report;
}

// ---- sweep ----------------------------------------------------------------

enum class SweepAxis { Depth, Frequency, Eps, Seed };

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "depth") return SweepAxis::Depth;
  if (s == "frequency") return SweepAxis::Frequency;
  if (s == "eps") return SweepAxis::Eps;
  if (s == "seed") return SweepAxis::Seed;
  throw Error(ErrorCode::InvalidSpec, "axis: expected depth, frequency, eps or seed, got '" + s + "'");
}

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Depth: return "depth";
    case SweepAxis::Frequency: return "frequency";
    case SweepAxis::Eps: return "eps";
    case SweepAxis::Seed: return "seed";
  }
  return "unknown";
}

constexpr std::size_t kMaxSweepRuns = 64;

/// Applies one sweep value to a copy of `base`. Frequency accepts "none".
inline RunSpec sweep_variant(const RunSpec& base, SweepAxis axis, const std::string& value) {
  RunSpec s = base;
  try {
    switch (axis) {
      case SweepAxis::Depth: s.layers = std::stoi(value); break;
      case SweepAxis::Frequency:
        if (value == "none")
          s.fourier_i.reset();
        else
          s.fourier_i = std::stoi(value);
        break;
      case SweepAxis::Eps: s.eps = std::stod(value); break;
      case SweepAxis::Seed: s.seed = std::stoull(value); break;
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidSpec, "values: cannot parse '" + value + "' for axis " + to_string(axis));
  }
  return s;
}

struct SweepRow {
  std::size_t index = 0;
  std::string value;
  bool ok = false;
  double final_energy = 0.0;  // grid energy + boundary penalty
  int transitions = 0;
  double runtime_seconds = 0.0;
  std::string message;
};

inline void write_sweep_summary(const fs::path& path, SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << "run,axis,value,status,final_energy,transitions,runtime_seconds,message\n";
  for (const auto& r : rows) {
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << r.index << ',' << to_string(axis) << ',' << r.value << ',' << (r.ok ? "ok" : "failed") << ','
        << format_double(r.final_energy) << ',' << r.transitions << ',' << format_double(r.runtime_seconds) << ','
        << msg << '\n';
  }
}

/// Runs one training per value into dir/run_NN. A failing run is recorded
/// in its row and the sweep moves on.
inline std::vector<SweepRow> run_sweep(const RunSpec& base, SweepAxis axis, const std::vector<std::string>& values,
                                       const fs::path& dir, bool force, const ExportSettings& ex = {},
                                       std::ostream* log = nullptr) {
  require(!values.empty(), ErrorCode::InvalidSpec, "values: the sweep value list is empty");
  require(values.size() <= kMaxSweepRuns, ErrorCode::InvalidSpec,
          "values: at most " + std::to_string(kMaxSweepRuns) + " runs per sweep");
  {
    std::vector<std::string> errs;
    for (const auto& v : values) {
      try {
        for (const auto& e : violations(sweep_variant(base, axis, v))) errs.push_back(v + ": " + e);
      } catch (const Error& e) {
        errs.push_back(e.what());
      }
    }
    if (!errs.empty()) {
      std::string msg = "invalid sweep: ";
      for (std::size_t i = 0; i < errs.size(); ++i) msg += (i ? "; " : "") + errs[i];
      throw Error(ErrorCode::InvalidSpec, msg);
    }
  }
  prepare_output_dir(dir, force);
  write_json(dir / "base_spec.json", to_json(base));
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepRow row;
    row.index = i;
    row.value = values[i];
    const auto t0 = std::chrono::steady_clock::now();
    char name[32];
    std::snprintf(name, sizeof name, "run_%02zu", i);
    try {
      const TrainOutcome o = run_training(sweep_variant(base, axis, values[i]), dir / name, force, ex);
      row.ok = true;
      row.final_energy = o.energy.grid_energy + o.energy.boundary_penalty;
      row.transitions = o.transitions.count;
    } catch (const std::exception& e) {
      row.message = e.what();
    }
    row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log)
      *log << name << " " << to_string(axis) << "=" << values[i] << " "
           << (row.ok ? "ok transitions=" + std::to_string(row.transitions) : "failed: " + row.message) << '\n'
           << std::flush;
    rows.push_back(row);
    write_sweep_summary(dir / "summary.csv", axis, rows);
  }
  return rows;
}

// ---- argv entry point -----------------------------------------------------

enum ExitCode : int { kOk = 0, kInvalid = 2, kRuntime = 3, kSelfTestFailed = 4 };

/// Flags shared by train, ntk and sweep. Values are only copied into the
/// spec for flags that were actually given.
struct SpecFlags {
  std::string preset, config, problem, activation, sampling, out;
  int layers = 0, width = 0, fourier_i = 0;
  double rho = 0, lr = 0, lambda = 0, eps = 0;
  long epochs = 0, history_stride = 0;
  std::uint64_t seed = 0;
  bool no_fourier = false, force = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App& app) {
    opts["preset"] = app.add_option("--preset", preset, "Named experiment preset");
    opts["config"] = app.add_option("--config", config, "JSON config file");
    opts["problem"] = app.add_option("--problem", problem, "DW1D, DW1D_Lower, Twin2D, Twin2D_Reg, ConvexSurrogate");
    opts["layers"] = app.add_option("--layers", layers, "Hidden layers");
    opts["width"] = app.add_option("--width", width, "Units per hidden layer");
    opts["activation"] = app.add_option("--activation", activation, "relu, smooth_sqrt or identity");
    opts["rho"] = app.add_option("--rho", rho, "Smoothing parameter of smooth_sqrt");
    opts["fourier-i"] = app.add_option("--fourier-i", fourier_i, "Fourier feature exponent i (frequency 2^i pi)");
    opts["no-fourier"] = app.add_flag("--no-fourier", no_fourier, "Feed raw coordinates to the network");
    opts["epochs"] = app.add_option("--epochs", epochs, "Training epochs");
    opts["lr"] = app.add_option("--lr", lr, "Initial learning rate");
    opts["lambda"] = app.add_option("--lambda", lambda, "Boundary penalty weight");
    opts["eps"] = app.add_option("--eps", eps, "Regularization length (Twin2D_Reg)");
    opts["seed"] = app.add_option("--seed", seed, "Run seed");
    opts["sampling"] = app.add_option("--sampling", sampling, "resample or fixed_pool");
    opts["history-stride"] = app.add_option("--history-stride", history_stride, "Loss history stride");
    opts["out"] = app.add_option("--out", out, "Output directory");
    opts["force"] = app.add_flag("--force", force, "Overwrite an existing output directory");
    opts["fourier-i"]->excludes(opts["no-fourier"]);
  }

  bool given(const std::string& name) const { return opts.at(name)->count() > 0; }

  /// defaults <- preset <- config file <- flags.
  RunSpec build() const {
    RunSpec s;
    nlohmann::json cfg;
    if (given("config")) cfg = read_json(config);
    if (given("preset"))
      s = drm::cli::preset(preset);
    else if (cfg.is_object() && cfg.contains("preset"))
      s = drm::cli::preset(cfg.at("preset").get<std::string>());
    if (given("config")) apply_json(s, cfg);
    if (given("problem")) s.problem = problem;
    if (given("layers")) s.layers = layers;
    if (given("width")) s.width = width;
    if (given("activation")) s.activation = activation;
    if (given("rho")) s.rho = rho;
    if (given("fourier-i")) s.fourier_i = fourier_i;
    if (no_fourier) s.fourier_i.reset();
    if (given("epochs")) s.epochs = epochs;
    if (given("lr")) s.lr = lr;
    if (given("lambda")) s.lambda = lambda;
    if (given("eps")) s.eps = eps;
    if (given("seed")) s.seed = seed;
    if (given("sampling")) s.sampling = sampling;
    if (given("history-stride")) s.history_stride = history_stride;
    if (given("out")) s.out = out;
    return s;
  }
};

inline int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep Ritz training and neural tangent kernel analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DRM_VERSION));

  auto* train_cmd = app.add_subcommand("train", "Train one network and export its artifacts");
  SpecFlags train_flags;
  train_flags.attach(*train_cmd);

  auto* ntk_cmd = app.add_subcommand("ntk", "Empirical NTK spectrum, decay fit and linearized dynamics");
  SpecFlags ntk_flags;
  ntk_flags.attach(*ntk_cmd);
  NtkOptions nopt;
  std::string self_test;
  int self_test_n = 512;
  ntk_cmd->add_option("--points", nopt.points, "Grid points (per axis)");
  ntk_cmd->add_option("--span", nopt.span, "Points lie in [0, span)");
  ntk_cmd->add_option("--seeds", nopt.seeds, "Initializations averaged");
  ntk_cmd->add_flag("--scalar", nopt.scalar, "Value-only kernel");
  ntk_cmd->add_option("--fit-lo", nopt.fit_lo, "First eigenvalue index of the decay fit");
  ntk_cmd->add_option("--fit-hi", nopt.fit_hi, "Last eigenvalue index of the decay fit");
  ntk_cmd->add_flag("--dynamics", nopt.dynamics, "Compare gradient descent with the linearized solution");
  ntk_cmd->add_option("--steps", nopt.steps, "Gradient descent steps for --dynamics");
  ntk_cmd->add_option("--record-every", nopt.record_every, "Recording stride for --dynamics");
  ntk_cmd->add_option("--self-test", self_test, "Reference kernel check: constant or brownian");
  ntk_cmd->add_option("--n", self_test_n, "Grid size for --self-test");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train a family of runs varying one setting");
  SpecFlags sweep_flags;
  sweep_flags.attach(*sweep_cmd);
  std::string axis;
  std::vector<std::string> values;
  sweep_cmd->add_option("--axis", axis, "depth, frequency, eps or seed")->required();
  sweep_cmd->add_option("--values", values, "Comma separated values")->delimiter(',');

  auto* presets_cmd = app.add_subcommand("presets", "List the named presets");

  std::vector<std::string> argv_store{"drm"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*presets_cmd) {
      for (const auto& [name, spec] : presets()) out << name << ' ' << to_json(spec).dump() << '\n';
      return kOk;
    }
    if (*train_cmd) {
      const RunSpec spec = train_flags.build();
      const TrainOutcome o = run_training(spec, spec.out, train_flags.force, {}, &out);
      out << "final loss " << format_double(o.manifest.final_loss) << "\n"
          << "energy " << format_double(o.energy.grid_energy + o.energy.boundary_penalty) << "\n"
          << "transitions " << o.transitions.count << "\n";
      return kOk;
    }
    if (*ntk_cmd) {
      if (!self_test.empty()) {
        const Eigen::VectorXd ev = self_test_spectrum(self_test, self_test_n);
        out << "lambda_1/n " << format_double(ev[0]) << "\n"
            << "lambda_2/n " << format_double(ev[1]) << "\n";
        if (self_test == "constant") return std::abs(ev[0] - 1.0) < 1e-9 ? kOk : kSelfTestFailed;
        const double expected = 4.0 / (std::numbers::pi * std::numbers::pi);
        out << "expected " << format_double(expected) << "\n";
        return std::abs(ev[0] / expected - 1.0) < 0.02 ? kOk : kSelfTestFailed;
      }
      const RunSpec spec = ntk_flags.build();
      const nlohmann::json report = run_ntk(spec, nopt, spec.out, ntk_flags.force);
      out << report.dump(2) << '\n';
      return kOk;
    }
    if (*sweep_cmd) {
      const RunSpec base = sweep_flags.build();
      const auto rows = run_sweep(base, parse_axis(axis), values, base.out, sweep_flags.force, {}, &out);
      const auto failed = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.ok; });
      return failed == 0 ? kOk : kRuntime;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidSpec ? kInvalid : kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kInvalid;
}

}  // namespace drm::cli
