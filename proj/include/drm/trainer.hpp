#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drm/autodiff.hpp"
#include "drm/error.hpp"
#include "drm/fourier_features.hpp"
#include "drm/network.hpp"
#include "drm/problems.hpp"
#include "drm/random.hpp"

#ifndef DRM_VERSION
#define DRM_VERSION "0.1.0"
#endif

namespace drm {

enum class Schedule { CosineToZero, Constant };
enum class Sampling { PerEpochResample, FixedPool };
enum class OptimizerKind { Adam, GradientDescent };

inline std::string to_string(Schedule s) { return s == Schedule::CosineToZero ? "cosine" : "constant"; }
inline std::string to_string(Sampling s) { return s == Sampling::FixedPool ? "fixed_pool" : "resample"; }
inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::Adam ? "adam" : "gd"; }

inline Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return Schedule::CosineToZero;
  if (s == "constant") return Schedule::Constant;
  throw Error(ErrorCode::InvalidSpec, "unknown schedule '" + s + "'");
}
inline Sampling parse_sampling(const std::string& s) {
  if (s == "resample") return Sampling::PerEpochResample;
  if (s == "fixed_pool" || s == "pool") return Sampling::FixedPool;
  throw Error(ErrorCode::InvalidSpec, "unknown sampling mode '" + s + "'");
}
inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "gd") return OptimizerKind::GradientDescent;
  throw Error(ErrorCode::InvalidSpec, "unknown optimizer '" + s + "'");
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct TrainConfig {
  long epochs = 20000;
  int batch_interior = 128;
  int batch_boundary = 2;
  double lr0 = 1e-4;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::CosineToZero;
  Sampling sampling = Sampling::PerEpochResample;
  int pool_interior = 600;
  int pool_boundary = 400;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamHyper adam;
  long history_stride = 100;

  /// Defaults matching the 1D runs (resampled batches of 128 plus both
  /// endpoints) or the 2D runs (fixed pool of 600 interior + 4 x 100 edge).
  static TrainConfig defaults_for(int dim) {
    TrainConfig c;
    if (dim == 2) {
      c.sampling = Sampling::FixedPool;
      c.batch_boundary = 400;
    }
    return c;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (epochs < 1) v.push_back("epochs must be >= 1");
    if (batch_interior < 1) v.push_back("batch_interior must be >= 1");
    if (batch_boundary < 0) v.push_back("batch_boundary must be >= 0");
    if (!(lr0 > 0.0)) v.push_back("lr must be > 0");
    if (sampling == Sampling::FixedPool && pool_interior < 1) v.push_back("pool_interior must be >= 1");
    if (sampling == Sampling::FixedPool && pool_boundary < 0) v.push_back("pool_boundary must be >= 0");
    if (history_stride < 1) v.push_back("history_stride must be >= 1");
    return v;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
  AdamHyper hyper;

  static OptimizerState for_size(std::size_t n, AdamHyper h = {}) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
            0, h};
  }
};

/// Bias-corrected Adam, applied elementwise.
inline void adam_step(OptimizerState& state, ParameterVector& params, const ParameterGradient& grad, double lr) {
  Eigen::VectorXd g = grad.flatten();
  require(g.allFinite(), ErrorCode::NonFiniteGradient, "gradient contains NaN or inf");
  require(g.size() == state.m.size() && static_cast<std::size_t>(g.size()) == params.size(),
          ErrorCode::DimensionMismatch, "optimizer state does not match parameter count");
  const auto& h = state.hyper;
  ++state.t;
  state.m = h.beta1 * state.m + (1.0 - h.beta1) * g;
  state.v = h.beta2 * state.v + (1.0 - h.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  Eigen::VectorXd theta = params.flatten();
  theta.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + h.eps);
  params.assign_flat(theta);
}

inline void gradient_descent_step(ParameterVector& params, const ParameterGradient& grad, double lr) {
  require(grad.all_finite(), ErrorCode::NonFiniteGradient, "gradient contains NaN or inf");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    params.layers[i].weights -= lr * grad.layers[i].weights;
    params.layers[i].bias -= lr * grad.layers[i].bias;
  }
}

/// lr0 * (1 + cos(pi * epoch / total)) / 2 for the cosine schedule.
inline double lr_at(Schedule schedule, double lr0, long epoch, long total) {
  if (schedule == Schedule::Constant) return lr0;
  if (total <= 0) return lr0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total)));
}

struct CollocationBatch {
  Eigen::MatrixXd interior;  // d x N_int
  Eigen::MatrixXd boundary;  // d x N_b
};

/// Uniform interior points in [0,1]^d and boundary points on the edges.
/// In 1D the boundary alternates 0, 1, 0, ... so any count >= 2 contains both
/// endpoints. In 2D the count is split evenly over the edges y=0, y=1, x=0,
/// x=1 (remainder to the first edges), each uniform along its edge.
inline CollocationBatch sample_batch(int dim, int n_interior, int n_boundary, Rng& rng) {
  CollocationBatch b;
  b.interior.resize(dim, n_interior);
  for (int n = 0; n < n_interior; ++n)
    for (int j = 0; j < dim; ++j) b.interior(j, n) = rng.uniform();
  b.boundary.resize(dim, n_boundary);
  if (dim == 1) {
    for (int n = 0; n < n_boundary; ++n) b.boundary(0, n) = static_cast<double>(n % 2);
  } else {
    int col = 0;
    for (int edge = 0; edge < 4; ++edge) {
      const int count = n_boundary / 4 + (edge < n_boundary % 4 ? 1 : 0);
      for (int k = 0; k < count; ++k, ++col) {
        const double t = rng.uniform();
        switch (edge) {
          case 0: b.boundary(0, col) = t, b.boundary(1, col) = 0.0; break;
          case 1: b.boundary(0, col) = t, b.boundary(1, col) = 1.0; break;
          case 2: b.boundary(0, col) = 0.0, b.boundary(1, col) = t; break;
          default: b.boundary(0, col) = 1.0, b.boundary(1, col) = t; break;
        }
      }
    }
  }
  return b;
}

inline CollocationBatch sample_batch(int dim, const TrainConfig& cfg, Rng& rng) {
  if (cfg.sampling == Sampling::FixedPool) return sample_batch(dim, cfg.pool_interior, cfg.pool_boundary, rng);
  return sample_batch(dim, cfg.batch_interior, cfg.batch_boundary, rng);
}

/// Sampling stream derived from the run seed, separate from initialization.
inline Rng sampling_rng(std::uint64_t seed) { return Rng(seed ^ 0x9E3779B97F4A7C15ULL); }

struct LossRecord {
  long epoch = 0;
  double loss = 0.0;
  double interior = 0.0;
  double boundary = 0.0;  // mean u^2 on the boundary batch (before lambda)
};

struct ProblemDescriptor {
  std::string name = "custom";
  double lambda = 0.0;
  double eps = 0.0;
  friend bool operator==(const ProblemDescriptor&, const ProblemDescriptor&) = default;
};

template <EnergyDensity P>
ProblemDescriptor describe(const P& prob) {
  ProblemDescriptor d;
  d.lambda = prob.penalty();
  if constexpr (std::same_as<P, VariationalProblem>) {
    d.name = to_string(prob.id);
    d.eps = prob.eps;
  } else if constexpr (std::same_as<P, ConvexSurrogate>) {
    d.name = "ConvexSurrogate";
  }
  return d;
}

/// Record of what a training run actually did.
struct RunManifest {
  ProblemDescriptor problem;
  NetworkConfig network;
  FeatureMap feature_map;
  TrainConfig train;
  std::string version = DRM_VERSION;
  double wall_clock_seconds = 0.0;
  double final_loss = 0.0;
  long epochs_completed = 0;
  long history_stride = 0;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

struct TrainResult {
  ParameterVector params;
  RunManifest manifest;
  std::vector<LossRecord> history;
};

struct TrainHooks {
  std::function<void(long epoch, const Network&)> on_checkpoint;
  std::function<void(long epoch, const Network&, const LossEstimate&)> on_epoch;
};

/// Raised when the loss stops being finite; carries the last parameters
/// that produced a finite loss.
class TrainingAborted : public Error {
 public:
  TrainingAborted(long epoch, ParameterVector last_finite)
      : Error(ErrorCode::NonFiniteLoss, "loss became non-finite at epoch " + std::to_string(epoch)),
        epoch_(epoch),
        last_finite_(std::move(last_finite)) {}
  long epoch() const { return epoch_; }
  const ParameterVector& last_finite() const { return last_finite_; }

 private:
  long epoch_;
  ParameterVector last_finite_;
};

/// Runs `cfg.epochs` updates starting from `net`. Each epoch draws a fresh
/// batch (or reuses the fixed pool), evaluates the penalized loss and its
/// gradient, and applies one optimizer step with the scheduled rate.
template <EnergyDensity P>
TrainResult train_from(const P& prob, Network net, const NetworkConfig& netcfg, const FeatureMap& fmap,
                       const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  {
    auto v = cfg.violations();
    if (fmap.input_dim() != prob.dimension()) v.push_back("feature map input dimension != problem dimension");
    if (net.input_dim() != fmap.output_dim()) v.push_back("network input_dim != feature map output dimension");
    if (!v.empty()) {
      std::string msg;
      for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
      throw Error(ErrorCode::InvalidSpec, msg);
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  const int dim = prob.dimension();
  Rng rng = sampling_rng(cfg.seed);
  OptimizerState opt = OptimizerState::for_size(net.parameter_count(), cfg.adam);
  CollocationBatch batch;
  if (cfg.sampling == Sampling::FixedPool) batch = sample_batch(dim, cfg, rng);

  TrainResult result;
  const long checkpoint_every = std::max<long>(1, cfg.epochs / 10);
  double last_loss = 0.0;
  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.sampling == Sampling::PerEpochResample) batch = sample_batch(dim, cfg, rng);
    LossAndGradient lg;
    try {
      lg = loss_and_gradient(prob, net, fmap, batch.interior, batch.boundary);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteValue) throw;
      throw TrainingAborted(epoch, net.params);
    }
    if (!std::isfinite(lg.loss.total) || !lg.gradient.all_finite()) throw TrainingAborted(epoch, net.params);
    last_loss = lg.loss.total;
    if (epoch % cfg.history_stride == 0 || epoch + 1 == cfg.epochs)
      result.history.push_back({epoch, lg.loss.total, lg.loss.interior, lg.loss.boundary});
    if (hooks.on_epoch) hooks.on_epoch(epoch, net, lg.loss);

    const double lr = lr_at(cfg.schedule, cfg.lr0, epoch, cfg.epochs);
    ParameterVector previous = net.params;
    if (cfg.optimizer == OptimizerKind::Adam)
      adam_step(opt, net.params, lg.gradient, lr);
    else
      gradient_descent_step(net.params, lg.gradient, lr);
    if (!net.params.all_finite()) throw TrainingAborted(epoch, std::move(previous));

    if (hooks.on_checkpoint && ((epoch + 1) % checkpoint_every == 0 || epoch + 1 == cfg.epochs))
      hooks.on_checkpoint(epoch + 1, net);
  }

  result.params = std::move(net.params);
  auto& m = result.manifest;
  m.problem = describe(prob);
  m.network = netcfg;
  m.feature_map = fmap;
  m.train = cfg;
  m.final_loss = last_loss;
  m.epochs_completed = cfg.epochs;
  m.history_stride = cfg.history_stride;
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

template <EnergyDensity P>
TrainResult train(const P& prob, const NetworkConfig& netcfg, const FeatureMap& fmap, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}) {
  netcfg.validate();
  require(netcfg.input_dim == fmap.output_dim(), ErrorCode::InvalidSpec,
          "network input_dim must equal the feature map output dimension");
  return train_from(prob, Network(netcfg, cfg.seed), netcfg, fmap, cfg, hooks);
}

}  // namespace drm
