#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drm/error.hpp"
#include "drm/random.hpp"

namespace drm {

enum class ActivationKind { ReLU, SmoothSqrt, Identity };

/// Pointwise nonlinearity with its first three derivatives.
///
/// SmoothSqrt is sigma(x) = sqrt(x^2 + rho^2), a smooth stand-in for |x|.
/// ReLU uses the subgradient 0 at the kink and has no usable second
/// derivative, so second-order jets reject it.
struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double rho = 0.1;

  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation smooth_sqrt(double rho) { return {ActivationKind::SmoothSqrt, rho}; }
  static Activation identity() { return {ActivationKind::Identity, 0.0}; }

  bool has_second_derivative() const { return kind != ActivationKind::ReLU; }

  double value(double x) const {
    switch (kind) {
      case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
      case ActivationKind::SmoothSqrt: return std::sqrt(x * x + rho * rho);
      case ActivationKind::Identity: return x;
    }
    return x;
  }
  double d1(double x) const {
    switch (kind) {
      case ActivationKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
      case ActivationKind::SmoothSqrt: return x / std::sqrt(x * x + rho * rho);
      case ActivationKind::Identity: return 1.0;
    }
    return 1.0;
  }
  double d2(double x) const {
    if (kind != ActivationKind::SmoothSqrt) return 0.0;
    const double s = std::sqrt(x * x + rho * rho);
    return rho * rho / (s * s * s);
  }
  double d3(double x) const {
    if (kind != ActivationKind::SmoothSqrt) return 0.0;
    const double s2 = x * x + rho * rho;
    const double s = std::sqrt(s2);
    return -3.0 * rho * rho * x / (s2 * s2 * s);
  }

  std::string name() const {
    switch (kind) {
      case ActivationKind::ReLU: return "relu";
      case ActivationKind::SmoothSqrt: return "smooth_sqrt";
      case ActivationKind::Identity: return "identity";
    }
    return "unknown";
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

inline Activation parse_activation(const std::string& name, double rho) {
  if (name == "relu") return Activation::relu();
  if (name == "smooth_sqrt" || name == "smooth") return Activation::smooth_sqrt(rho);
  if (name == "identity") return Activation::identity();
  throw Error(ErrorCode::InvalidSpec, "unknown activation '" + name + "'");
}

/// Shape of a plain fully connected stack. `hidden_layers` counts the
/// activated layers; the output layer is affine on top of them.
struct NetworkConfig {
  int input_dim = 1;
  int hidden_layers = 5;
  int width = 128;
  Activation activation = Activation::relu();
  int output_dim = 1;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (input_dim < 1) out.push_back("input_dim must be >= 1");
    if (hidden_layers < 1) out.push_back("hidden_layers must be >= 1");
    if (width < 1) out.push_back("width must be >= 1");
    if (output_dim != 1) out.push_back("output_dim must be 1");
    if (activation.kind == ActivationKind::SmoothSqrt && !(activation.rho > 0.0))
      out.push_back("rho must be > 0 for smooth_sqrt");
    return out;
  }

  void validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg;
    for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
    throw Error(ErrorCode::InvalidSpec, msg);
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct Layer {
  Eigen::MatrixXd weights;  // rows = fan_out, cols = fan_in
  Eigen::VectorXd bias;
};

/// Ordered list of affine layers. Flattening walks the layers in order and
/// writes each weight matrix row-major followed by its bias.
struct LayerStack {
  std::vector<Layer> layers;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out[k++] = l.weights(r, c);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) out[k++] = l.bias[r];
    }
    return out;
  }

  void assign_flat(const Eigen::Ref<const Eigen::VectorXd>& flat) {
    require(static_cast<std::size_t>(flat.size()) == size(), ErrorCode::DimensionMismatch,
            "flat parameter length does not match layer shapes");
    Eigen::Index k = 0;
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat[k++];
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
    }
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  void set_zero() {
    for (auto& l : layers) {
      l.weights.setZero();
      l.bias.setZero();
    }
  }

  template <class Other>
  void reshape_like(const Other& other) {
    layers.resize(other.layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weights = Eigen::MatrixXd::Zero(other.layers[i].weights.rows(),
                                                other.layers[i].weights.cols());
      layers[i].bias = Eigen::VectorXd::Zero(other.layers[i].bias.size());
    }
  }

  friend bool operator==(const LayerStack& a, const LayerStack& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& x = a.layers[i];
      const auto& y = b.layers[i];
      if (x.weights.rows() != y.weights.rows() || x.weights.cols() != y.weights.cols() ||
          x.bias.size() != y.bias.size())
        return false;
      if (x.weights != y.weights || x.bias != y.bias) return false;
    }
    return true;
  }
};

struct ParameterVector : LayerStack {};

/// Same layout as ParameterVector, holding d(scalar)/d(theta).
struct ParameterGradient : LayerStack {
  static ParameterGradient zeros_like(const ParameterVector& p) {
    ParameterGradient g;
    g.reshape_like(p);
    return g;
  }

  ParameterGradient& operator+=(const ParameterGradient& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weights += o.layers[i].weights;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }
  ParameterGradient& operator*=(double s) {
    for (auto& l : layers) {
      l.weights *= s;
      l.bias *= s;
    }
    return *this;
  }
};

inline std::size_t parameter_count(const NetworkConfig& c) {
  std::size_t n = 0;
  int fan_in = c.input_dim;
  for (int i = 0; i < c.hidden_layers; ++i) {
    n += static_cast<std::size_t>(c.width) * fan_in + c.width;
    fan_in = c.width;
  }
  n += static_cast<std::size_t>(c.output_dim) * fan_in + c.output_dim;
  return n;
}

/// He-normal weights (std sqrt(2 / fan_in)), zero biases. Draws run layer by
/// layer, row-major, from a single Rng seeded with `seed`.
inline ParameterVector init(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParameterVector p;
  int fan_in = config.input_dim;
  for (int i = 0; i <= config.hidden_layers; ++i) {
    const int fan_out = i == config.hidden_layers ? config.output_dim : config.width;
    Layer layer;
    layer.weights.resize(fan_out, fan_in);
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = std_dev * rng.normal();
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    p.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return p;
}

/// Parameters plus the activation they are evaluated with. A network may
/// have zero hidden layers (a single affine map), which the configuration
/// path never produces but which is handy for hand-built models. Hand-built
/// layers may also leave `bias` empty to mean "no bias".
struct Network {
  Activation activation = Activation::relu();
  ParameterVector params;

  Network() = default;
  Network(Activation act, ParameterVector p) : activation(act), params(std::move(p)) {}
  Network(const NetworkConfig& config, std::uint64_t seed)
      : activation(config.activation), params(init(config, seed)) {}

  int input_dim() const { return static_cast<int>(params.layers.front().weights.cols()); }
  int hidden_layers() const { return static_cast<int>(params.layers.size()) - 1; }
  std::size_t parameter_count() const { return params.size(); }
};

/// Single-point evaluation by straightforward composition.
inline double forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& z) {
  require(z.size() == net.input_dim(), ErrorCode::DimensionMismatch,
          "input length " + std::to_string(z.size()) + " != network input_dim " +
              std::to_string(net.input_dim()));
  Eigen::VectorXd h = z;
  const auto& layers = net.params.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::VectorXd a = layers[i].weights * h;
    if (layers[i].bias.size()) a += layers[i].bias;
    if (i + 1 < layers.size())
      for (Eigen::Index k = 0; k < a.size(); ++k) a[k] = net.activation.value(a[k]);
    h = std::move(a);
  }
  return h[0];
}

}  // namespace drm
