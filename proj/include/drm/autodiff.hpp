#pragma once

// Derivative engine for net(feature_map(x)).
//
// Spatial derivatives are carried forward as tangent columns alongside the
// values (one tangent per input coordinate, plus one second-order tangent in
// the last coordinate). Parameter gradients are then obtained by a reverse
// sweep over that augmented forward pass. A batch of B points is laid out as
// column blocks of width B:
//
//   [ value | d/dx_0 | ... | d/dx_{d-1} | d2/dy2 ]
//
// so every layer is one matrix product over all blocks at once.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drm/error.hpp"
#include "drm/fourier_features.hpp"
#include "drm/network.hpp"

namespace drm {

struct JetValue {
  double value = 0.0;
  Eigen::VectorXd d_input;       // du/dx_i, length d (empty for order 0)
  std::optional<double> d2_yy;   // d2u/dy2, last coordinate, order 2 only
};

/// Jets for a batch; column n belongs to point n.
struct JetBatch {
  int order = 0;
  Eigen::RowVectorXd value;
  Eigen::MatrixXd d_input;  // d x B
  Eigen::RowVectorXd d2_yy;

  Eigen::Index size() const { return value.size(); }

  JetValue at(Eigen::Index n) const {
    JetValue j;
    j.value = value[n];
    if (order >= 1) j.d_input = d_input.col(n);
    if (order == 2) j.d2_yy = d2_yy[n];
    return j;
  }
};

/// Sensitivities of a scalar with respect to the jet outputs, same layout
/// as JetBatch. Missing pieces are treated as zero.
struct JetAdjoint {
  Eigen::RowVectorXd value;
  Eigen::MatrixXd d_input;
  Eigen::RowVectorXd d2_yy;
};

/// Everything the reverse sweep needs from a forward pass.
struct JetTape {
  int order = 0;
  int dim = 1;
  Eigen::Index batch = 0;
  std::vector<Eigen::MatrixXd> layer_inputs;  // state entering each layer
  std::vector<Eigen::MatrixXd> preacts;       // pre-activations of hidden layers

  int blocks() const { return 1 + (order >= 1 ? dim : 0) + (order == 2 ? 1 : 0); }
};

namespace detail {

inline int block_count(int order, int dim) { return 1 + (order >= 1 ? dim : 0) + (order == 2 ? 1 : 0); }

struct ActivationDerivs {
  Eigen::ArrayXXd s1, s2, s3;
};

// Derivatives of the activation at the value block `pv`; s2/s3 are only
// filled when `upto` asks for them.
inline ActivationDerivs activation_derivs(const Activation& act, const Eigen::ArrayXXd& pv, int upto) {
  ActivationDerivs d;
  switch (act.kind) {
    case ActivationKind::ReLU:
      d.s1 = (pv > 0.0).cast<double>();
      if (upto >= 2) d.s2 = Eigen::ArrayXXd::Zero(pv.rows(), pv.cols());
      if (upto >= 3) d.s3 = Eigen::ArrayXXd::Zero(pv.rows(), pv.cols());
      break;
    case ActivationKind::Identity:
      d.s1 = Eigen::ArrayXXd::Ones(pv.rows(), pv.cols());
      if (upto >= 2) d.s2 = Eigen::ArrayXXd::Zero(pv.rows(), pv.cols());
      if (upto >= 3) d.s3 = Eigen::ArrayXXd::Zero(pv.rows(), pv.cols());
      break;
    case ActivationKind::SmoothSqrt: {
      const double r2 = act.rho * act.rho;
      const Eigen::ArrayXXd s = (pv.square() + r2).sqrt();
      d.s1 = pv / s;
      if (upto >= 2) d.s2 = r2 / s.cube();
      if (upto >= 3) d.s3 = -3.0 * r2 * pv / (s.cube() * s.square());
      break;
    }
  }
  return d;
}

inline Eigen::ArrayXXd activation_values(const Activation& act, const Eigen::ArrayXXd& pv) {
  switch (act.kind) {
    case ActivationKind::ReLU: return pv.max(0.0);
    case ActivationKind::Identity: return pv;
    case ActivationKind::SmoothSqrt: return (pv.square() + act.rho * act.rho).sqrt();
  }
  return pv;
}

}  // namespace detail

inline void check_compatible(const Network& net, const FeatureMap& fmap) {
  require(net.input_dim() == fmap.output_dim(), ErrorCode::DimensionMismatch,
          "network input_dim " + std::to_string(net.input_dim()) + " != feature map output_dim " +
              std::to_string(fmap.output_dim()));
}

/// Batched jet evaluation. `points` is d x B. When `tape` is non-null the
/// intermediates are recorded for `backward`.
inline JetBatch forward_jets(const Network& net, const FeatureMap& fmap,
                             const Eigen::Ref<const Eigen::MatrixXd>& points, int order,
                             JetTape* tape = nullptr) {
  require(order >= 0 && order <= 2, ErrorCode::OrderUnsupported, "derivative order must be 0, 1 or 2");
  require(order < 2 || net.activation.has_second_derivative(), ErrorCode::OrderUnsupported,
          "second derivatives need a twice differentiable activation, got " + net.activation.name());
  check_point_dim(fmap, points.rows());
  check_compatible(net, fmap);

  const int dim = static_cast<int>(points.rows());
  const Eigen::Index B = points.cols();
  const int nb = detail::block_count(order, dim);
  const int m = fmap.output_dim();

  Eigen::MatrixXd state(m, nb * B);
  for (Eigen::Index n = 0; n < B; ++n) {
    const Eigen::VectorXd x = points.col(n);
    state.col(n) = map_point(fmap, x);
    if (order >= 1) {
      const FeatureJacobian jac = map_jacobian(fmap, x);
      for (int j = 0; j < dim; ++j) state.col((1 + j) * B + n) = jac.jacobian.col(j);
      if (order == 2) state.col((1 + dim) * B + n) = jac.d2_last;
    }
  }

  if (tape) {
    tape->order = order;
    tape->dim = dim;
    tape->batch = B;
    tape->layer_inputs.clear();
    tape->preacts.clear();
  }

  const auto& layers = net.params.layers;
  const Eigen::Index y_block = dim;  // tangent block of the last coordinate
  for (std::size_t l = 0; l < layers.size(); ++l) {
    // Per-block products keep each block bit-identical across orders.
    Eigen::MatrixXd pre(layers[l].weights.rows(), state.cols());
    for (int b = 0; b < nb; ++b) pre.middleCols(b * B, B).noalias() = layers[l].weights * state.middleCols(b * B, B);
    if (layers[l].bias.size()) pre.leftCols(B).colwise() += layers[l].bias;
    if (tape) tape->layer_inputs.push_back(std::move(state));

    if (l + 1 == layers.size()) {
      state = std::move(pre);
      break;
    }

    const Eigen::ArrayXXd pv = pre.leftCols(B).array();
    const auto ds = detail::activation_derivs(net.activation, pv, order == 2 ? 2 : 1);
    Eigen::MatrixXd next(pre.rows(), pre.cols());
    next.leftCols(B) = detail::activation_values(net.activation, pv).matrix();
    if (order >= 1) {
      for (int j = 0; j < dim; ++j)
        next.middleCols((1 + j) * B, B) = (ds.s1 * pre.middleCols((1 + j) * B, B).array()).matrix();
    }
    if (order == 2) {
      const auto py = pre.middleCols(y_block * B, B).array();
      next.middleCols((1 + dim) * B, B) =
          (ds.s2 * py.square() + ds.s1 * pre.middleCols((1 + dim) * B, B).array()).matrix();
    }
    if (tape) tape->preacts.push_back(std::move(pre));
    state = std::move(next);
  }

  require(state.allFinite(), ErrorCode::NonFiniteValue, "network produced a non-finite value");

  JetBatch out;
  out.order = order;
  out.value = state.row(0).leftCols(B);
  if (order >= 1) {
    out.d_input.resize(dim, B);
    for (int j = 0; j < dim; ++j) out.d_input.row(j) = state.row(0).middleCols((1 + j) * B, B);
  }
  if (order == 2) out.d2_yy = state.row(0).middleCols((1 + dim) * B, B);
  return out;
}

/// Reverse sweep: gradient of sum_n <adjoint_n, jet_n> with respect to every
/// parameter, for the forward pass recorded in `tape`.
inline ParameterGradient backward(const Network& net, const JetTape& tape, const JetAdjoint& adj) {
  const Eigen::Index B = tape.batch;
  const int dim = tape.dim;
  const int order = tape.order;
  const int nb = tape.blocks();
  const auto& layers = net.params.layers;
  require(tape.layer_inputs.size() == layers.size(), ErrorCode::DimensionMismatch,
          "tape does not belong to this network");

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, nb * B);
  require(adj.value.size() == 0 || adj.value.size() == B, ErrorCode::DimensionMismatch, "adjoint size");
  if (adj.value.size()) g.leftCols(B) = adj.value;
  if (order >= 1 && adj.d_input.size()) {
    require(adj.d_input.rows() == dim && adj.d_input.cols() == B, ErrorCode::DimensionMismatch,
            "adjoint d_input shape");
    for (int j = 0; j < dim; ++j) g.middleCols((1 + j) * B, B) = adj.d_input.row(j);
  }
  if (order == 2 && adj.d2_yy.size()) g.middleCols((1 + dim) * B, B) = adj.d2_yy;

  const bool curved = order >= 1 && net.activation.has_second_derivative() &&
                      net.activation.kind != ActivationKind::Identity;

  ParameterGradient grad;
  grad.layers.resize(layers.size());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Eigen::MatrixXd& input = tape.layer_inputs[li];
    grad.layers[li].weights.noalias() = g * input.transpose();
    grad.layers[li].bias = layers[li].bias.size() ? Eigen::VectorXd(g.leftCols(B).rowwise().sum())
                                                   : Eigen::VectorXd();
    if (li == 0) break;

    const Eigen::MatrixXd sbar = layers[li].weights.transpose() * g;
    const Eigen::MatrixXd& pre = tape.preacts[li - 1];
    const Eigen::ArrayXXd pv = pre.leftCols(B).array();
    const auto ds = detail::activation_derivs(net.activation, pv, order == 2 ? 3 : (curved ? 2 : 1));

    Eigen::MatrixXd gn(sbar.rows(), sbar.cols());
    Eigen::ArrayXXd gv = sbar.leftCols(B).array() * ds.s1;
    for (int j = 0; j < dim && order >= 1; ++j) {
      const auto sj = sbar.middleCols((1 + j) * B, B).array();
      gn.middleCols((1 + j) * B, B) = (sj * ds.s1).matrix();
      if (curved) gv += sj * ds.s2 * pre.middleCols((1 + j) * B, B).array();
    }
    if (order == 2) {
      const auto sd2 = sbar.middleCols((1 + dim) * B, B).array();
      const auto py = pre.middleCols(dim * B, B).array();
      const auto pd2 = pre.middleCols((1 + dim) * B, B).array();
      gv += sd2 * (ds.s3 * py.square() + ds.s2 * pd2);
      gn.middleCols(dim * B, B).array() += 2.0 * sd2 * ds.s2 * py;
      gn.middleCols((1 + dim) * B, B) = (sd2 * ds.s1).matrix();
    }
    gn.leftCols(B) = gv.matrix();
    g = std::move(gn);
  }

  require(grad.all_finite(), ErrorCode::NonFiniteValue, "non-finite parameter gradient");
  return grad;
}

inline JetValue evaluate_jet(const Network& net, const FeatureMap& fmap,
                             const Eigen::Ref<const Eigen::VectorXd>& x, int order) {
  return forward_jets(net, fmap, x, order).at(0);
}

/// Partial derivatives of a scalar loss node with respect to one point's jet.
struct JetCotangent {
  double value = 0.0;
  Eigen::VectorXd d_input;
  double d2_yy = 0.0;
};

/// Which scalar to differentiate with respect to the parameters.
struct OutputSelector {
  enum class Kind { Value, InputDerivative, SecondY, Loss };
  Kind kind = Kind::Value;
  int index = 0;       // coordinate for InputDerivative
  int loss_order = 1;  // jet order the loss consumes
  std::function<JetCotangent(const JetValue&)> loss;

  static OutputSelector value() { return {}; }
  static OutputSelector input_derivative(int i) { return {Kind::InputDerivative, i, 1, {}}; }
  static OutputSelector second_y() { return {Kind::SecondY, 0, 2, {}}; }
  static OutputSelector loss_node(int order, std::function<JetCotangent(const JetValue&)> fn) {
    return {Kind::Loss, 0, order, std::move(fn)};
  }

  int order() const {
    switch (kind) {
      case Kind::Value: return 0;
      case Kind::InputDerivative: return 1;
      case Kind::SecondY: return 2;
      case Kind::Loss: return loss_order;
    }
    return 0;
  }
};

inline ParameterGradient parameter_gradient_of(const OutputSelector& sel, const Network& net,
                                               const FeatureMap& fmap,
                                               const Eigen::Ref<const Eigen::VectorXd>& x) {
  JetTape tape;
  const JetBatch jets = forward_jets(net, fmap, x, sel.order(), &tape);
  const int dim = static_cast<int>(x.size());
  JetAdjoint adj;
  switch (sel.kind) {
    case OutputSelector::Kind::Value: adj.value = Eigen::RowVectorXd::Ones(1); break;
    case OutputSelector::Kind::InputDerivative:
      require(sel.index >= 0 && sel.index < dim, ErrorCode::DimensionMismatch, "derivative index out of range");
      adj.d_input = Eigen::MatrixXd::Zero(dim, 1);
      adj.d_input(sel.index, 0) = 1.0;
      break;
    case OutputSelector::Kind::SecondY: adj.d2_yy = Eigen::RowVectorXd::Ones(1); break;
    case OutputSelector::Kind::Loss: {
      const JetCotangent c = sel.loss(jets.at(0));
      require(std::isfinite(c.value) && std::isfinite(c.d2_yy) && (c.d_input.size() == 0 || c.d_input.allFinite()),
              ErrorCode::NonFiniteValue, "loss cotangent is not finite");
      adj.value = Eigen::RowVectorXd::Constant(1, c.value);
      if (sel.loss_order >= 1) {
        adj.d_input = c.d_input.size() ? Eigen::MatrixXd(c.d_input) : Eigen::MatrixXd::Zero(dim, 1);
      }
      if (sel.loss_order == 2) adj.d2_yy = Eigen::RowVectorXd::Constant(1, c.d2_yy);
      break;
    }
  }
  return backward(net, tape, adj);
}

/// Rows d(u)/d(theta), d(du/dx_0)/d(theta), ... at one point, as a
/// (1 + d) x N_theta matrix (only the u row when `with_derivatives` is false).
inline Eigen::MatrixXd parameter_jacobian(const Network& net, const FeatureMap& fmap,
                                          const Eigen::Ref<const Eigen::VectorXd>& x,
                                          bool with_derivatives = true) {
  const int dim = static_cast<int>(x.size());
  const int rows = with_derivatives ? 1 + dim : 1;
  JetTape tape;
  forward_jets(net, fmap, x, with_derivatives ? 1 : 0, &tape);
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(net.parameter_count()));
  for (int r = 0; r < rows; ++r) {
    JetAdjoint adj;
    if (r == 0) {
      adj.value = Eigen::RowVectorXd::Ones(1);
    } else {
      adj.d_input = Eigen::MatrixXd::Zero(dim, 1);
      adj.d_input(r - 1, 0) = 1.0;
    }
    out.row(r) = backward(net, tape, adj).flatten().transpose();
  }
  return out;
}

}  // namespace drm
