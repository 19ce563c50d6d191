#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "drm/autodiff.hpp"
#include "drm/error.hpp"

namespace drm {

/// Pointwise field state the energy density is evaluated on.
struct PointState {
  double u = 0.0;
  std::array<double, 2> grad{};  // only the first `dim` entries are used
  std::optional<double> u_yy;
};

/// dW/du, dW/d(grad u), dW/du_yy.
struct Partials {
  double du = 0.0;
  std::array<double, 2> dgrad{};
  double du_yy = 0.0;
};

/// Energy density interface consumed by the loss, trainer and NTK code.
template <class P>
concept EnergyDensity = requires(const P& p, std::span<const double> x, const PointState& s) {
  { p.dimension() } -> std::convertible_to<int>;
  { p.derivative_order() } -> std::convertible_to<int>;
  { p.penalty() } -> std::convertible_to<double>;
  { p.value(x, s) } -> std::convertible_to<double>;
  { p.partials(x, s) } -> std::convertible_to<Partials>;
};

/// Densities with a (1 + d) x (1 + d) Hessian in (u, grad u).
template <class P>
concept TwiceDifferentiableDensity = EnergyDensity<P> && requires(const P& p, std::span<const double> x,
                                                                  const PointState& s) {
  { p.hessian(x, s) } -> std::convertible_to<Eigen::MatrixXd>;
};

enum class ProblemId { DW1D, DW1D_Lower, Twin2D, Twin2D_Reg };

inline std::string to_string(ProblemId id) {
  switch (id) {
    case ProblemId::DW1D: return "DW1D";
    case ProblemId::DW1D_Lower: return "DW1D_Lower";
    case ProblemId::Twin2D: return "Twin2D";
    case ProblemId::Twin2D_Reg: return "Twin2D_Reg";
  }
  return "unknown";
}

inline ProblemId parse_problem_id(const std::string& s) {
  if (s == "DW1D") return ProblemId::DW1D;
  if (s == "DW1D_Lower") return ProblemId::DW1D_Lower;
  if (s == "Twin2D") return ProblemId::Twin2D;
  if (s == "Twin2D_Reg") return ProblemId::Twin2D_Reg;
  throw Error(ErrorCode::InvalidSpec, "unknown problem '" + s + "'");
}

/// The four benchmark densities on the unit interval / unit square, all with
/// homogeneous Dirichlet data enforced by a boundary penalty.
///
///   DW1D        (u_x^2 - 1)^2
///   DW1D_Lower  (u_x^2 - 1)^2 + u^2
///   Twin2D      u_x^2 + (u_y^2 - 1)^2
///   Twin2D_Reg  u_x^2 + (u_y^2 - 1)^2 + eps^2 u_yy^2
struct VariationalProblem {
  ProblemId id = ProblemId::DW1D;
  double lambda = 500.0;
  double eps = 0.0;

  static VariationalProblem make(ProblemId id, double lambda = 500.0, double eps = 0.0) {
    return {id, lambda, eps};
  }

  int dimension() const { return id == ProblemId::DW1D || id == ProblemId::DW1D_Lower ? 1 : 2; }
  int derivative_order() const { return id == ProblemId::Twin2D_Reg ? 2 : 1; }
  double penalty() const { return lambda; }

  double value(std::span<const double>, const PointState& s) const {
    switch (id) {
      case ProblemId::DW1D: return well(s.grad[0]);
      case ProblemId::DW1D_Lower: return well(s.grad[0]) + s.u * s.u;
      case ProblemId::Twin2D: return s.grad[0] * s.grad[0] + well(s.grad[1]);
      case ProblemId::Twin2D_Reg: {
        const double uyy = need_uyy(s);
        return s.grad[0] * s.grad[0] + well(s.grad[1]) + eps * eps * uyy * uyy;
      }
    }
    return 0.0;
  }

  Partials partials(std::span<const double>, const PointState& s) const {
    Partials p;
    switch (id) {
      case ProblemId::DW1D: p.dgrad[0] = dwell(s.grad[0]); break;
      case ProblemId::DW1D_Lower:
        p.du = 2.0 * s.u;
        p.dgrad[0] = dwell(s.grad[0]);
        break;
      case ProblemId::Twin2D:
        p.dgrad[0] = 2.0 * s.grad[0];
        p.dgrad[1] = dwell(s.grad[1]);
        break;
      case ProblemId::Twin2D_Reg:
        p.dgrad[0] = 2.0 * s.grad[0];
        p.dgrad[1] = dwell(s.grad[1]);
        p.du_yy = 2.0 * eps * eps * need_uyy(s);
        break;
    }
    return p;
  }

  Eigen::MatrixXd hessian(std::span<const double>, const PointState& s) const {
    const int d = dimension();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(1 + d, 1 + d);
    switch (id) {
      case ProblemId::DW1D: h(1, 1) = ddwell(s.grad[0]); break;
      case ProblemId::DW1D_Lower:
        h(0, 0) = 2.0;
        h(1, 1) = ddwell(s.grad[0]);
        break;
      case ProblemId::Twin2D:
      case ProblemId::Twin2D_Reg:
        h(1, 1) = 2.0;
        h(2, 2) = ddwell(s.grad[1]);
        break;
    }
    return h;
  }

 private:
  static double well(double g) { return (g * g - 1.0) * (g * g - 1.0); }
  static double dwell(double g) { return 4.0 * g * (g * g - 1.0); }
  static double ddwell(double g) { return 12.0 * g * g - 4.0; }
  static double need_uyy(const PointState& s) {
    require(s.u_yy.has_value(), ErrorCode::MissingSecondDerivative, "Twin2D_Reg needs u_yy");
    return *s.u_yy;
  }
};

/// Strictly convex in u: W = (u - sin(2 pi x))^2 on [0, 1]. Used as the
/// sanity case for the linearized training dynamics.
struct ConvexSurrogate {
  double lambda = 0.0;

  int dimension() const { return 1; }
  int derivative_order() const { return 1; }
  double penalty() const { return lambda; }

  static double target(double x) { return std::sin(2.0 * std::numbers::pi * x); }

  double value(std::span<const double> x, const PointState& s) const {
    const double r = s.u - target(x[0]);
    return r * r;
  }
  Partials partials(std::span<const double> x, const PointState& s) const {
    Partials p;
    p.du = 2.0 * (s.u - target(x[0]));
    return p;
  }
  Eigen::MatrixXd hessian(std::span<const double>, const PointState&) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
    h(0, 0) = 2.0;
    return h;
  }
};

/// Convenience wrappers with an explicit gradient vector.
inline PointState make_state(double u, std::span<const double> grad, std::optional<double> u_yy) {
  PointState s;
  s.u = u;
  for (std::size_t i = 0; i < grad.size() && i < 2; ++i) s.grad[i] = grad[i];
  s.u_yy = u_yy;
  return s;
}

inline double lagrangian(const VariationalProblem& prob, std::span<const double> x, double u,
                         std::span<const double> grad, std::optional<double> u_yy = std::nullopt) {
  require(static_cast<int>(grad.size()) == prob.dimension(), ErrorCode::DimensionMismatch,
          "gradient length does not match problem dimension");
  if (prob.derivative_order() == 2)
    require(u_yy.has_value(), ErrorCode::MissingSecondDerivative, to_string(prob.id) + " needs u_yy");
  return prob.value(x, make_state(u, grad, u_yy));
}

inline Partials lagrangian_partials(const VariationalProblem& prob, std::span<const double> x, double u,
                                    std::span<const double> grad, std::optional<double> u_yy = std::nullopt) {
  require(static_cast<int>(grad.size()) == prob.dimension(), ErrorCode::DimensionMismatch,
          "gradient length does not match problem dimension");
  if (prob.derivative_order() == 2)
    require(u_yy.has_value(), ErrorCode::MissingSecondDerivative, to_string(prob.id) + " needs u_yy");
  return prob.partials(x, make_state(u, grad, u_yy));
}

inline PointState state_of(const JetBatch& jets, Eigen::Index n) {
  PointState s;
  s.u = jets.value[n];
  if (jets.order >= 1)
    for (Eigen::Index i = 0; i < jets.d_input.rows() && i < 2; ++i) s.grad[i] = jets.d_input(i, n);
  if (jets.order == 2) s.u_yy = jets.d2_yy[n];
  return s;
}

inline std::span<const double> point_span(const Eigen::MatrixXd& pts, Eigen::Index n) {
  return {pts.data() + n * pts.rows(), static_cast<std::size_t>(pts.rows())};
}

struct LossEstimate {
  double interior = 0.0;  // mean of W over the interior batch
  double boundary = 0.0;  // mean of u^2 over the boundary batch
  double total = 0.0;     // interior + lambda * boundary
};

/// Monte Carlo estimate of the penalized energy from uniform batches.
template <EnergyDensity P>
LossEstimate penalized_loss_estimate(const P& prob, const Network& net, const FeatureMap& fmap,
                                     const Eigen::MatrixXd& interior, const Eigen::MatrixXd& boundary) {
  require(interior.cols() > 0, ErrorCode::EmptyBatch, "interior batch is empty");
  require(boundary.cols() > 0 || prob.penalty() == 0.0, ErrorCode::EmptyBatch, "boundary batch is empty");
  LossEstimate out;
  const JetBatch jets = forward_jets(net, fmap, interior, prob.derivative_order());
  double sum = 0.0;
  for (Eigen::Index n = 0; n < interior.cols(); ++n) sum += prob.value(point_span(interior, n), state_of(jets, n));
  out.interior = sum / static_cast<double>(interior.cols());
  if (boundary.cols() > 0) {
    const JetBatch b = forward_jets(net, fmap, boundary, 0);
    out.boundary = b.value.squaredNorm() / static_cast<double>(boundary.cols());
  }
  out.total = out.interior + prob.penalty() * out.boundary;
  return out;
}

struct LossAndGradient {
  LossEstimate loss;
  ParameterGradient gradient;
};

/// Penalized loss together with its exact parameter gradient. An empty
/// boundary set drops the penalty term (used for the unpenalized loss in the
/// kernel analysis).
template <EnergyDensity P>
LossAndGradient loss_and_gradient(const P& prob, const Network& net, const FeatureMap& fmap,
                                  const Eigen::MatrixXd& interior, const Eigen::MatrixXd& boundary) {
  require(interior.cols() > 0, ErrorCode::EmptyBatch, "interior batch is empty");
  const int order = prob.derivative_order();
  const int dim = static_cast<int>(interior.rows());
  const Eigen::Index B = interior.cols();

  LossAndGradient out;
  JetTape tape;
  const JetBatch jets = forward_jets(net, fmap, interior, order, &tape);
  JetAdjoint adj;
  adj.value.resize(B);
  adj.d_input.resize(dim, B);
  if (order == 2) adj.d2_yy.resize(B);
  const double inv_b = 1.0 / static_cast<double>(B);
  double sum = 0.0;
  for (Eigen::Index n = 0; n < B; ++n) {
    const auto x = point_span(interior, n);
    const PointState s = state_of(jets, n);
    sum += prob.value(x, s);
    const Partials p = prob.partials(x, s);
    adj.value[n] = p.du * inv_b;
    for (int j = 0; j < dim; ++j) adj.d_input(j, n) = p.dgrad[j] * inv_b;
    if (order == 2) adj.d2_yy[n] = p.du_yy * inv_b;
  }
  out.loss.interior = sum * inv_b;
  out.gradient = backward(net, tape, adj);

  if (boundary.cols() > 0 && prob.penalty() != 0.0) {
    JetTape btape;
    const JetBatch b = forward_jets(net, fmap, boundary, 0, &btape);
    const double inv_bb = 1.0 / static_cast<double>(boundary.cols());
    out.loss.boundary = b.value.squaredNorm() * inv_bb;
    JetAdjoint badj;
    badj.value = (2.0 * prob.penalty() * inv_bb) * b.value;
    out.gradient += backward(net, btape, badj);
  } else if (boundary.cols() > 0) {
    const JetBatch b = forward_jets(net, fmap, boundary, 0);
    out.loss.boundary = b.value.squaredNorm() / static_cast<double>(boundary.cols());
  }
  out.loss.total = out.loss.interior + prob.penalty() * out.loss.boundary;
  return out;
}

/// Closed-form trial field used by the quadrature oracles.
struct AnalyticField {
  std::function<PointState(std::span<const double>)> eval;
};

/// Trapezoid weights on R uniform nodes with unit spacing: 1/2 at the ends,
/// 1 inside. Quadratures multiply the weighted sum by the spacing once.
inline Eigen::VectorXd trapezoid_unit_weights(int R) {
  require(R >= 2, ErrorCode::InvalidSpec, "grid resolution must be >= 2");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(R);
  w[0] = w[R - 1] = 0.5;
  return w;
}

/// Composite trapezoid weights on R uniform nodes of [0, 1].
inline Eigen::VectorXd trapezoid_weights(int R) { return trapezoid_unit_weights(R) / (R - 1); }

/// Trapezoid quadrature of the interior energy of an analytic field.
template <EnergyDensity P>
double oracle_energy(const P& prob, const AnalyticField& field, int R) {
  const Eigen::VectorXd w = trapezoid_unit_weights(R);
  const double h = 1.0 / (R - 1);
  double total = 0.0;
  if (prob.dimension() == 1) {
    for (int i = 0; i < R; ++i) {
      const std::array<double, 1> x{i * h};
      total += w[i] * prob.value(x, field.eval(x));
    }
    return total * h;
  }
  for (int j = 0; j < R; ++j)
    for (int i = 0; i < R; ++i) {
      const std::array<double, 2> x{i * h, j * h};
      total += w[i] * w[j] * prob.value(x, field.eval(x));
    }
  return total * h * h;
}

/// lambda times the mean of u^2 over the boundary; in 2D each edge is
/// integrated with the trapezoid rule and the four edges weigh equally.
template <EnergyDensity P>
double oracle_boundary_penalty(const P& prob, const AnalyticField& field, int R) {
  if (prob.dimension() == 1) {
    const std::array<double, 1> a{0.0}, b{1.0};
    const double ua = field.eval(a).u, ub = field.eval(b).u;
    return prob.penalty() * 0.5 * (ua * ua + ub * ub);
  }
  const Eigen::VectorXd w = trapezoid_unit_weights(R);
  const double h = 1.0 / (R - 1);
  double total = 0.0;
  for (int i = 0; i < R; ++i) {
    const double t = i * h;
    const std::array<std::array<double, 2>, 4> pts{{{t, 0.0}, {t, 1.0}, {0.0, t}, {1.0, t}}};
    for (const auto& p : pts) {
      const double u = field.eval(p).u;
      total += w[i] * u * u;
    }
  }
  return prob.penalty() * 0.25 * total * h;
}

/// d/dx [u_x (u_x^2 - 1)] = (3 u_x^2 - 1) u_xx for the network field; zero
/// wherever the strong form of DW1D holds.
inline double euler_lagrange_residual_dw1d(const Network& net, const FeatureMap& fmap, double x) {
  require(fmap.input_dim() == 1, ErrorCode::DimensionMismatch, "DW1D residual needs a 1D feature map");
  Eigen::VectorXd p(1);
  p << x;
  const JetValue j = evaluate_jet(net, fmap, p, 2);
  const double ux = j.d_input[0];
  return (3.0 * ux * ux - 1.0) * *j.d2_yy;
}

}  // namespace drm
