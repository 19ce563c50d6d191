#pragma once

// Empirical neural tangent kernel of the Ritz loss.
//
// For a point x the network contributes the outputs U(x) = [u, du/dx_0, ...]
// and the kernel block is K(x_m, x_n) = J(x_m) J(x_n)^T with J = dU/dtheta.
// Gram matrices are laid out point-major: row (1+d)*n + r is output r of
// point n, the same order as the stacked Lagrangian gradient dW/dU.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drm/autodiff.hpp"
#include "drm/error.hpp"
#include "drm/network.hpp"
#include "drm/problems.hpp"
#include "drm/trainer.hpp"

namespace drm {

inline Eigen::MatrixXd ntk_block_from_jacobians(const Eigen::MatrixXd& jac_m, const Eigen::MatrixXd& jac_n) {
  require(jac_m.cols() == jac_n.cols(), ErrorCode::DimensionMismatch, "jacobians over different parameter sets");
  return jac_m * jac_n.transpose();
}

inline Eigen::MatrixXd ntk_block(const Network& net, const FeatureMap& fmap, const Eigen::VectorXd& x_m,
                                 const Eigen::VectorXd& x_n) {
  return ntk_block_from_jacobians(parameter_jacobian(net, fmap, x_m), parameter_jacobian(net, fmap, x_n));
}

/// Stacked (1+d)|X| x N_theta jacobian over a point set (d x |X|).
inline Eigen::MatrixXd stacked_jacobian(const Network& net, const FeatureMap& fmap, const Eigen::MatrixXd& points,
                                        bool with_derivatives) {
  const Eigen::Index rows_per = with_derivatives ? 1 + points.rows() : 1;
  Eigen::MatrixXd out(rows_per * points.cols(), static_cast<Eigen::Index>(net.parameter_count()));
  for (Eigen::Index n = 0; n < points.cols(); ++n)
    out.middleRows(rows_per * n, rows_per) = parameter_jacobian(net, fmap, points.col(n), with_derivatives);
  return out;
}

struct GramSpectrum {
  int block = 2;                           // outputs per point
  Eigen::MatrixXd gram;                    // M_X
  std::optional<Eigen::MatrixXd> hessian;  // D_X, block diagonal
  Eigen::VectorXd eigenvalues;             // descending (real parts)
  Eigen::VectorXd imag_parts;              // matching imaginary parts
  Eigen::MatrixXd eigenvectors;            // columns, real basis
  bool symmetric = true;                   // eigensystem of M_X alone
  bool complex_spectrum = false;           // imaginary parts above round-off

  Eigen::Index size() const { return gram.rows(); }
};

/// Eigen-decomposes M_X (symmetric solver) or D_X M_X (general solver),
/// sorting eigenpairs by descending real part.
inline void decompose(GramSpectrum& s) {
  const Eigen::Index n = s.gram.rows();
  if (!s.hessian) {
    s.symmetric = true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.gram);
    require(es.info() == Eigen::Success, ErrorCode::EigenFailure, "symmetric eigensolver did not converge");
    s.eigenvalues = es.eigenvalues().reverse();
    s.eigenvectors = es.eigenvectors().rowwise().reverse();
    s.imag_parts = Eigen::VectorXd::Zero(n);
    s.complex_spectrum = false;
    return;
  }
  s.symmetric = false;
  const Eigen::MatrixXd product = (*s.hessian) * s.gram;
  Eigen::EigenSolver<Eigen::MatrixXd> es(product);
  require(es.info() == Eigen::Success, ErrorCode::EigenFailure, "general eigensolver did not converge");
  const Eigen::VectorXcd vals = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return vals[a].real() > vals[b].real(); });
  s.eigenvalues.resize(n);
  s.imag_parts.resize(n);
  s.eigenvectors.resize(n, n);
  s.complex_spectrum = false;
  const double scale = n > 0 ? std::abs(vals[order[0]]) : 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& v = vals[order[static_cast<std::size_t>(k)]];
    s.eigenvalues[k] = v.real();
    s.imag_parts[k] = v.imag();
    // Imaginary parts below 1e-8 |lambda| (or below 1e-9 |lambda_1| for
    // numerically zero eigenvalues) are treated as round-off.
    if (std::abs(v.imag()) > std::max(1e-8 * std::abs(v), 1e-9 * scale)) s.complex_spectrum = true;
    // Real basis for a conjugate pair: Re v for the +imag member, Im v for the other.
    const auto col = vecs.col(order[static_cast<std::size_t>(k)]);
    s.eigenvectors.col(k) = v.imag() < 0 ? Eigen::VectorXd(col.imag()) : Eigen::VectorXd(col.real());
    s.eigenvectors.col(k).normalize();
  }
}

inline GramSpectrum gram_from_jacobian(const Eigen::MatrixXd& jac, int block) {
  GramSpectrum s;
  s.block = block;
  s.gram = jac * jac.transpose();
  s.gram = 0.5 * (s.gram + s.gram.transpose()).eval();
  decompose(s);
  return s;
}

/// Dense Gram matrix of the empirical NTK over `points` (d x |X|). With
/// `with_derivatives` false only the u-rows are kept (scalar kernel).
inline GramSpectrum assemble_gram(const Network& net, const FeatureMap& fmap, const Eigen::MatrixXd& points,
                                  bool with_derivatives = true) {
  require(points.cols() >= 1, ErrorCode::EmptyBatch, "need at least one point");
  const Eigen::MatrixXd jac = stacked_jacobian(net, fmap, points, with_derivatives);
  return gram_from_jacobian(jac, with_derivatives ? 1 + static_cast<int>(points.rows()) : 1);
}

/// Block-diagonal D_X of per-point Hessians of W in (u, grad u).
template <TwiceDifferentiableDensity P>
Eigen::MatrixXd hessian_blocks(const P& prob, const Network& net, const FeatureMap& fmap,
                               const Eigen::MatrixXd& points) {
  const JetBatch jets = forward_jets(net, fmap, points, 1);
  const Eigen::Index b = 1 + points.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(b * points.cols(), b * points.cols());
  for (Eigen::Index n = 0; n < points.cols(); ++n)
    D.block(b * n, b * n, b, b) = prob.hessian(point_span(points, n), state_of(jets, n));
  return D;
}

/// Attaches D_X and re-decomposes as D_X M_X.
inline void attach_hessian(GramSpectrum& s, Eigen::MatrixXd D) {
  require(D.rows() == s.gram.rows() && D.cols() == s.gram.cols(), ErrorCode::DimensionMismatch,
          "Hessian blocks do not match the Gram matrix");
  s.hessian = std::move(D);
  decompose(s);
}

/// Coordinates of `g` in the eigenbasis: V^{-1} g.
inline Eigen::VectorXd modal_coefficients(const GramSpectrum& s, const Eigen::VectorXd& g) {
  if (s.symmetric) return s.eigenvectors.transpose() * g;
  return s.eigenvectors.colPivHouseholderQr().solve(g);
}

/// Closed-form solution of dg/dt = -(eta/|X|) D_X M_X g:
///   g(t) = V exp(-eta Lambda t / |X|) V^{-1} g(0).
inline std::vector<Eigen::VectorXd> linearized_dynamics(const GramSpectrum& s, const Eigen::VectorXd& g0, double eta,
                                                        double n_points, const std::vector<double>& times) {
  require(!s.complex_spectrum, ErrorCode::ComplexSpectrum,
          "D_X M_X has eigenvalues with significant imaginary parts");
  require(g0.size() == s.size(), ErrorCode::DimensionMismatch, "initial gradient length mismatch");
  const Eigen::VectorXd c0 = modal_coefficients(s, g0);
  std::vector<Eigen::VectorXd> out;
  out.reserve(times.size());
  for (double t : times) {
    const Eigen::VectorXd decay = (-eta * t / n_points * s.eigenvalues.array()).exp();
    out.push_back(s.eigenvectors * decay.cwiseProduct(c0));
  }
  return out;
}

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  int k_lo = 0;  // 1-based, inclusive
  int k_hi = 0;
  int used = 0;
};

/// Least-squares slope of log(lambda_k) against log(k) for k in [k_lo, k_hi]
/// (1-based, eigenvalues sorted descending).
inline DecayFit eigendecay_fit(const Eigen::VectorXd& eigenvalues, int k_lo, int k_hi) {
  require(k_lo >= 1 && k_hi >= k_lo, ErrorCode::InvalidSpec, "invalid eigenvalue window");
  const double floor = eigenvalues.size() ? 1e-12 * eigenvalues[0] : 0.0;
  std::vector<double> lx, ly;
  for (int k = k_lo; k <= k_hi && k <= eigenvalues.size(); ++k) {
    const double v = eigenvalues[k - 1];
    if (v > floor && v > 0.0) {
      lx.push_back(std::log(static_cast<double>(k)));
      ly.push_back(std::log(v));
    }
  }
  require(lx.size() >= 10, ErrorCode::InsufficientSpectrum,
          "only " + std::to_string(lx.size()) + " usable eigenvalues in the window");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  DecayFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.k_lo = k_lo;
  fit.k_hi = k_hi;
  fit.used = static_cast<int>(lx.size());
  return fit;
}

/// Uniform grid x_i = i / n, i = 1..n on (0, 1]. Nested when n doubles.
inline Eigen::VectorXd nested_grid(int n) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = static_cast<double>(i + 1) / n;
  return x;
}

struct OperatorEigenRow {
  int n = 0;
  Eigen::VectorXd scaled;  // lambda_k(M_n) / n, k = 1..k_max
};

/// Gram eigenvalues divided by n for a scalar kernel sampled on nested grids;
/// these converge to the eigenvalues of the integral operator on [0, 1].
inline std::vector<OperatorEigenRow> operator_eigenvalue_relation(
    const std::function<double(double, double)>& kernel, const std::vector<int>& sizes, int k_max) {
  std::vector<OperatorEigenRow> rows;
  for (int n : sizes) {
    require(n >= 1, ErrorCode::InvalidSpec, "grid size must be positive");
    const Eigen::VectorXd x = nested_grid(n);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = kernel(x[i], x[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorCode::EigenFailure, "kernel eigensolve failed");
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    OperatorEigenRow row;
    row.n = n;
    row.scaled = Eigen::VectorXd::Zero(k_max);
    for (int k = 0; k < k_max && k < n; ++k) row.scaled[k] = ev[k] / n;
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Gram matrices averaged over initialization seeds, plus each seed's own
/// spectrum to report the spread.
struct EnsembleSpectrum {
  GramSpectrum mean;
  std::vector<Eigen::VectorXd> per_seed_eigenvalues;
};

inline EnsembleSpectrum ensemble_gram(const NetworkConfig& cfg, const FeatureMap& fmap, const Eigen::MatrixXd& points,
                                      const std::vector<std::uint64_t>& seeds, bool with_derivatives) {
  require(!seeds.empty(), ErrorCode::InvalidSpec, "need at least one seed");
  EnsembleSpectrum out;
  Eigen::MatrixXd sum;
  for (std::uint64_t seed : seeds) {
    const Network net(cfg, seed);
    GramSpectrum s = assemble_gram(net, fmap, points, with_derivatives);
    out.per_seed_eigenvalues.push_back(s.eigenvalues);
    if (sum.size() == 0)
      sum = s.gram;
    else
      sum += s.gram;
    out.mean.block = s.block;
  }
  out.mean.gram = sum / static_cast<double>(seeds.size());
  decompose(out.mean);
  return out;
}

/// Stacked dW/dU over a point set for the current network.
template <EnergyDensity P>
Eigen::VectorXd lagrangian_gradient(const P& prob, const Network& net, const FeatureMap& fmap,
                                    const Eigen::MatrixXd& points) {
  const JetBatch jets = forward_jets(net, fmap, points, 1);
  const Eigen::Index b = 1 + points.rows();
  Eigen::VectorXd g(b * points.cols());
  for (Eigen::Index n = 0; n < points.cols(); ++n) {
    const Partials p = prob.partials(point_span(points, n), state_of(jets, n));
    g[b * n] = p.du;
    for (Eigen::Index j = 0; j + 1 < b; ++j) g[b * n + 1 + j] = p.dgrad[static_cast<std::size_t>(j)];
  }
  return g;
}

struct GradientTrace {
  std::vector<long> steps;
  std::vector<Eigen::VectorXd> lagrangian_gradients;  // dW/dU at each recorded step
  Network final_net;
};

/// Plain gradient descent on the unpenalized empirical loss
/// (1/|X|) sum_n W(x_n, u_n, u'_n), recording dW/dU every `record_every`
/// steps (and at the last step).
template <EnergyDensity P>
GradientTrace trace_gradient_descent(const P& prob, Network net, const FeatureMap& fmap, const Eigen::MatrixXd& points,
                                     double eta, long steps, long record_every = 1) {
  GradientTrace trace;
  const Eigen::MatrixXd no_boundary(points.rows(), 0);
  for (long step = 0; step <= steps; ++step) {
    if (step % record_every == 0 || step == steps) {
      trace.steps.push_back(step);
      trace.lagrangian_gradients.push_back(lagrangian_gradient(prob, net, fmap, points));
    }
    if (step == steps) break;
    const LossAndGradient lg = loss_and_gradient(prob, net, fmap, points, no_boundary);
    gradient_descent_step(net.params, lg.gradient, eta);
  }
  trace.final_net = std::move(net);
  return trace;
}

inline double relative_parameter_drift(const ParameterVector& start, const ParameterVector& end) {
  const Eigen::VectorXd a = start.flatten();
  return (end.flatten() - a).norm() / a.norm();
}

inline double relative_gram_drift(const Eigen::MatrixXd& start, const Eigen::MatrixXd& end) {
  return (end - start).norm() / start.norm();
}

/// Measured gradient-descent trajectory of dW/dU next to the closed-form
/// linearized prediction, both expressed in the eigenbasis of D_X M_X at
/// initialization. `top` leading modes are tracked separately.
struct DynamicsComparison {
  GramSpectrum initial;
  std::vector<long> steps;
  std::vector<double> measured_norm;
  std::vector<double> predicted_norm;
  std::vector<double> measured_top;
  std::vector<double> predicted_top;
  double parameter_drift = 0.0;
  double gram_drift = 0.0;
};

template <TwiceDifferentiableDensity P>
DynamicsComparison compare_linearized_dynamics(const P& prob, const Network& net, const FeatureMap& fmap,
                                               const Eigen::MatrixXd& points, double eta, long steps,
                                               long record_every, int top) {
  require(top >= 1, ErrorCode::InvalidSpec, "need at least one tracked mode");
  DynamicsComparison out;
  out.initial = assemble_gram(net, fmap, points, true);
  attach_hessian(out.initial, hessian_blocks(prob, net, fmap, points));
  const GradientTrace trace = trace_gradient_descent(prob, net, fmap, points, eta, steps, record_every);
  const Eigen::VectorXd& g0 = trace.lagrangian_gradients.front();
  const std::vector<double> times(trace.steps.begin(), trace.steps.end());
  const auto predicted = linearized_dynamics(out.initial, g0, eta, static_cast<double>(points.cols()), times);
  const Eigen::Index k = std::min<Eigen::Index>(top, out.initial.size());
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const Eigen::VectorXd& g = trace.lagrangian_gradients[i];
    out.steps.push_back(trace.steps[i]);
    out.measured_norm.push_back(g.norm());
    out.predicted_norm.push_back(predicted[i].norm());
    out.measured_top.push_back(modal_coefficients(out.initial, g).head(k).norm());
    out.predicted_top.push_back(modal_coefficients(out.initial, predicted[i]).head(k).norm());
  }
  out.parameter_drift = relative_parameter_drift(net.params, trace.final_net.params);
  out.gram_drift =
      relative_gram_drift(out.initial.gram, assemble_gram(trace.final_net, fmap, points, true).gram);
  return out;
}

}  // namespace drm
