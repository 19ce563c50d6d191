#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "drm/autodiff.hpp"
#include "drm/error.hpp"
#include "drm/problems.hpp"
#include "drm/random.hpp"

namespace drm {

/// Jets on a uniform grid including the boundary. In 2D the point index is
/// iy * R + ix (x varies fastest).
struct FieldGrid {
  int dim = 1;
  int resolution = 2;
  Eigen::MatrixXd points;  // d x N
  Eigen::VectorXd u;
  Eigen::MatrixXd grad;    // d x N
  std::optional<Eigen::VectorXd> u_yy;

  Eigen::Index size() const { return u.size(); }
};

inline Eigen::MatrixXd grid_points(int dim, int R) {
  require(R >= 2, ErrorCode::InvalidSpec, "grid resolution must be >= 2");
  const double h = 1.0 / (R - 1);
  if (dim == 1) {
    Eigen::MatrixXd p(1, R);
    for (int i = 0; i < R; ++i) p(0, i) = i * h;
    return p;
  }
  Eigen::MatrixXd p(2, static_cast<Eigen::Index>(R) * R);
  for (int iy = 0; iy < R; ++iy)
    for (int ix = 0; ix < R; ++ix) {
      p(0, iy * R + ix) = ix * h;
      p(1, iy * R + ix) = iy * h;
    }
  return p;
}

/// Jets at an arbitrary point set, evaluated in fixed-size chunks.
inline JetBatch evaluate_points(const Network& net, const FeatureMap& fmap, const Eigen::MatrixXd& pts, int order,
                                Eigen::Index chunk = 4096) {
  JetBatch all;
  all.order = order;
  all.value.resize(pts.cols());
  if (order >= 1) all.d_input.resize(pts.rows(), pts.cols());
  if (order == 2) all.d2_yy.resize(pts.cols());
  for (Eigen::Index s = 0; s < pts.cols(); s += chunk) {
    const Eigen::Index n = std::min(chunk, pts.cols() - s);
    const JetBatch j = forward_jets(net, fmap, pts.middleCols(s, n), order);
    all.value.segment(s, n) = j.value;
    if (order >= 1) all.d_input.middleCols(s, n) = j.d_input;
    if (order == 2) all.d2_yy.segment(s, n) = j.d2_yy;
  }
  return all;
}

template <EnergyDensity P>
FieldGrid evaluate_grid(const Network& net, const FeatureMap& fmap, const P& prob, int R) {
  FieldGrid g;
  g.dim = prob.dimension();
  g.resolution = R;
  g.points = grid_points(g.dim, R);
  const int order = prob.derivative_order();
  const JetBatch j = evaluate_points(net, fmap, g.points, order);
  g.u = j.value.transpose();
  g.grad = j.d_input;
  if (order == 2) g.u_yy = j.d2_yy.transpose();
  return g;
}

/// Slope samples used for transition counting: u_x on the 1D grid, or u_y
/// along the vertical line x = `line_x` in 2D.
template <EnergyDensity P>
Eigen::VectorXd slope_samples(const Network& net, const FeatureMap& fmap, const P& prob, int R,
                              double line_x = 0.5) {
  const double h = 1.0 / (R - 1);
  Eigen::MatrixXd pts(prob.dimension(), R);
  for (int i = 0; i < R; ++i) {
    if (prob.dimension() == 1) {
      pts(0, i) = i * h;
    } else {
      pts(0, i) = line_x;
      pts(1, i) = i * h;
    }
  }
  const JetBatch j = evaluate_points(net, fmap, pts, 1);
  return j.d_input.row(prob.dimension() - 1).transpose();
}

struct TransitionReport {
  int count = 0;
  std::vector<int> states;  // sign of each classified run, in order
  double unclassified_fraction = 0.0;
};

/// Counts switches between the two slope wells. Samples are scaled so that
/// max |s| = 1, each is classified +1 (s > threshold), -1 (s < -threshold)
/// or left unclassified, consecutive equal classes collapse into runs, and
/// the count is the number of sign changes between adjacent runs.
inline TransitionReport count_transitions(std::span<const double> samples, double threshold = 0.5) {
  require(samples.size() >= 2, ErrorCode::InvalidSpec, "need at least two samples");
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::InvalidSpec, "threshold must lie in (0, 1)");
  double peak = 0.0;
  for (double s : samples) {
    require(std::isfinite(s), ErrorCode::NonFiniteValue, "non-finite slope sample");
    peak = std::max(peak, std::abs(s));
  }
  TransitionReport r;
  std::size_t unclassified = 0;
  for (double s : samples) {
    const double v = peak > 0.0 ? s / peak : 0.0;
    int cls = 0;
    if (v > threshold) cls = 1;
    else if (v < -threshold) cls = -1;
    if (cls == 0) {
      ++unclassified;
      continue;
    }
    if (r.states.empty() || r.states.back() != cls) r.states.push_back(cls);
  }
  r.unclassified_fraction = static_cast<double>(unclassified) / static_cast<double>(samples.size());
  require(!r.states.empty(), ErrorCode::AllUnclassified, "every sample lies in the dead zone");
  r.count = static_cast<int>(r.states.size()) - 1;
  return r;
}

inline TransitionReport count_transitions(const Eigen::VectorXd& samples, double threshold = 0.5) {
  return count_transitions(std::span<const double>(samples.data(), static_cast<std::size_t>(samples.size())),
                           threshold);
}

struct EnergyReport {
  double grid_energy = 0.0;       // trapezoid rule on the R (or R x R) grid
  double mc_energy = 0.0;         // Monte Carlo mean of W
  double mc_standard_error = 0.0;
  double boundary_penalty = 0.0;  // lambda * mean of u^2 over the boundary
};

/// Boundary penalty of the network field: both endpoints in 1D, trapezoid
/// average over each of the four edges (equal weight) in 2D.
template <EnergyDensity P>
double grid_boundary_penalty(const Network& net, const FeatureMap& fmap, const P& prob, int R) {
  if (prob.dimension() == 1) {
    Eigen::MatrixXd pts(1, 2);
    pts << 0.0, 1.0;
    const JetBatch j = forward_jets(net, fmap, pts, 0);
    return prob.penalty() * 0.5 * j.value.squaredNorm();
  }
  const Eigen::VectorXd w = trapezoid_unit_weights(R);
  const double h = 1.0 / (R - 1);
  Eigen::MatrixXd pts(2, 4 * R);
  for (int i = 0; i < R; ++i) {
    const double t = i * h;
    pts.col(i) << t, 0.0;
    pts.col(R + i) << t, 1.0;
    pts.col(2 * R + i) << 0.0, t;
    pts.col(3 * R + i) << 1.0, t;
  }
  const JetBatch j = evaluate_points(net, fmap, pts, 0);
  double total = 0.0;
  for (int e = 0; e < 4; ++e)
    for (int i = 0; i < R; ++i) total += w[i] * j.value[e * R + i] * j.value[e * R + i];
  return prob.penalty() * 0.25 * total * h;
}

template <EnergyDensity P>
double grid_energy(const Network& net, const FeatureMap& fmap, const P& prob, int R) {
  const FieldGrid g = evaluate_grid(net, fmap, prob, R);
  const Eigen::VectorXd w = trapezoid_unit_weights(R);
  const double h = 1.0 / (R - 1);
  JetBatch view;
  view.order = prob.derivative_order();
  view.value = g.u.transpose();
  view.d_input = g.grad;
  if (g.u_yy) view.d2_yy = g.u_yy->transpose();
  double total = 0.0;
  for (Eigen::Index n = 0; n < g.size(); ++n) {
    const double weight = g.dim == 1 ? w[n] : w[n % R] * w[n / R];
    total += weight * prob.value(point_span(g.points, n), state_of(view, n));
  }
  return g.dim == 1 ? total * h : total * h * h;
}

template <EnergyDensity P>
EnergyReport energy_report(const Network& net, const FeatureMap& fmap, const P& prob, int R, long mc_samples,
                           std::uint64_t seed) {
  EnergyReport rep;
  rep.grid_energy = grid_energy(net, fmap, prob, R);
  rep.boundary_penalty = grid_boundary_penalty(net, fmap, prob, R);
  if (mc_samples > 0) {
    Rng rng(seed);
    const int dim = prob.dimension();
    const Eigen::Index chunk = 8192;
    double sum = 0.0, sum_sq = 0.0;
    for (long done = 0; done < mc_samples;) {
      const Eigen::Index n = std::min<Eigen::Index>(chunk, mc_samples - done);
      Eigen::MatrixXd pts(dim, n);
      for (Eigen::Index c = 0; c < n; ++c)
        for (int j = 0; j < dim; ++j) pts(j, c) = rng.uniform();
      const JetBatch jets = forward_jets(net, fmap, pts, prob.derivative_order());
      for (Eigen::Index c = 0; c < n; ++c) {
        const double w = prob.value(point_span(pts, c), state_of(jets, c));
        sum += w;
        sum_sq += w * w;
      }
      done += n;
    }
    const double m = static_cast<double>(mc_samples);
    rep.mc_energy = sum / m;
    const double var = std::max(0.0, (sum_sq - m * rep.mc_energy * rep.mc_energy) / std::max(1.0, m - 1.0));
    rep.mc_standard_error = std::sqrt(var / m);
  }
  return rep;
}

}  // namespace drm
