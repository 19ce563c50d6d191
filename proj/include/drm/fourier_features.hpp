#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "drm/error.hpp"

namespace drm {

enum class FeatureKind { Identity, Fourier1D, Fourier2DPlusIdentity };

/// Fixed input embedding applied before the first layer.
///
///   Identity               x            -> x
///   Fourier1D(i)           x            -> [sin(w x), cos(w x)]
///   Fourier2DPlusIdentity  (x, y)       -> [x, y, sin(w x), cos(w x), sin(w y), cos(w y)]
///
/// with angular frequency w = 2^i * pi.
struct FeatureMap {
  FeatureKind kind = FeatureKind::Identity;
  int exponent = 0;
  int identity_dim = 1;  // spatial dimension for the Identity kind

  static FeatureMap identity(int dim) { return {FeatureKind::Identity, 0, dim}; }
  static FeatureMap fourier_1d(int i) { return {FeatureKind::Fourier1D, i, 1}; }
  static FeatureMap fourier_2d_plus_identity(int i) {
    return {FeatureKind::Fourier2DPlusIdentity, i, 2};
  }

  double omega() const { return std::ldexp(std::numbers::pi, exponent); }

  int input_dim() const {
    switch (kind) {
      case FeatureKind::Identity: return identity_dim;
      case FeatureKind::Fourier1D: return 1;
      case FeatureKind::Fourier2DPlusIdentity: return 2;
    }
    return identity_dim;
  }

  int output_dim() const {
    switch (kind) {
      case FeatureKind::Identity: return identity_dim;
      case FeatureKind::Fourier1D: return 2;
      case FeatureKind::Fourier2DPlusIdentity: return 6;
    }
    return identity_dim;
  }

  std::string name() const {
    switch (kind) {
      case FeatureKind::Identity: return "identity";
      case FeatureKind::Fourier1D: return "fourier1d";
      case FeatureKind::Fourier2DPlusIdentity: return "fourier2d_plus_identity";
    }
    return "unknown";
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// The Fourier variant matching a spatial dimension, or identity when
/// `exponent` is negative.
inline FeatureMap feature_map_for(int dim, int exponent) {
  if (exponent < 0) return FeatureMap::identity(dim);
  return dim == 1 ? FeatureMap::fourier_1d(exponent) : FeatureMap::fourier_2d_plus_identity(exponent);
}

/// Jacobian (output_dim x d) and the second derivative of every feature with
/// respect to the last input coordinate.
struct FeatureJacobian {
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd d2_last;
};

inline void check_point_dim(const FeatureMap& fmap, Eigen::Index n) {
  require(n == fmap.input_dim(), ErrorCode::DimensionMismatch,
          "point has " + std::to_string(n) + " coordinates, feature map '" + fmap.name() +
              "' expects " + std::to_string(fmap.input_dim()));
}

inline Eigen::VectorXd map_point(const FeatureMap& fmap, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_point_dim(fmap, x.size());
  const double w = fmap.omega();
  switch (fmap.kind) {
    case FeatureKind::Identity: return x;
    case FeatureKind::Fourier1D: {
      Eigen::VectorXd out(2);
      out << std::sin(w * x[0]), std::cos(w * x[0]);
      return out;
    }
    case FeatureKind::Fourier2DPlusIdentity: {
      Eigen::VectorXd out(6);
      out << x[0], x[1], std::sin(w * x[0]), std::cos(w * x[0]), std::sin(w * x[1]),
          std::cos(w * x[1]);
      return out;
    }
  }
  return x;
}

inline FeatureJacobian map_jacobian(const FeatureMap& fmap, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_point_dim(fmap, x.size());
  const double w = fmap.omega();
  FeatureJacobian out;
  switch (fmap.kind) {
    case FeatureKind::Identity:
      out.jacobian = Eigen::MatrixXd::Identity(x.size(), x.size());
      out.d2_last = Eigen::VectorXd::Zero(x.size());
      break;
    case FeatureKind::Fourier1D: {
      const double s = std::sin(w * x[0]), c = std::cos(w * x[0]);
      out.jacobian.resize(2, 1);
      out.jacobian << w * c, -w * s;
      out.d2_last.resize(2);
      out.d2_last << -w * w * s, -w * w * c;
      break;
    }
    case FeatureKind::Fourier2DPlusIdentity: {
      const double sx = std::sin(w * x[0]), cx = std::cos(w * x[0]);
      const double sy = std::sin(w * x[1]), cy = std::cos(w * x[1]);
      out.jacobian = Eigen::MatrixXd::Zero(6, 2);
      out.jacobian(0, 0) = 1.0;
      out.jacobian(1, 1) = 1.0;
      out.jacobian(2, 0) = w * cx;
      out.jacobian(3, 0) = -w * sx;
      out.jacobian(4, 1) = w * cy;
      out.jacobian(5, 1) = -w * sy;
      out.d2_last = Eigen::VectorXd::Zero(6);
      out.d2_last(4) = -w * w * sy;
      out.d2_last(5) = -w * w * cy;
      break;
    }
  }
  return out;
}

}  // namespace drm
