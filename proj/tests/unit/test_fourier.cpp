#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "drm/fourier_features.hpp"
#include "oracles.hpp"

using namespace drm;
using Catch::Approx;
constexpr double pi = std::numbers::pi;

static Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST_CASE("fourier maps at known points") {
  CHECK((map_point(FeatureMap::fourier_1d(1), vec({0.25})) - vec({1.0, 0.0})).norm() < 1e-15);
  CHECK((map_point(FeatureMap::fourier_1d(2), vec({0.5})) - vec({0.0, 1.0})).norm() < 1e-15);
  const Eigen::VectorXd z = map_point(FeatureMap::fourier_2d_plus_identity(1), vec({0.5, 0.25}));
  CHECK((z - vec({0.5, 0.25, 0.0, -1.0, 1.0, 0.0})).norm() < 1e-15);
  CHECK(FeatureMap::fourier_2d_plus_identity(3).output_dim() == 6);
  CHECK(FeatureMap::fourier_1d(3).omega() == Approx(8 * pi));
}

TEST_CASE("fourier jacobian at the origin and identity jacobian") {
  const FeatureJacobian j0 = map_jacobian(FeatureMap::fourier_1d(0), vec({0.0}));
  CHECK(j0.jacobian(0, 0) == Approx(pi));
  CHECK(j0.jacobian(1, 0) == Approx(0.0).margin(1e-15));
  const FeatureJacobian j1 = map_jacobian(FeatureMap::fourier_1d(1), vec({0.0}));
  CHECK(j1.jacobian(0, 0) == Approx(2 * pi));
  CHECK(j1.jacobian(1, 0) == Approx(0.0).margin(1e-15));
  const FeatureJacobian id = map_jacobian(FeatureMap::identity(2), vec({0.3, 0.9}));
  CHECK(id.jacobian.isIdentity(0.0));
  CHECK(id.d2_last.isZero(0.0));
}

TEST_CASE("fourier pair has unit norm and the expected period") {
  for (int i = 0; i < 5; ++i) {
    const auto f = FeatureMap::fourier_1d(i);
    const double period = std::pow(2.0, 1 - i);
    for (double x = -1.3; x < 1.3; x += 0.0917) {
      CHECK(std::abs(map_point(f, vec({x})).norm() - 1.0) < 1e-12);
      CHECK((map_point(f, vec({x})) - map_point(f, vec({x + period}))).norm() < 1e-9);
    }
  }
}

TEST_CASE("feature jacobians agree with finite differences and the hand oracle") {
  for (int i = 0; i < 4; ++i) {
    for (double x : {0.0, 0.13, 0.5, 0.77}) {
      for (double y : {0.0, 0.31, 0.9}) {
        const auto f = FeatureMap::fourier_2d_plus_identity(i);
        const FeatureJacobian j = map_jacobian(f, vec({x, y}));
        for (Eigen::Index r = 0; r < 6; ++r) {
          const auto comp = [&](const std::vector<double>& p) { return oracle::features("fourier2d", i, p)[r]; };
          CHECK(j.jacobian(r, 0) == Approx(oracle::d_dx(comp, {x, y}, 0)).margin(1e-7 * std::pow(2, 2 * i)));
          CHECK(j.jacobian(r, 1) == Approx(oracle::d_dx(comp, {x, y}, 1)).margin(1e-7 * std::pow(2, 2 * i)));
          CHECK(j.d2_last[r] == Approx(oracle::d2_dx2(comp, {x, y}, 1)).margin(1e-4 * std::pow(2, 3 * i)));
          CHECK(map_point(f, vec({x, y}))[r] == Approx(comp({x, y})).margin(1e-15));
        }
      }
    }
  }
}

TEST_CASE("feature map rejects points of the wrong dimension") {
  CHECK_THROWS_AS(map_point(FeatureMap::fourier_1d(1), vec({0.1, 0.2})), Error);
  CHECK(feature_map_for(2, -1) == FeatureMap::identity(2));
  CHECK(feature_map_for(1, 3) == FeatureMap::fourier_1d(3));
}
