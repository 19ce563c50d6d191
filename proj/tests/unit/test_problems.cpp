#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "drm/problems.hpp"
#include "drm/random.hpp"
#include "oracles.hpp"

using namespace drm;
using Catch::Approx;

static const std::array<double, 1> x1{0.3};
static const std::array<double, 2> x2{0.3, 0.6};


TEST_CASE("lagrangian values") {
  const auto dw = VariationalProblem::make(ProblemId::DW1D);
  CHECK(lagrangian(dw, x1, 0.0, std::array{1.0}) == 0.0);
  CHECK(lagrangian(dw, x1, 0.0, std::array{0.0}) == 1.0);
  const auto reg = VariationalProblem::make(ProblemId::Twin2D_Reg, 500.0, 0.1 / 4);
  CHECK(lagrangian(reg, x2, 0.0, std::array{0.0, 1.0}, 4.0) == Approx(0.01));
  CHECK_THROWS_AS(lagrangian(reg, x2, 0.0, std::array{0.0, 1.0}), Error);
  CHECK_THROWS_AS(lagrangian(dw, x1, 0.0, std::array{0.0, 1.0}), Error);
}

TEST_CASE("lagrangian partials at known states") {
  const auto dw = VariationalProblem::make(ProblemId::DW1D);
  CHECK(lagrangian_partials(dw, x1, 0.0, std::array{1.0}).dgrad[0] == 0.0);
  const auto low = VariationalProblem::make(ProblemId::DW1D_Lower);
  CHECK(lagrangian_partials(low, x1, 0.5, std::array{0.2}).du == Approx(1.0));
}

TEST_CASE("densities are non-negative and partials match finite differences") {
  Rng rng(5);
  for (auto id : {ProblemId::DW1D, ProblemId::DW1D_Lower, ProblemId::Twin2D, ProblemId::Twin2D_Reg}) {
    const auto prob = VariationalProblem::make(id, 500.0, 0.1 / 16);
    const int d = prob.dimension();
    for (int trial = 0; trial < 50; ++trial) {
      const double u = rng.uniform(-2, 2);
      std::array<double, 2> g{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      const double uyy = rng.uniform(-30, 30);
      auto W = [&](double uu, std::array<double, 2> gg, double yy) {
        return prob.value(x2, make_state(uu, {gg.data(), static_cast<std::size_t>(d)}, yy));
      };
      CHECK(W(u, g, uyy) >= 0.0);
      const Partials p = prob.partials(x2, make_state(u, {g.data(), static_cast<std::size_t>(d)}, uyy));
      const double h = 1e-6;
      CHECK(p.du == Approx((W(u + h, g, uyy) - W(u - h, g, uyy)) / (2 * h)).margin(1e-7));
      for (int k = 0; k < d; ++k) {
        auto gp = g, gm = g;
        gp[k] += h;
        gm[k] -= h;
        CHECK(p.dgrad[k] == Approx((W(u, gp, uyy) - W(u, gm, uyy)) / (2 * h)).epsilon(1e-7).margin(1e-7));
      }
      CHECK(p.du_yy == Approx((W(u, g, uyy + h) - W(u, g, uyy - h)) / (2 * h)).margin(1e-7));
      const Eigen::MatrixXd H = prob.hessian(x2, make_state(u, {g.data(), static_cast<std::size_t>(d)}, uyy));
      auto P = [&](double uu, std::array<double, 2> gg) {
        const Partials q = prob.partials(x2, make_state(uu, {gg.data(), static_cast<std::size_t>(d)}, uyy));
        Eigen::VectorXd v(1 + d);
        v[0] = q.du;
        for (int k = 0; k < d; ++k) v[1 + k] = q.dgrad[k];
        return v;
      };
      CHECK((H.col(0) - (P(u + h, g) - P(u - h, g)) / (2 * h)).norm() < 1e-6);
      for (int k = 0; k < d; ++k) {
        auto gp = g, gm = g;
        gp[k] += h;
        gm[k] -= h;
        CHECK((H.col(1 + k) - (P(u, gp) - P(u, gm)) / (2 * h)).norm() < 1e-6 * (1 + H.norm()));
      }
    }
  }
}

TEST_CASE("hessian blocks at the wells") {
  const auto dw = VariationalProblem::make(ProblemId::DW1D);
  const Eigen::MatrixXd on = dw.hessian(x1, make_state(0.0, std::array{1.0}, std::nullopt));
  CHECK(on(1, 1) == 8.0);
  CHECK(on(0, 0) == 0.0);
  const Eigen::MatrixXd off = dw.hessian(x1, make_state(0.0, std::array{0.0}, std::nullopt));
  CHECK(off(1, 1) == -4.0);
  CHECK(VariationalProblem::make(ProblemId::DW1D_Lower).hessian(x1, make_state(3.0, std::array{0.4}, std::nullopt))(0, 0) == 2.0);
}

static AnalyticField hat() {
  return {[](std::span<const double> x) {
    PointState s;
    s.u = std::min(x[0], 1.0 - x[0]);
    s.grad[0] = x[0] < 0.5 ? 1.0 : -1.0;
    return s;
  }};
}

static AnalyticField sawtooth(int k) {
  return {[k](std::span<const double> x) {
    const double t = x[0] * k - std::floor(x[0] * k);
    PointState s;
    s.u = std::min(t, 1.0 - t) / k;
    s.grad[0] = t < 0.5 ? 1.0 : -1.0;
    return s;
  }};
}

TEST_CASE("oracle energies of closed-form fields") {
  const auto dw = VariationalProblem::make(ProblemId::DW1D);
  for (int R : {3, 11, 101, 1000}) CHECK(oracle_energy(dw, hat(), R) < 1e-12);
  const AnalyticField zero{[](std::span<const double>) { return PointState{}; }};
  CHECK(oracle_energy(dw, zero, 64) == Approx(1.0));
  CHECK(oracle_boundary_penalty(dw, hat(), 64) == 0.0);

  // integral of a triangle wave of amplitude 1/(2k) squared is 1/(12 k^2)
  const auto low = VariationalProblem::make(ProblemId::DW1D_Lower);
  for (int k : {1, 2, 4}) CHECK(oracle_energy(low, sawtooth(k), 4 * 1024 * k + 1) == Approx(1.0 / (12.0 * k * k)).epsilon(1e-5));
  CHECK(1.0 / (12.0 * 16) == Approx(0.005208333));
}

TEST_CASE("twin2d laminate has zero interior energy but violates the boundary") {
  const auto twin = VariationalProblem::make(ProblemId::Twin2D);
  const AnalyticField lam{[](std::span<const double> x) {
    const double t = x[1] * 4 - std::floor(x[1] * 4);
    PointState s;
    s.u = std::min(t, 1.0 - t) / 4 + 0.2;
    s.grad[0] = 0.0;
    s.grad[1] = t < 0.5 ? 1.0 : -1.0;
    return s;
  }};
  CHECK(oracle_energy(twin, lam, 257) < 1e-10);
  CHECK(oracle_boundary_penalty(twin, lam, 257) > 1.0);
}

TEST_CASE("penalized loss estimate") {
  NetworkConfig cfg;
  cfg.hidden_layers = 2;
  cfg.width = 8;
  Network zero(cfg, 1);
  zero.params.set_zero();
  const auto dw = VariationalProblem::make(ProblemId::DW1D);
  Eigen::MatrixXd interior = Eigen::MatrixXd::Random(1, 20).array().abs();
  Eigen::MatrixXd boundary(1, 2);
  boundary << 0.0, 1.0;
  CHECK(penalized_loss_estimate(dw, zero, FeatureMap::identity(1), interior, boundary).total == 1.0);

  // u = x + 0.1 on DW1D: interior W = 0, u(0) = 0.1, u(1) = 1.1
  const Network line = oracle::affine(1.0, 0.1);
  Eigen::MatrixXd left(1, 2);
  left << 0.0, 0.0;
  const auto est = penalized_loss_estimate(dw, line, FeatureMap::identity(1), interior, left);
  CHECK(est.interior == Approx(0.0).margin(1e-15));
  CHECK(est.total == Approx(5.0));
  CHECK_THROWS_AS(penalized_loss_estimate(dw, line, FeatureMap::identity(1), Eigen::MatrixXd(1, 0), left), Error);
  CHECK_THROWS_AS(penalized_loss_estimate(dw, line, FeatureMap::identity(1), interior, Eigen::MatrixXd(1, 0)), Error);
}

TEST_CASE("euler-lagrange residual vanishes for the zero field and unit slopes") {
  NetworkConfig cfg;
  cfg.hidden_layers = 2;
  cfg.width = 8;
  cfg.activation = Activation::smooth_sqrt(0.1);
  Network zero(cfg, 1);
  zero.params.set_zero();
  const Network line = oracle::affine(1.0, 0.0);
  for (int i = 0; i < 100; ++i) {
    const double x = (i + 0.5) / 100;
    CHECK(euler_lagrange_residual_dw1d(zero, FeatureMap::identity(1), x) == 0.0);
    CHECK(euler_lagrange_residual_dw1d(line, FeatureMap::identity(1), x) == 0.0);
  }
}
