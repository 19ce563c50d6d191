#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "drm/ntk.hpp"
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

TEST_CASE("ntk block of the one-parameter linear model") {
  ParameterVector p;
  p.layers.push_back({Eigen::MatrixXd::Constant(1, 1, 0.8), Eigen::VectorXd::Zero(0)});
  const Network net(Activation::identity(), p);
  const Eigen::MatrixXd K = ntk_block(net, FeatureMap::identity(1), vec({0.3}), vec({0.7}));
  Eigen::Matrix2d expect;
  expect << 0.3 * 0.7, 0.3, 0.7, 1.0;
  CHECK((K - expect).norm() < 1e-15);
}

TEST_CASE("ntk blocks are transposes and diagonal blocks are PSD") {
  NetworkConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_layers = 2;
  cfg.width = 20;
  cfg.activation = Activation::smooth_sqrt(0.1);
  const Network net(cfg, 6);
  const auto fm = FeatureMap::identity(2);
  const Eigen::VectorXd a = vec({0.1, 0.8}), b = vec({0.6, 0.3});
  CHECK(ntk_block(net, fm, a, b) == ntk_block(net, fm, b, a).transpose());
  const Eigen::MatrixXd Kaa = ntk_block(net, fm, a, a);
  CHECK((Kaa - Kaa.transpose()).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Kaa);
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * es.eigenvalues().maxCoeff());
}

TEST_CASE("assembled Gram matrices are symmetric PSD") {
  for (auto fm : {FeatureMap::identity(1), FeatureMap::fourier_1d(2)}) {
    NetworkConfig cfg;
    cfg.input_dim = fm.output_dim();
    cfg.hidden_layers = 2;
    cfg.width = 32;
    const Network net(cfg, 3);
    Eigen::MatrixXd pts(1, 24);
    for (int i = 0; i < 24; ++i) pts(0, i) = (i + 0.5) / 24;
    const GramSpectrum s = assemble_gram(net, fm, pts);
    CHECK(s.gram.rows() == 48);
    CHECK((s.gram - s.gram.transpose()).norm() == 0.0);
    CHECK(s.eigenvalues.minCoeff() > -1e-9 * s.eigenvalues[0]);
    for (Eigen::Index k = 1; k < s.eigenvalues.size(); ++k) CHECK(s.eigenvalues[k] <= s.eigenvalues[k - 1]);
  }
}

TEST_CASE("constant kernel has a single eigenvalue n") {
  const int n = 40;
  GramSpectrum s = gram_from_jacobian(Eigen::MatrixXd::Ones(n, 1), 1);
  CHECK(s.eigenvalues[0] == Approx(n));
  CHECK(std::abs(s.eigenvalues[1]) < 1e-12);
  const auto rows = operator_eigenvalue_relation([](double, double) { return 1.0; }, {16, 32}, 3);
  for (const auto& r : rows) {
    CHECK(r.scaled[0] == Approx(1.0));
    CHECK(std::abs(r.scaled[2]) < 1e-12);
  }
}

TEST_CASE("brownian kernel matches the closed-form spectrum") {
  const auto rows = operator_eigenvalue_relation([](double a, double b) { return std::min(a, b); }, {128, 256, 512}, 5);
  for (const auto& r : rows) {
    for (int k = 1; k <= 5; ++k) {
      CHECK(r.scaled[k - 1] == Approx(oracle::brownian_matrix_eigenvalue(r.n, k) / (double(r.n) * r.n)).epsilon(1e-10));
    }
  }
  const auto& last = rows.back();
  CHECK(last.scaled[0] == Approx(4.0 / (pi * pi)).epsilon(0.02));
  CHECK(last.scaled[1] == Approx(4.0 / (9.0 * pi * pi)).epsilon(0.05));
  CHECK(std::abs(rows[0].scaled[0] - 4 / (pi * pi)) > std::abs(rows[2].scaled[0] - 4 / (pi * pi)));
}

TEST_CASE("hessian blocks of DW1D") {
  const Network line = oracle::affine(1.0, 0.0);
  Eigen::MatrixXd pts(1, 2);
  pts << 0.2, 0.9;
  const Eigen::MatrixXd D = hessian_blocks(VariationalProblem::make(ProblemId::DW1D), line, FeatureMap::identity(1), pts);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(4, 4);
  expect(1, 1) = 8.0;
  expect(3, 3) = 8.0;
  CHECK(D == expect);
  const Network flat = oracle::affine(0.0, 0.0);
  CHECK(hessian_blocks(VariationalProblem::make(ProblemId::DW1D), flat, FeatureMap::identity(1), pts)(1, 1) == -4.0);
}

TEST_CASE("scalar linearized dynamics") {
  GramSpectrum s;
  s.gram = Eigen::MatrixXd::Identity(1, 1);
  decompose(s);
  const auto g = linearized_dynamics(s, vec({1.0}), 1.0, 1.0, {0.0, 1.0});
  CHECK(g[0][0] == Approx(1.0));
  CHECK(g[1][0] == Approx(std::exp(-1.0)));
}

TEST_CASE("linearized dynamics match an explicit integrator") {
  Rng rng(4);
  Eigen::MatrixXd A(6, 6);
  for (int i = 0; i < 36; ++i) A(i / 6, i % 6) = rng.normal();
  GramSpectrum s;
  s.gram = A * A.transpose();
  Eigen::VectorXd dd(6);
  for (int i = 0; i < 6; ++i) dd[i] = 0.5 + rng.uniform();
  attach_hessian(s, dd.asDiagonal().toDenseMatrix());
  CHECK_FALSE(s.complex_spectrum);
  Eigen::VectorXd g0(6);
  for (int i = 0; i < 6; ++i) g0[i] = rng.normal();
  const double eta = 0.01, n = 6.0, T = 3.0;
  const auto closed = linearized_dynamics(s, g0, eta, n, {T});
  // RK4 on dg/dt = -(eta/n) D M g
  const Eigen::MatrixXd L = -(eta / n) * (*s.hessian) * s.gram;
  Eigen::VectorXd g = g0;
  const int steps = 20000;
  const double h = T / steps;
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = L * g, k2 = L * (g + 0.5 * h * k1), k3 = L * (g + 0.5 * h * k2), k4 = L * (g + h * k3);
    g += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  CHECK((closed[0] - g).norm() < 1e-9 * g0.norm());
}

TEST_CASE("linearized dynamics with a singular Hessian reproduce the initial gradient") {
  Rng rng(9);
  Eigen::MatrixXd A(8, 3);
  for (int i = 0; i < 24; ++i) A(i / 3, i % 3) = rng.normal();
  GramSpectrum s;
  s.gram = A * A.transpose();
  Eigen::VectorXd dd = Eigen::VectorXd::Zero(8);
  for (int i = 0; i < 8; i += 2) dd[i] = 2.0;
  attach_hessian(s, dd.asDiagonal().toDenseMatrix());
  CHECK_FALSE(s.complex_spectrum);
  Eigen::VectorXd g0 = Eigen::VectorXd::Zero(8);
  for (int i = 0; i < 8; i += 2) g0[i] = rng.normal();
  const auto g = linearized_dynamics(s, g0, 0.1, 8.0, {0.0, 2.0});
  CHECK((g[0] - g0).norm() < 1e-10 * g0.norm());
  const Eigen::MatrixXd L = -(0.1 / 8.0) * (*s.hessian) * s.gram;
  Eigen::VectorXd h = g0;
  for (int i = 0; i < 20000; ++i) h += 1e-4 * L * h;
  CHECK((g[1] - h).norm() < 1e-4 * g0.norm());
}

TEST_CASE("conjugate pairs keep a nonsingular real eigenbasis") {
  GramSpectrum s;
  s.gram = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd m(3, 3);
  m << 0, -1, 0, 1, 0, 0, 0, 0, 2;
  attach_hessian(s, m);
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(s.eigenvectors).rank() == 3);
}

TEST_CASE("complex spectra are flagged and refused") {
  GramSpectrum s;
  s.gram = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd rot(2, 2);
  rot << 0, -1, 1, 0;
  attach_hessian(s, rot);
  CHECK(s.complex_spectrum);
  CHECK_THROWS_AS(linearized_dynamics(s, vec({1.0, 0.0}), 1.0, 1.0, {1.0}), Error);
}

TEST_CASE("eigendecay fit") {
  Eigen::VectorXd pw(100), ex(30);
  for (int k = 1; k <= 100; ++k) pw[k - 1] = std::pow(k, -2.0);
  for (int k = 1; k <= 30; ++k) ex[k - 1] = std::exp(-double(k));
  CHECK(eigendecay_fit(pw, 4, 64).slope == Approx(-2.0).margin(1e-6));
  CHECK(eigendecay_fit(ex, 5, 20).slope < -5.0);
  CHECK_THROWS_AS(eigendecay_fit(pw.head(8), 1, 8), Error);
  CHECK_THROWS_AS(eigendecay_fit(pw, 5, 3), Error);
}

TEST_CASE("lazy training on the convex surrogate", "[slow]") {
  NetworkConfig cfg;
  cfg.hidden_layers = 1;
  cfg.width = 1024;
  const Network net(cfg, 1);
  Eigen::MatrixXd pts(1, 64);
  for (int i = 0; i < 64; ++i) pts(0, i) = (i + 0.5) / 64;
  const auto trace = trace_gradient_descent(ConvexSurrogate{}, net, FeatureMap::identity(1), pts, 1e-4, 500, 500);
  CHECK(relative_parameter_drift(net.params, trace.final_net.params) < 0.05);
  const Eigen::MatrixXd M0 = assemble_gram(net, FeatureMap::identity(1), pts).gram;
  const Eigen::MatrixXd M1 = assemble_gram(trace.final_net, FeatureMap::identity(1), pts).gram;
  CHECK(relative_gram_drift(M0, M1) < 0.1);
  CHECK(trace.lagrangian_gradients.back().norm() < trace.lagrangian_gradients.front().norm());
}
