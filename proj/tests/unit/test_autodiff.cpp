#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "drm/autodiff.hpp"
#include "drm/problems.hpp"
#include "oracles.hpp"

using namespace drm;
using Catch::Approx;

static Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

static std::string oracle_kind(const FeatureMap& f) {
  switch (f.kind) {
    case FeatureKind::Fourier1D: return "fourier1d";
    case FeatureKind::Fourier2DPlusIdentity: return "fourier2d";
    default: return "identity";
  }
}

TEST_CASE("affine network jets") {
  const Network net = oracle::affine(2.0, 1.0);
  const JetValue j = evaluate_jet(net, FeatureMap::identity(1), vec({0.3}), 1);
  CHECK(j.value == Approx(1.6));
  CHECK(j.d_input[0] == Approx(2.0));
}

TEST_CASE("sine through the fourier pair at its crest") {
  ParameterVector p;
  p.layers.push_back({(Eigen::MatrixXd(1, 2) << 1.0, 0.0).finished(), Eigen::VectorXd::Zero(1)});
  const Network net(Activation::identity(), p);
  const JetValue j = evaluate_jet(net, FeatureMap::fourier_1d(0), vec({0.5}), 2);
  CHECK(j.value == Approx(1.0));
  CHECK(j.d_input[0] == Approx(0.0).margin(1e-14));
  CHECK(*j.d2_yy == Approx(-std::numbers::pi * std::numbers::pi));
}

TEST_CASE("linear model parameter gradients") {
  const Network net = oracle::affine(1.7, -0.2);
  const Eigen::VectorXd x = vec({0.4});
  const auto gu = parameter_gradient_of(OutputSelector::value(), net, FeatureMap::identity(1), x).flatten();
  CHECK(gu[0] == Approx(0.4));
  CHECK(gu[1] == Approx(1.0));
  const auto gd = parameter_gradient_of(OutputSelector::input_derivative(0), net, FeatureMap::identity(1), x).flatten();
  CHECK(gd[0] == Approx(1.0));
  CHECK(gd[1] == Approx(0.0).margin(0.0));
}

struct Case {
  FeatureMap fmap;
  Activation act;
  int layers;
};

TEST_CASE("jets match finite differences of the loop oracle") {
  const std::vector<Case> cases{{FeatureMap::identity(1), Activation::smooth_sqrt(0.1), 3},
                                {FeatureMap::fourier_1d(2), Activation::smooth_sqrt(0.1), 2},
                                {FeatureMap::identity(2), Activation::smooth_sqrt(0.3), 2},
                                {FeatureMap::fourier_2d_plus_identity(1), Activation::smooth_sqrt(0.1), 3}};
  for (const auto& c : cases) {
    NetworkConfig cfg;
    cfg.input_dim = c.fmap.output_dim();
    cfg.hidden_layers = c.layers;
    cfg.width = 12;
    cfg.activation = c.act;
    const Network net(cfg, 21);
    const int d = c.fmap.input_dim();
    const oracle::Field f = [&](const std::vector<double>& x) {
      return oracle::forward(net.params, c.act, oracle::features(oracle_kind(c.fmap), c.fmap.exponent, x));
    };
    for (double a : {0.1, 0.45, 0.8}) {
      std::vector<double> x(static_cast<std::size_t>(d), a);
      if (d == 2) x[1] = 1.0 - 0.7 * a;
      const Eigen::VectorXd xe = Eigen::Map<Eigen::VectorXd>(x.data(), d);
      const JetValue j2 = evaluate_jet(net, c.fmap, xe, 2);
      const JetValue j1 = evaluate_jet(net, c.fmap, xe, 1);
      CHECK(j2.value == j1.value);
      CHECK(j2.d_input == j1.d_input);
      CHECK(j1.value == Approx(f(x)).epsilon(1e-12));
      for (int k = 0; k < d; ++k)
        CHECK(j1.d_input[k] == Approx(oracle::d_dx(f, x, static_cast<std::size_t>(k))).epsilon(1e-6).margin(1e-7));
      CHECK(*j2.d2_yy == Approx(oracle::d2_dx2(f, x, static_cast<std::size_t>(d - 1))).epsilon(1e-4).margin(1e-4));
    }
  }
}

TEST_CASE("second order jets require a twice differentiable activation") {
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.hidden_layers = 1;
  const Network net(cfg, 1);
  CHECK_THROWS_MATCHES(evaluate_jet(net, FeatureMap::identity(1), vec({0.3}), 2), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::OrderUnsupported;
                       }));
  CHECK_THROWS_AS(evaluate_jet(net, FeatureMap::identity(1), vec({0.3, 0.1}), 1), Error);
}

TEST_CASE("parameter gradients match central differences") {
  const std::vector<Case> cases{{FeatureMap::identity(1), Activation::smooth_sqrt(0.1), 2},
                                {FeatureMap::fourier_2d_plus_identity(2), Activation::smooth_sqrt(0.1), 2},
                                {FeatureMap::identity(1), Activation::relu(), 2}};
  for (const auto& c : cases) {
    NetworkConfig cfg;
    cfg.input_dim = c.fmap.output_dim();
    cfg.hidden_layers = c.layers;
    cfg.width = 6;
    cfg.activation = c.act;
    Network net(cfg, 4);
    const int d = c.fmap.input_dim();
    const Eigen::VectorXd x = d == 1 ? vec({0.37}) : vec({0.37, 0.61});
    const bool smooth = c.act.has_second_derivative();
    std::vector<OutputSelector> sels{OutputSelector::value(), OutputSelector::input_derivative(d - 1)};
    if (smooth) sels.push_back(OutputSelector::second_y());
    for (const auto& sel : sels) {
      const Eigen::VectorXd g = parameter_gradient_of(sel, net, c.fmap, x).flatten();
      const Eigen::VectorXd fd = oracle::param_gradient(net.params, [&](const ParameterVector& p) {
        const JetValue j = evaluate_jet(Network(c.act, p), c.fmap, x, sel.order());
        if (sel.kind == OutputSelector::Kind::Value) return j.value;
        if (sel.kind == OutputSelector::Kind::InputDerivative) return j.d_input[sel.index];
        return *j.d2_yy;
      });
      CHECK(oracle::relative_error(g, fd) < 1e-5);
    }
  }
}

TEST_CASE("loss node gradient matches finite differences of the loss") {
  NetworkConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_layers = 2;
  cfg.width = 8;
  cfg.activation = Activation::smooth_sqrt(0.1);
  const Network net(cfg, 13);
  const auto prob = VariationalProblem::make(ProblemId::Twin2D_Reg, 500.0, 0.1 / 4);
  const Eigen::VectorXd x = vec({0.2, 0.7});
  auto loss_of = [&](const JetValue& j) {
    return prob.value(std::span<const double>(x.data(), 2), make_state(j.value, {j.d_input.data(), 2}, j.d2_yy));
  };
  const auto sel = OutputSelector::loss_node(2, [&](const JetValue& j) {
    const Partials p = prob.partials(std::span<const double>(x.data(), 2), make_state(j.value, {j.d_input.data(), 2}, j.d2_yy));
    return JetCotangent{p.du, vec({p.dgrad[0], p.dgrad[1]}), p.du_yy};
  });
  const Eigen::VectorXd g = parameter_gradient_of(sel, net, FeatureMap::identity(2), x).flatten();
  const Eigen::VectorXd fd = oracle::param_gradient(net.params, [&](const ParameterVector& p) {
    return loss_of(evaluate_jet(Network(net.activation, p), FeatureMap::identity(2), x, 2));
  });
  CHECK(oracle::relative_error(g, fd) < 1e-5);
}

TEST_CASE("batched gradient equals the sum of per-point gradients") {
  NetworkConfig cfg;
  cfg.hidden_layers = 3;
  cfg.width = 16;
  cfg.activation = Activation::smooth_sqrt(0.1);
  const Network net(cfg, 2);
  const auto prob = VariationalProblem::make(ProblemId::DW1D_Lower);
  Eigen::MatrixXd pts(1, 7);
  pts << 0.05, 0.2, 0.33, 0.5, 0.61, 0.8, 0.97;
  const Eigen::MatrixXd none(1, 0);
  const auto batch = loss_and_gradient(prob, net, FeatureMap::identity(1), pts, none);
  ParameterGradient sum = ParameterGradient::zeros_like(net.params);
  for (Eigen::Index n = 0; n < pts.cols(); ++n) {
    auto one = loss_and_gradient(prob, net, FeatureMap::identity(1), pts.col(n), none).gradient;
    one *= 1.0 / 7.0;
    sum += one;
  }
  CHECK(oracle::relative_error(batch.gradient.flatten(), sum.flatten()) < 1e-12);
}

TEST_CASE("parameter jacobian rows equal selector gradients") {
  NetworkConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_layers = 2;
  cfg.width = 5;
  const Network net(cfg, 8);
  const Eigen::VectorXd x = vec({0.3, 0.6});
  const Eigen::MatrixXd J = parameter_jacobian(net, FeatureMap::identity(2), x);
  REQUIRE(J.rows() == 3);
  CHECK(J.row(0).transpose() ==
        parameter_gradient_of(OutputSelector::value(), net, FeatureMap::identity(2), x).flatten());
  CHECK(J.row(2).transpose() ==
        parameter_gradient_of(OutputSelector::input_derivative(1), net, FeatureMap::identity(2), x).flatten());
  CHECK(parameter_jacobian(net, FeatureMap::identity(2), x, false).rows() == 1);
}
