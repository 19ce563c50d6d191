// Short 2D twin-band run: trains on Twin2D with Fourier features and
// prints u_y along x = 0.5 as a strip of + / - / . characters.
//
//   twin_2d [epochs] [fourier_i]

#include <cstdlib>
#include <iostream>

#include "drm/allocator.hpp"
#include "drm/diagnostics.hpp"
#include "drm/trainer.hpp"

int main(int argc, char** argv) {
  drm::tune_allocator();
  const long epochs = argc > 1 ? std::atol(argv[1]) : 3000;
  const int fourier_i = argc > 2 ? std::atoi(argv[2]) : 2;

  const auto prob = drm::VariationalProblem::make(drm::ProblemId::Twin2D);
  const drm::FeatureMap fmap = drm::feature_map_for(2, fourier_i);
  drm::NetworkConfig net;
  net.input_dim = fmap.output_dim();
  net.hidden_layers = 3;
  net.width = 64;
  net.activation = drm::Activation::smooth_sqrt(0.1);
  drm::TrainConfig cfg = drm::TrainConfig::defaults_for(2);
  cfg.epochs = epochs;
  cfg.lr0 = 1e-3;
  cfg.seed = 1;

  const drm::TrainResult r = drm::train(prob, net, fmap, cfg);
  const drm::Network trained(net.activation, r.params);
  const Eigen::VectorXd s = drm::slope_samples(trained, fmap, prob, 101);
  const double scale = s.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < s.size(); ++i) std::cout << (s[i] > 0.5 * scale ? '+' : s[i] < -0.5 * scale ? '-' : '.');
  const auto t = drm::count_transitions(s);
  std::cout << "\nenergy " << drm::grid_energy(trained, fmap, prob, 101) << "  interfaces " << t.count << '\n';
}
