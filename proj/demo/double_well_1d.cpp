// Trains a small network on the 1D double-well problem and prints the
// energy, the boundary values and the slope transitions it found.
//
//   double_well_1d [epochs] [fourier_i]

#include <cstdlib>
#include <iostream>

#include "drm/allocator.hpp"
#include "drm/diagnostics.hpp"
#include "drm/trainer.hpp"

int main(int argc, char** argv) {
  drm::tune_allocator();
  const long epochs = argc > 1 ? std::atol(argv[1]) : 5000;
  const int fourier_i = argc > 2 ? std::atoi(argv[2]) : -1;

  const auto prob = drm::VariationalProblem::make(drm::ProblemId::DW1D);
  const drm::FeatureMap fmap = drm::feature_map_for(1, fourier_i);
  drm::NetworkConfig net;
  net.input_dim = fmap.output_dim();
  net.hidden_layers = 3;
  net.width = 64;
  drm::TrainConfig cfg = drm::TrainConfig::defaults_for(1);
  cfg.epochs = epochs;
  cfg.lr0 = 1e-3;
  cfg.seed = 1;

  drm::TrainHooks hooks;
  hooks.on_checkpoint = [&](long e, const drm::Network&) { std::cout << "epoch " << e << "/" << epochs << '\n'; };
  const drm::TrainResult r = drm::train(prob, net, fmap, cfg, hooks);
  const drm::Network trained(net.activation, r.params);

  const double energy = drm::grid_energy(trained, fmap, prob, 1001);
  const double penalty = drm::grid_boundary_penalty(trained, fmap, prob, 1001);
  const auto t = drm::count_transitions(drm::slope_samples(trained, fmap, prob, 1001));
  std::cout << "energy " << energy << "  boundary penalty " << penalty << '\n'
            << "transitions " << t.count << "  (runs:";
  for (int s : t.states) std::cout << ' ' << (s > 0 ? '+' : '-');
  std::cout << ")\n";
}
