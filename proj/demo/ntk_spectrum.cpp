// Scalar NTK spectra of a 1-hidden-layer ReLU net on [0, 1], with and
// without Fourier features, and the eigenvalue decay slope of each. With
// raw coordinates and zero biases the kernel has rank 2 and no slope.

#include <iomanip>
#include <iostream>
#include <string>

#include "drm/cli.hpp"
#include "drm/ntk.hpp"

int main() {
  const Eigen::MatrixXd pts = drm::cli::ntk_points(1, 128, 1.0);
  std::cout << std::setw(10) << "features" << std::setw(12) << "lambda_1" << std::setw(12) << "lambda_8"
            << std::setw(12) << "lambda_32" << std::setw(10) << "slope" << '\n';
  for (int i = -1; i <= 3; ++i) {
    const drm::FeatureMap fmap = drm::feature_map_for(1, i);
    drm::NetworkConfig cfg;
    cfg.input_dim = fmap.output_dim();
    cfg.hidden_layers = 1;
    cfg.width = 512;
    const auto ens = drm::ensemble_gram(cfg, fmap, pts, {1, 2, 3, 4}, false);
    const Eigen::VectorXd& ev = ens.mean.eigenvalues;
    std::string slope = "n/a";
    try {
      slope = std::to_string(drm::eigendecay_fit(ev, 4, 32).slope);
    } catch (const drm::Error&) {
    }
    std::cout << std::setw(10) << (i < 0 ? "none" : "FF i=" + std::to_string(i)) << std::setw(12)
              << std::setprecision(4) << ev[0] << std::setw(12) << ev[7] << std::setw(12) << ev[31] << std::setw(10)
              << slope << '\n';
  }
}
