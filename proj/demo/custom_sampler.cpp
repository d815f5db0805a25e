// A hand-written Gibbs loop on the low-level interface: one constant-leaf
// forest plus the global error variance.

#include <cmath>
#include <iostream>

#include "stochforest/stochforest.hpp"

int main() {
  using namespace stochforest;
  const auto sim = dgp_friedman(500, 10, 3.0, 5);
  auto [y_std, info] = standardize_outcome(sim.y);

  ForestDataset data(CovariateMatrix::numeric(sim.x));
  Outcome outcome(y_std);
  Rng rng(42);

  const int num_trees = 200;
  ForestModelConfig config = make_forest_model_config(data, LeafModelType::kConstantGaussian, num_trees);
  config.leaf.tau = 1.0 / num_trees;
  GlobalModelConfig global;

  ForestSampler sampler(data, config);
  Forest active(num_trees);
  ForestSamples samples(num_trees, 1, true);
  sampler.prepare_for_sampler(data, outcome, active, LeafModelType::kConstantGaussian, sample_mean(y_std));

  for (int it = 0; it < 20; ++it) {
    const bool gfr = it < 10;
    sampler.sample_one_iteration(data, outcome, samples, active, rng, config, global, !gfr, gfr);
    global.update_global_error_variance(sample_global_error_variance(outcome, data, rng, 1.0, 1.0));
    std::cout << (gfr ? "gfr " : "mcmc ") << it << "  sigma = "
              << std::sqrt(global.global_error_variance) * info.scale << "\n";
  }
  std::cout << "retained " << samples.num_samples() << " forests\n";
}
