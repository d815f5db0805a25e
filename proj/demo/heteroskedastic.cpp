// Mean and variance forests together; compares the fitted conditional sd
// with the truth at a few points.

#include <cmath>
#include <iostream>

#include "stochforest/stochforest.hpp"

int main() {
  using namespace stochforest;
  const auto d = dgp_heteroskedastic(1000, 5, 4);
  const CovariateMatrix x = CovariateMatrix::numeric(d.x);

  BartParams params;
  params.variance_forest.num_trees = 50;
  params.general.random_seed = 3;
  const BartModel model = bart_fit(x, d.y, params);

  const Eigen::MatrixXd var = bart_predict(model, x, BartTerm::kVarianceForest, PredictType::kMean);
  for (int i = 0; i < 5; ++i) {
    std::cout << "x1 = " << d.x(i, 0) << "  sd true " << (*d.noise_sd)[i] << "  fitted " << std::sqrt(var(i, 0))
              << "\n";
  }
}
