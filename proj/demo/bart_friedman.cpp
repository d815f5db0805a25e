// Fit BART to simulated Friedman data and report held-out error.

#include <cmath>
#include <iostream>

#include "stochforest/stochforest.hpp"

int main() {
  using namespace stochforest;
  const auto train = dgp_friedman(500, 20, 3.0, 1);
  const auto test = dgp_friedman(500, 20, 3.0, 2);
  const auto names = default_column_names(20);

  BartParams params;
  params.general.num_gfr = 10;
  params.general.num_mcmc = 100;
  params.general.random_seed = 7;
  const BartModel model = bart_fit(CovariateMatrix::numeric(train.x, names), train.y, params);

  const Eigen::MatrixXd f_hat =
      bart_predict(model, CovariateMatrix::numeric(test.x, names), BartTerm::kYHat, PredictType::kMean);
  double sse = 0.0;
  for (int i = 0; i < test.num_rows(); ++i) sse += std::pow(f_hat(i, 0) - test.f[i], 2);
  double sigma = 0.0;
  for (double s2 : model.sigma2_global_original()) sigma += std::sqrt(s2);

  std::cout << "held-out rmse vs true f: " << std::sqrt(sse / test.num_rows()) << "\n"
            << "noise sd: " << (*test.noise_sd)[0] << "\n"
            << "posterior mean sigma: " << sigma / model.num_samples() << "\n";
}
