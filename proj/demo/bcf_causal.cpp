// BCF on the causal Friedman design: ATE interval and CATE accuracy.

#include <algorithm>
#include <iostream>
#include <vector>

#include "stochforest/stochforest.hpp"

int main() {
  using namespace stochforest;
  const auto d = dgp_causal_friedman(1000, 5, 3);
  const CovariateMatrix x = CovariateMatrix::numeric(d.x, default_column_names(5));

  BcfParams params;
  params.general.random_seed = 11;
  params.treatment_forest.keep_vars = {"X1", "X2"};
  const BcfModel model = bcf_fit(x, *d.z, d.y, params);

  const Eigen::MatrixXd cate = bcf_predict_posterior(model, x, BcfTerm::kCate);
  Eigen::VectorXd ate = ate_draws(cate);
  std::vector<double> sorted(ate.data(), ate.data() + ate.size());
  std::sort(sorted.begin(), sorted.end());
  const auto q = [&](double p) { return sorted[static_cast<std::size_t>(p * (sorted.size() - 1))]; };

  std::cout << "ATE posterior mean " << ate.mean() << ", 95% interval [" << q(0.025) << ", " << q(0.975)
            << "], truth 2.5\n";
}
