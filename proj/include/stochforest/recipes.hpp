#ifndef STOCHFOREST_RECIPES_HPP_
#define STOCHFOREST_RECIPES_HPP_

// Custom samplers assembled from the low-level pieces: a forest plus a
// linear term, and a forest with Student-t errors via parameter expansion.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/forest_sampler.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/tree.hpp"

namespace stochforest {

struct RecipeOptions {
  int num_trees = 200;
  int num_burnin = 0;  // iterations run before draws are recorded
  int num_mcmc = 100;
  std::uint64_t seed = 1;
  double gamma_tau = 100.0;  // prior variance of the linear coefficient
  double nu = 2.0;           // Student-t degrees of freedom

  void validate() const {
    require(num_trees >= 1, ErrorCode::kInvalidArgument, "num_trees must be >= 1");
    require(num_burnin >= 0 && num_mcmc >= 1, ErrorCode::kInvalidArgument,
            "need num_burnin >= 0 and num_mcmc >= 1");
    require(gamma_tau >= 0.0, ErrorCode::kInvalidArgument, "gamma_tau must be >= 0");
    require(nu > 0.0, ErrorCode::kInvalidArgument, "nu must be positive");
  }
};

struct AdditiveLinearResult {
  ForestSamples forests;
  std::vector<double> gamma;   // original scale
  std::vector<double> sigma2;  // original scale
  StandardizationInfo standardization;
  double max_conservation_error = 0.0;

  /// Posterior-mean forest term on the original scale (excludes gamma * W).
  std::vector<double> forest_mean(const ForestDataset& data) const;
};

struct RobustErrorsResult {
  ForestSamples forests;
  std::vector<double> a2;
  std::vector<double> tau2;
  std::vector<double> sigma2;  // a2 * tau2 on the original scale
  Eigen::MatrixXd phi;         // n x num_mcmc
  StandardizationInfo standardization;
  double max_conservation_error = 0.0;

  std::vector<double> forest_mean(const ForestDataset& data) const;
};

namespace recipe_detail {

inline std::vector<double> forest_mean(const ForestSamples& samples, const ForestDataset& data,
                                       const StandardizationInfo& info) {
  const Eigen::MatrixXd draws = samples.predict(data);
  std::vector<double> out(draws.rows());
  for (Eigen::Index i = 0; i < draws.rows(); ++i) out[i] = info.to_original(draws.row(i).mean());
  return out;
}

inline ForestModelConfig mean_config(const ForestDataset& data, int num_trees) {
  ForestModelConfig c = make_forest_model_config(data, LeafModelType::kConstantGaussian, num_trees);
  c.leaf.tau = 1.0 / num_trees;
  return c;
}

/// max_i |residual_i + forest_i + extra_i - y_i|
inline double conservation_gap(const Outcome& outcome, const std::vector<double>& forest_pred,
                               std::span<const double> extra, std::span<const double> y) {
  double gap = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = extra.empty() ? 0.0 : extra[i];
    gap = std::max(gap, std::abs(outcome[i] + forest_pred[i] + e - y[i]));
  }
  return gap;
}

}  // namespace recipe_detail

inline std::vector<double> AdditiveLinearResult::forest_mean(const ForestDataset& data) const {
  return recipe_detail::forest_mean(forests, data, standardization);
}

inline std::vector<double> RobustErrorsResult::forest_mean(const ForestDataset& data) const {
  return recipe_detail::forest_mean(forests, data, standardization);
}

/// y = f(X) + gamma * W + eps with f a constant-leaf forest. gamma has a
/// N(0, gamma_tau) prior on the standardized scale; sigma^2 ~ IG(1, 1).
inline AdditiveLinearResult recipe_additive_linear(const CovariateMatrix& x, std::span<const double> y,
                                                   std::span<const double> w, const RecipeOptions& opt) {
  opt.validate();
  const int n = x.num_rows();
  require(static_cast<int>(y.size()) == n && static_cast<int>(w.size()) == n, ErrorCode::kDimension,
          "y and W must have one entry per row");
  auto [y_std, info] = standardize_outcome(y);

  ForestDataset data(x);
  Outcome outcome(y_std);
  Rng rng(opt.seed);
  ForestModelConfig config = recipe_detail::mean_config(data, opt.num_trees);
  GlobalModelConfig global;
  ForestSampler sampler(data, config);
  Forest active(opt.num_trees, 1, true, false);
  ForestSamples samples(opt.num_trees, 1, true, false);
  ForestSamples scratch(opt.num_trees, 1, true, false);

  const double leaf_init = sample_mean(y_std);
  sampler.prepare_for_sampler(data, outcome, active, LeafModelType::kConstantGaussian, leaf_init);

  AdditiveLinearResult out{ForestSamples(opt.num_trees, 1, true, false), {}, {}, info, 0.0};
  double gamma = 0.0;
  std::vector<double> w_gamma(n, 0.0);
  double w_ss = 0.0;
  for (double v : w) w_ss += v * v;

  const int total = opt.num_burnin + opt.num_mcmc;
  for (int it = 0; it < total; ++it) {
    const bool keep = it >= opt.num_burnin;
    outcome.add_vector(w_gamma);

    // outcome now holds y_std - forest, the partial residual for gamma
    const double sigma2 = global.global_error_variance;
    double wr = 0.0;
    for (int i = 0; i < n; ++i) wr += w[i] * outcome[i];
    if (opt.gamma_tau == 0.0) {
      gamma = 0.0;
    } else {
      const double precision = w_ss / sigma2 + 1.0 / opt.gamma_tau;
      gamma = wr / sigma2 / precision + rng.normal() / std::sqrt(precision);
    }
    for (int i = 0; i < n; ++i) w_gamma[i] = w[i] * gamma;
    outcome.subtract_vector(w_gamma);

    sampler.sample_one_iteration(data, outcome, keep ? samples : scratch, active, rng, config, global, keep,
                                 false);
    global.update_global_error_variance(sample_global_error_variance(outcome, data, rng, 1.0, 1.0));

    out.max_conservation_error =
        std::max(out.max_conservation_error,
                 recipe_detail::conservation_gap(outcome, predict_forest(active, data), w_gamma, y_std));
    if (keep) {
      out.gamma.push_back(gamma * info.scale);
      out.sigma2.push_back(global.global_error_variance * info.scale * info.scale);
    }
  }
  out.forests = std::move(samples);
  return out;
}

/// y = f(X) + a * sqrt(phi_i) * eps_i with phi_i ~ IG(nu/2, nu tau^2/2),
/// which marginally gives t_nu errors with scale^2 = a^2 tau^2. The forest
/// sees variance weights phi_i * a^2 and a global variance fixed at 1.
inline RobustErrorsResult recipe_robust_errors(const CovariateMatrix& x, std::span<const double> y,
                                               const RecipeOptions& opt) {
  opt.validate();
  const int n = x.num_rows();
  require(static_cast<int>(y.size()) == n, ErrorCode::kDimension, "y must have one entry per row");
  auto [y_std, info] = standardize_outcome(y);

  std::vector<double> phi(n, 1.0);
  double a2 = 1.0;
  double tau2 = 1.0;
  std::vector<double> weights(n);
  for (int i = 0; i < n; ++i) weights[i] = phi[i] * a2;

  ForestDataset data(x, std::nullopt, weights);
  Outcome outcome(y_std);
  Rng rng(opt.seed);
  ForestModelConfig config = recipe_detail::mean_config(data, opt.num_trees);
  GlobalModelConfig global;
  ForestSampler sampler(data, config);
  Forest active(opt.num_trees, 1, true, false);
  ForestSamples samples(opt.num_trees, 1, true, false);
  ForestSamples scratch(opt.num_trees, 1, true, false);

  sampler.prepare_for_sampler(data, outcome, active, LeafModelType::kConstantGaussian, sample_mean(y_std));

  RobustErrorsResult out{ForestSamples(opt.num_trees, 1, true, false), {}, {}, {}, {}, info, 0.0};
  out.phi.resize(n, opt.num_mcmc);
  const double nu = opt.nu;
  const int total = opt.num_burnin + opt.num_mcmc;
  for (int it = 0; it < total; ++it) {
    const bool keep = it >= opt.num_burnin;
    sampler.sample_one_iteration(data, outcome, keep ? samples : scratch, active, rng, config, global, keep,
                                 false);
    const auto r = outcome.residual();

    for (int i = 0; i < n; ++i) {
      phi[i] = rng.inverse_gamma(0.5 * (nu + 1.0), 0.5 * (nu * tau2 + r[i] * r[i] / a2));
    }
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += r[i] * r[i] / phi[i];
    a2 = rng.inverse_gamma(0.5 * n, 0.5 * ss);
    double inv_phi = 0.0;
    for (double v : phi) inv_phi += 1.0 / v;
    tau2 = rng.gamma(0.5 * n * nu, 0.5 * nu * inv_phi);

    for (int i = 0; i < n; ++i) weights[i] = phi[i] * a2;
    data.update_variance_weights(weights);

    out.max_conservation_error = std::max(
        out.max_conservation_error, recipe_detail::conservation_gap(outcome, predict_forest(active, data), {}, y_std));
    if (keep) {
      const int s = it - opt.num_burnin;
      for (int i = 0; i < n; ++i) out.phi(i, s) = phi[i];
      out.a2.push_back(a2);
      out.tau2.push_back(tau2);
      out.sigma2.push_back(a2 * tau2 * info.scale * info.scale);
    }
  }
  out.forests = std::move(samples);
  return out;
}

}  // namespace stochforest

#endif  // STOCHFOREST_RECIPES_HPP_
