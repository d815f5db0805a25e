#ifndef STOCHFOREST_MODEL_COMMON_HPP_
#define STOCHFOREST_MODEL_COMMON_HPP_

// Pieces shared by the BART and BCF facades.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/forest_sampler.hpp"
#include "stochforest/random_effects.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/tree.hpp"

namespace stochforest {

struct ForestParams {
  double alpha = 0.95;
  double beta = 2.0;
  int num_trees = 200;
  int min_samples_leaf = 5;
  int max_depth = -1;  // negative: unlimited
  int cutpoint_grid_size = 100;
  std::vector<std::string> keep_vars;
  std::vector<std::string> drop_vars;
  bool sample_sigma2_leaf = true;
  double sigma2_leaf_init = -1.0;  // <= 0 picks the default
  double a_leaf = 3.0;             // <= 0 picks the default
  double b_leaf = -1.0;            // <= 0 picks the default

  void validate(const std::string& which) const {
    require(num_trees >= 0, ErrorCode::kInvalidArgument, which + ": num_trees must be >= 0");
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument, which + ": alpha must be in (0, 1]");
    require(beta > 0.0, ErrorCode::kInvalidArgument, which + ": beta must be positive");
    require(min_samples_leaf >= 1, ErrorCode::kInvalidArgument, which + ": min_samples_leaf must be >= 1");
    require(cutpoint_grid_size >= 1, ErrorCode::kInvalidArgument, which + ": cutpoint_grid_size must be >= 1");
    require(keep_vars.empty() || drop_vars.empty(), ErrorCode::kInvalidArgument,
            which + ": keep_vars and drop_vars are mutually exclusive");
  }
};

/// Variance forests are off unless num_trees > 0.
inline ForestParams variance_forest_defaults() {
  ForestParams p;
  p.num_trees = 0;
  p.sample_sigma2_leaf = false;
  p.a_leaf = -1.0;
  p.b_leaf = -1.0;
  return p;
}

struct GeneralParams {
  int num_gfr = 10;
  int num_burnin = 0;
  int num_mcmc = 100;
  std::optional<bool> keep_gfr;  // default: keep GFR draws only when num_mcmc == 0
  bool sample_sigma2_global = true;
  bool probit_outcome_model = false;
  std::optional<std::uint64_t> random_seed;
  double sigma2_init = -1.0;  // standardized scale; <= 0 means 1
  double a_global = 1.0;
  double b_global = 1.0;

  bool keeps_gfr() const { return keep_gfr.value_or(num_mcmc == 0); }

  void validate() const {
    require(num_gfr >= 0 && num_burnin >= 0 && num_mcmc >= 0, ErrorCode::kInvalidArgument,
            "iteration counts must be >= 0");
    require(num_gfr + num_burnin + num_mcmc > 0, ErrorCode::kInvalidArgument, "no iterations requested");
    require(a_global > 0.0 && b_global > 0.0, ErrorCode::kInvalidArgument, "a_global and b_global must be > 0");
  }
};

struct RfxParams {
  std::string model_spec = "intercept_only";
  RfxPrior prior;
};

/// Variable-selection weights with keep_vars / drop_vars entries zeroed.
inline std::vector<double> resolve_variable_weights(const std::vector<std::string>& column_names,
                                                    const ForestParams& params, int extra_columns = 0) {
  const int p = static_cast<int>(column_names.size());
  std::vector<double> w(p, 1.0);
  auto index_of = [&](const std::string& name) {
    auto it = std::find(column_names.begin(), column_names.end(), name);
    require(it != column_names.end(), ErrorCode::kSchema, "unknown variable '" + name + "' in keep/drop list");
    return static_cast<int>(it - column_names.begin());
  };
  if (!params.keep_vars.empty()) {
    std::fill(w.begin(), w.end(), 0.0);
    for (const auto& name : params.keep_vars) w[index_of(name)] = 1.0;
    for (int j = p - extra_columns; j < p; ++j) w[j] = 1.0;
  }
  for (const auto& name : params.drop_vars) w[index_of(name)] = 0.0;
  double total = 0.0;
  for (double v : w) total += v;
  require(total > 0.0, ErrorCode::kInvalidArgument, "keep/drop lists exclude every variable");
  for (double& v : w) v /= total;
  return w;
}

inline ForestModelConfig build_forest_config(const ForestDataset& data, const ForestParams& params,
                                             LeafModelType type, int leaf_dimension,
                                             std::vector<double> variable_weights) {
  ForestModelConfig c = make_forest_model_config(data, type, params.num_trees, leaf_dimension);
  c.variable_weights = std::move(variable_weights);
  c.alpha = params.alpha;
  c.beta = params.beta;
  c.min_samples_leaf = params.min_samples_leaf;
  c.max_depth = params.max_depth;
  c.cutpoint_grid_size = params.cutpoint_grid_size;
  c.validate();
  return c;
}

/// Column layout a model was trained on; prediction inputs must match it.
struct Preprocessing {
  std::vector<FeatureType> feature_types;
  std::vector<std::string> column_names;
  std::vector<std::vector<std::string>> level_maps;
  int leaf_basis_dimension = 0;

  static Preprocessing from(const CovariateMatrix& x, int basis_dimension = 0) {
    return Preprocessing{x.feature_types(), x.column_names(), x.level_maps(), basis_dimension};
  }

  void check(const CovariateMatrix& x) const {
    require(x.num_columns() == static_cast<int>(feature_types.size()), ErrorCode::kSchema,
            "expected " + std::to_string(feature_types.size()) + " covariate columns, got " +
                std::to_string(x.num_columns()));
    for (int j = 0; j < x.num_columns(); ++j) {
      require(x.feature_type(j) == feature_types[j], ErrorCode::kSchema,
              "column '" + x.column_names()[j] + "' has a different feature type than in training");
      require(x.column_names()[j] == column_names[j], ErrorCode::kSchema,
              "column " + std::to_string(j) + " is '" + x.column_names()[j] + "', expected '" +
                  column_names[j] + "'");
    }
  }

  friend bool operator==(const Preprocessing&, const Preprocessing&) = default;
};

/// Latent-variable update for the probit link: z_i ~ N(f_i, 1) truncated to
/// (0, inf) when y_i = 1 and to (-inf, 0] otherwise.
inline void probit_augment(std::span<double> latent, std::span<const double> f, std::span<const double> y,
                           Rng& rng) {
  require(latent.size() == f.size() && f.size() == y.size(), ErrorCode::kDimension,
          "probit_augment: length mismatch");
  for (std::size_t i = 0; i < latent.size(); ++i) {
    latent[i] = y[i] > 0.5 ? f[i] + rng.truncated_normal_above(-f[i]) : f[i] - rng.truncated_normal_above(f[i]);
  }
}

inline void require_binary(std::span<const double> y, const char* what) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(y[i] == 0.0 || y[i] == 1.0, ErrorCode::kInvalidArgument,
            std::string(what) + " must be 0/1; row " + std::to_string(i) + " has " + std::to_string(y[i]));
  }
}

inline std::vector<double> all_leaf_values(const Forest& forest) {
  std::vector<double> out;
  for (const auto& t : forest.trees()) {
    for (int leaf : t.leaves()) {
      for (double v : t.leaf_values(leaf)) out.push_back(v);
    }
  }
  return out;
}

/// Rows averaged over posterior samples.
inline Eigen::VectorXd posterior_mean(const Eigen::MatrixXd& draws) {
  require(draws.cols() > 0, ErrorCode::kInvalidArgument, "no posterior samples");
  return draws.rowwise().mean();
}

enum class PredictType { kMean, kPosterior };

inline PredictType predict_type_from_string(const std::string& s) {
  if (s == "mean") return PredictType::kMean;
  if (s == "posterior") return PredictType::kPosterior;
  throw Error(ErrorCode::kInvalidArgument, "unknown prediction type '" + s + "'");
}

/// Random-effect inputs at fit or predict time.
struct RfxInput {
  std::vector<int> group_ids;
  std::vector<std::string> group_labels;  // label of each group id, optional
  std::optional<Eigen::MatrixXd> basis;    // defaults from the model spec
};

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  return seed ? *seed : Rng::nondeterministic_seed();
}

}  // namespace stochforest

#endif  // STOCHFOREST_MODEL_COMMON_HPP_
