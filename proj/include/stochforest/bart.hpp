#ifndef STOCHFOREST_BART_HPP_
#define STOCHFOREST_BART_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/forest_sampler.hpp"
#include "stochforest/leaf_models.hpp"
#include "stochforest/model_common.hpp"
#include "stochforest/random_effects.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/tree.hpp"

namespace stochforest {

struct BartParams {
  GeneralParams general;
  ForestParams mean_forest;
  ForestParams variance_forest = variance_forest_defaults();
  RfxParams random_effects;

  void validate() const {
    general.validate();
    mean_forest.validate("mean_forest");
    variance_forest.validate("variance_forest");
    require(mean_forest.num_trees >= 1, ErrorCode::kInvalidArgument, "mean_forest: num_trees must be >= 1");
    require(!(general.probit_outcome_model && variance_forest.num_trees > 0), ErrorCode::kInvalidArgument,
            "a variance forest cannot be combined with the probit outcome model");
  }
};

/// Fitted BART model. Forest draws and the sigma^2 trace live on the
/// standardized outcome scale; `standardization` maps back.
struct BartModel {
  BartParams params;
  Preprocessing preprocessing;
  StandardizationInfo standardization;
  LeafModelType mean_leaf_model = LeafModelType::kConstantGaussian;
  ForestSamples mean_forests;
  std::optional<ForestSamples> variance_forests;
  std::vector<double> sigma2_global;
  std::vector<double> sigma2_leaf;
  std::optional<RfxSamples> rfx;
  int num_gfr_retained = 0;

  int num_samples() const { return mean_forests.num_samples(); }
  bool is_probit() const { return params.general.probit_outcome_model; }

  /// sigma^2 draws on the original outcome scale.
  std::vector<double> sigma2_global_original() const {
    std::vector<double> out(sigma2_global);
    const double s2 = standardization.scale * standardization.scale;
    for (double& v : out) v *= s2;
    return out;
  }
};

/// State handed to an optional observer after initialization (iteration -1)
/// and after every sampler iteration.
struct SamplerSnapshot {
  int iteration;
  bool gfr;
  std::span<const double> outcome;   // standardized y, or the current probit latents
  std::span<const double> residual;
  const ForestDataset& data;
  const Forest& mean_forest;
  const Forest* variance_forest;
  const Forest* treatment_forest;    // BCF only
  const ForestDataset* treatment_data;
  const RfxDataset* rfx_data;
  const RfxModelState* rfx_state;
  double sigma2;
};

struct BartWarmStart {
  const BartModel* model = nullptr;
  int sample_index = 0;  // 0-based
};

struct BartFitInput {
  std::optional<Eigen::MatrixXd> leaf_basis;
  std::optional<RfxInput> rfx;
  std::optional<BartWarmStart> warm_start;
  std::function<void(const SamplerSnapshot&)> observer;
};

namespace detail {

inline LeafModelType mean_leaf_type(int basis_dimension) {
  if (basis_dimension == 0) return LeafModelType::kConstantGaussian;
  return basis_dimension == 1 ? LeafModelType::kUnivariateRegression : LeafModelType::kMultivariateRegression;
}

inline double default_leaf_scale_b(double a_leaf, double tau_init) {
  return a_leaf > 1.0 ? tau_init * (a_leaf - 1.0) : tau_init;
}

inline void configure_variance_leaf(ForestModelConfig& cfg, const ForestParams& p) {
  const double m = p.num_trees;
  cfg.leaf.a_leaf = p.a_leaf > 0.0 ? p.a_leaf : m / (1.5 * 1.5) + 0.5;
  cfg.leaf.b_leaf = p.b_leaf > 0.0 ? p.b_leaf : m / (1.5 * 1.5);
}

inline Eigen::MatrixXd rfx_basis_for(const RfxInput& in, RfxModelSpec spec, int n,
                                     std::optional<std::span<const double>> treatment) {
  if (in.basis) {
    require(in.basis->rows() == n, ErrorCode::kDimension, "random effects basis rows differ from data rows");
    return *in.basis;
  }
  return build_rfx_basis(spec, n, treatment);
}

}  // namespace detail

inline BartModel bart_fit(const CovariateMatrix& x, std::span<const double> y, const BartParams& params,
                          const BartFitInput& input = {}) {
  params.validate();
  const auto& gen = params.general;
  const int n = x.num_rows();
  require(static_cast<int>(y.size()) == n, ErrorCode::kDimension,
          "outcome length " + std::to_string(y.size()) + " != covariate rows " + std::to_string(n));
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(std::isfinite(y[i]), ErrorCode::kInvalidArgument, "non-finite outcome at row " + std::to_string(i));
  }
  if (gen.probit_outcome_model) require_binary(y, "probit outcome");

  int q = 0;
  if (input.leaf_basis) {
    require(input.leaf_basis->rows() == n, ErrorCode::kDimension,
            "leaf basis has " + std::to_string(input.leaf_basis->rows()) + " rows, expected " + std::to_string(n));
    q = static_cast<int>(input.leaf_basis->cols());
  }

  const BartModel* src = nullptr;
  int src_index = 0;
  if (input.warm_start) {
    src = input.warm_start->model;
    src_index = input.warm_start->sample_index;
    require(src != nullptr, ErrorCode::kInvalidArgument, "warm start needs a model");
    require(src_index >= 0 && src_index < src->num_samples(), ErrorCode::kRange,
            "warm-start index " + std::to_string(src_index) + " out of range [0, " +
                std::to_string(src->num_samples()) + ")");
    src->preprocessing.check(x);
    require(src->preprocessing.leaf_basis_dimension == q, ErrorCode::kSchema,
            "warm start leaf basis dimension differs from the stored model");
    require(src->is_probit() == gen.probit_outcome_model, ErrorCode::kSchema,
            "warm start outcome model (probit or not) differs from the stored model");
    require(src->variance_forests.has_value() == (params.variance_forest.num_trees > 0), ErrorCode::kSchema,
            "warm start variance forest presence differs from the stored model");
    require(src->rfx.has_value() == input.rfx.has_value(), ErrorCode::kSchema,
            "warm start random effects presence differs from the stored model");
    require(src->mean_forests.num_trees() == params.mean_forest.num_trees, ErrorCode::kSchema,
            "warm start mean forest size differs from the stored model");
    if (src->variance_forests) {
      require(src->variance_forests->num_trees() == params.variance_forest.num_trees, ErrorCode::kSchema,
              "warm start variance forest size differs from the stored model");
    }
  }

  BartModel model;
  model.params = params;
  model.preprocessing = Preprocessing::from(x, q);
  if (src) {
    model.standardization = src->standardization;
  } else if (gen.probit_outcome_model) {
    model.standardization = StandardizationInfo{0.0, 1.0};
  } else {
    model.standardization = standardize_outcome(y).second;
  }
  std::vector<double> y_work(n);
  if (gen.probit_outcome_model) {
    for (int i = 0; i < n; ++i) y_work[i] = y[i] > 0.5 ? 0.6745 : -0.6745;
  } else {
    for (int i = 0; i < n; ++i) y_work[i] = model.standardization.to_standard(y[i]);
  }

  ForestDataset data(x, input.leaf_basis);
  Rng rng(resolve_seed(gen.random_seed));

  // Mean forest
  const LeafModelType mean_type = detail::mean_leaf_type(q);
  model.mean_leaf_model = mean_type;
  const int leaf_dim = std::max(q, 1);
  const int m = params.mean_forest.num_trees;
  const double tau_init = params.mean_forest.sigma2_leaf_init > 0.0 ? params.mean_forest.sigma2_leaf_init : 1.0 / m;
  const double a_leaf = params.mean_forest.a_leaf > 0.0 ? params.mean_forest.a_leaf : 3.0;
  const double b_leaf =
      params.mean_forest.b_leaf > 0.0 ? params.mean_forest.b_leaf : detail::default_leaf_scale_b(a_leaf, tau_init);
  const bool sample_tau = params.mean_forest.sample_sigma2_leaf && mean_type != LeafModelType::kMultivariateRegression;
  auto set_tau = [&](ForestModelConfig& cfg, double tau) {
    cfg.update_leaf_scale(tau);
    if (mean_type == LeafModelType::kMultivariateRegression) {
      cfg.leaf.sigma0 = tau * Eigen::MatrixXd::Identity(leaf_dim, leaf_dim);
    }
  };
  ForestModelConfig mean_cfg = build_forest_config(
      data, params.mean_forest, mean_type, leaf_dim, resolve_variable_weights(x.column_names(), params.mean_forest));
  set_tau(mean_cfg, tau_init);
  Forest mean_active(m, leaf_dim, q == 0, false);
  model.mean_forests = ForestSamples(m, leaf_dim, q == 0, false);
  ForestSampler mean_sampler(data, mean_cfg);

  // Variance forest
  const bool has_var = params.variance_forest.num_trees > 0;
  std::optional<ForestModelConfig> var_cfg;
  std::optional<Forest> var_active;
  std::optional<ForestSampler> var_sampler;
  if (has_var) {
    var_cfg = build_forest_config(data, params.variance_forest, LeafModelType::kLogLinearVariance, 1,
                                  resolve_variable_weights(x.column_names(), params.variance_forest));
    detail::configure_variance_leaf(*var_cfg, params.variance_forest);
    var_active.emplace(params.variance_forest.num_trees, 1, true, true);
    model.variance_forests = ForestSamples(params.variance_forest.num_trees, 1, true, true);
    var_sampler.emplace(data, *var_cfg);
  }

  // Random effects
  std::optional<RfxDataset> rfx_data;
  std::optional<RfxModelState> rfx_state;
  if (input.rfx) {
    const auto spec = rfx_model_spec_from_string(params.random_effects.model_spec);
    auto basis = detail::rfx_basis_for(*input.rfx, spec, n, std::nullopt);
    const int num_groups = src ? src->rfx->num_groups()
                               : (input.rfx->group_labels.empty() ? -1
                                                                  : static_cast<int>(input.rfx->group_labels.size()));
    rfx_data.emplace(input.rfx->group_ids, std::move(basis), num_groups);
    model.rfx = RfxSamples(rfx_data->num_components(), rfx_data->num_groups(), spec,
                           src ? src->rfx->group_labels() : input.rfx->group_labels);
    rfx_state.emplace(rfx_data->num_components(), rfx_data->num_groups());
  }

  GlobalModelConfig global;
  global.a_global = gen.a_global;
  global.b_global = gen.b_global;
  global.update_global_error_variance(gen.probit_outcome_model ? 1.0 : (gen.sigma2_init > 0.0 ? gen.sigma2_init : 1.0));
  double tau = tau_init;

  Outcome residual(y_work);
  if (src) {
    mean_active = src->mean_forests.forest(src_index);
    mean_sampler.reconstitute(data, mean_active, mean_type);
    residual.subtract_vector(predict_forest(mean_active, data));
    if (has_var) {
      var_active = src->variance_forests->forest(src_index);
      var_sampler->reconstitute(data, *var_active, LeafModelType::kLogLinearVariance);
    }
    if (rfx_state) {
      *rfx_state = src->rfx->state(src_index);
      require(rfx_state->num_components() == rfx_data->num_components(), ErrorCode::kSchema,
              "warm start random effects basis differs from the stored model");
      residual.subtract_vector(rfx_predict(rfx_state->beta, rfx_data->group_ids(), rfx_data->basis()));
    }
    if (!gen.probit_outcome_model) global.update_global_error_variance(src->sigma2_global.at(src_index));
    if (src_index < static_cast<int>(src->sigma2_leaf.size())) tau = src->sigma2_leaf[src_index];
    set_tau(mean_cfg, tau);
  } else {
    const double leaf_init = q == 0 ? sample_mean(y_work) : 0.0;
    mean_sampler.prepare_for_sampler(data, residual, mean_active, mean_type, leaf_init);
    if (has_var) var_sampler->prepare_for_sampler(data, residual, *var_active, LeafModelType::kLogLinearVariance, 0.0);
  }

  auto notify = [&](int iteration, bool gfr) {
    if (!input.observer) return;
    input.observer(SamplerSnapshot{iteration, gfr, y_work, residual.residual(), data, mean_active,
                                   has_var ? &*var_active : nullptr, nullptr, nullptr,
                                   rfx_data ? &*rfx_data : nullptr, rfx_state ? &*rfx_state : nullptr,
                                   global.global_error_variance});
  };
  notify(-1, false);

  const int total = gen.num_gfr + gen.num_burnin + gen.num_mcmc;
  const bool keep_gfr = gen.keeps_gfr();
  std::vector<double> latent_fit(gen.probit_outcome_model ? n : 0);
  auto res = residual.mutable_residual();
  for (int it = 0; it < total; ++it) {
    const bool gfr = it < gen.num_gfr;
    const bool keep = gfr ? keep_gfr : it >= gen.num_gfr + gen.num_burnin;

    if (gen.probit_outcome_model) {
      for (int i = 0; i < n; ++i) latent_fit[i] = y_work[i] - res[i];
      probit_augment(y_work, latent_fit, y, rng);
      for (int i = 0; i < n; ++i) res[i] = y_work[i] - latent_fit[i];
    }

    mean_sampler.sample_one_iteration(data, residual, model.mean_forests, mean_active, rng, mean_cfg, global, keep,
                                      gfr);
    if (has_var) {
      var_sampler->sample_one_iteration(data, residual, *model.variance_forests, *var_active, rng, *var_cfg, global,
                                        keep, gfr);
    }
    if (rfx_state) {
      residual.add_vector(rfx_predict(rfx_state->beta, rfx_data->group_ids(), rfx_data->basis()));
      rfx_sample_one_iteration(*rfx_data, residual.residual(), data.variance_weights(), *rfx_state, rng,
                               global.global_error_variance, params.random_effects.prior);
      residual.subtract_vector(rfx_predict(rfx_state->beta, rfx_data->group_ids(), rfx_data->basis()));
    }
    if (gen.sample_sigma2_global && !gen.probit_outcome_model) {
      global.update_global_error_variance(
          sample_global_error_variance(residual, data, rng, global.a_global, global.b_global));
    }
    if (sample_tau) {
      tau = sample_leaf_scale(all_leaf_values(mean_active), a_leaf, b_leaf, rng);
      set_tau(mean_cfg, tau);
    }
    if (keep) {
      model.sigma2_global.push_back(global.global_error_variance);
      model.sigma2_leaf.push_back(tau);
      if (rfx_state) model.rfx->add(*rfx_state);
      if (gfr) ++model.num_gfr_retained;
    }
    notify(it, gfr);
  }
  return model;
}

/// Continue sampling from draw `sample_index` (0-based) of a stored model.
inline BartModel bart_resume(const BartModel& previous, int sample_index, const CovariateMatrix& x,
                             std::span<const double> y, const BartParams& params, BartFitInput input = {}) {
  input.warm_start = BartWarmStart{&previous, sample_index};
  return bart_fit(x, y, params, input);
}

enum class BartTerm { kYHat, kMeanForest, kVarianceForest, kRfx };

inline BartTerm bart_term_from_string(const std::string& s) {
  if (s == "y_hat") return BartTerm::kYHat;
  if (s == "mean_forest") return BartTerm::kMeanForest;
  if (s == "variance_forest") return BartTerm::kVarianceForest;
  if (s == "rfx") return BartTerm::kRfx;
  throw Error(ErrorCode::kInvalidArgument, "unknown BART prediction term '" + s + "'");
}

struct BartPredictInput {
  std::optional<Eigen::MatrixXd> leaf_basis;
  std::optional<RfxInput> rfx;
};

namespace detail {

inline ForestDataset bart_predict_dataset(const BartModel& model, const CovariateMatrix& x,
                                          const std::optional<Eigen::MatrixXd>& basis) {
  model.preprocessing.check(x);
  const int q = model.preprocessing.leaf_basis_dimension;
  if (q > 0) {
    require(basis.has_value(), ErrorCode::kInvalidArgument, "this model needs a leaf basis for prediction");
    require(basis->cols() == q, ErrorCode::kDimension,
            "leaf basis has " + std::to_string(basis->cols()) + " columns, model expects " + std::to_string(q));
  }
  return ForestDataset(x, q > 0 ? basis : std::nullopt);
}

inline Eigen::MatrixXd rfx_draws(const std::optional<RfxSamples>& rfx, const std::optional<RfxInput>& in, int n,
                                 std::optional<std::span<const double>> treatment) {
  require(rfx.has_value(), ErrorCode::kInvalidArgument, "model has no random effects term");
  require(in.has_value(), ErrorCode::kInvalidArgument, "random effects group ids are required for prediction");
  require(static_cast<int>(in->group_ids.size()) == n, ErrorCode::kDimension,
          "group id count differs from prediction rows");
  const auto basis = rfx_basis_for(*in, rfx->model_spec(), n, treatment);
  return rfx->predict(in->group_ids, basis);
}

}  // namespace detail

/// n x num_samples matrix of draws for one term on the original scale.
inline Eigen::MatrixXd bart_predict_posterior(const BartModel& model, const CovariateMatrix& x, BartTerm term,
                                              const BartPredictInput& input = {}) {
  const ForestDataset data = detail::bart_predict_dataset(model, x, input.leaf_basis);
  const auto& st = model.standardization;
  const int n = x.num_rows();
  switch (term) {
    case BartTerm::kMeanForest: {
      Eigen::MatrixXd f = model.mean_forests.predict(data);
      return (f.array() * st.scale + st.center).matrix();
    }
    case BartTerm::kYHat: {
      Eigen::MatrixXd f = model.mean_forests.predict(data);
      if (model.rfx) f += detail::rfx_draws(model.rfx, input.rfx, n, std::nullopt);
      if (model.is_probit()) return f.unaryExpr([](double v) { return normal_cdf_open(v); });
      return (f.array() * st.scale + st.center).matrix();
    }
    case BartTerm::kVarianceForest: {
      require(model.variance_forests.has_value(), ErrorCode::kInvalidArgument, "model has no variance forest");
      Eigen::MatrixXd v = model.variance_forests->predict(data);
      for (int s = 0; s < v.cols(); ++s) v.col(s) *= model.sigma2_global[s] * st.scale * st.scale;
      return v;
    }
    case BartTerm::kRfx:
      return detail::rfx_draws(model.rfx, input.rfx, n, std::nullopt) * st.scale;
  }
  return {};
}

/// Mean over samples (n x 1) or the full n x num_samples matrix.
inline Eigen::MatrixXd bart_predict(const BartModel& model, const CovariateMatrix& x, BartTerm term, PredictType type,
                                    const BartPredictInput& input = {}) {
  Eigen::MatrixXd draws = bart_predict_posterior(model, x, term, input);
  if (type == PredictType::kPosterior) return draws;
  return posterior_mean(draws);
}

enum class ContrastScale { kLinear, kProbability };

/// Per-sample difference of the mean-forest prediction at (x1, basis1) and
/// (x0, basis0). The linear scale bypasses the probit link.
inline Eigen::MatrixXd compute_contrast(const BartModel& model, const CovariateMatrix& x0, const CovariateMatrix& x1,
                                        const std::optional<Eigen::MatrixXd>& basis0,
                                        const std::optional<Eigen::MatrixXd>& basis1, ContrastScale scale) {
  require(x0.num_rows() == x1.num_rows(), ErrorCode::kDimension, "contrast inputs must have equal row counts");
  const Eigen::MatrixXd f0 = model.mean_forests.predict(detail::bart_predict_dataset(model, x0, basis0));
  const Eigen::MatrixXd f1 = model.mean_forests.predict(detail::bart_predict_dataset(model, x1, basis1));
  if (scale == ContrastScale::kProbability && model.is_probit()) {
    auto phi = [](double v) { return normal_cdf_open(v); };
    return f1.unaryExpr(phi) - f0.unaryExpr(phi);
  }
  return (f1 - f0) * model.standardization.scale;
}

}  // namespace stochforest

#endif  // STOCHFOREST_BART_HPP_
