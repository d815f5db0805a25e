#ifndef STOCHFOREST_BCF_HPP_
#define STOCHFOREST_BCF_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochforest/bart.hpp"
#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/forest_sampler.hpp"
#include "stochforest/model_common.hpp"
#include "stochforest/random_effects.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/tree.hpp"

namespace stochforest {

enum class PropensityCovariate { kMu, kNone };

inline const char* to_string(PropensityCovariate p) { return p == PropensityCovariate::kMu ? "mu" : "none"; }

inline PropensityCovariate propensity_covariate_from_string(const std::string& s) {
  if (s == "mu") return PropensityCovariate::kMu;
  if (s == "none") return PropensityCovariate::kNone;
  throw Error(ErrorCode::kInvalidArgument, "propensity_covariate must be 'mu' or 'none', got '" + s + "'");
}

inline ForestParams treatment_forest_defaults() {
  ForestParams p;
  p.num_trees = 50;
  p.alpha = 0.25;
  p.beta = 3.0;
  p.sample_sigma2_leaf = false;
  return p;
}

/// Internal propensity model: probit BART with default settings.
inline BartParams propensity_model_defaults() {
  BartParams p;
  p.general.probit_outcome_model = true;
  return p;
}

struct BcfParams {
  GeneralParams general;
  PropensityCovariate propensity_covariate = PropensityCovariate::kMu;
  ForestParams prognostic_forest;
  ForestParams treatment_forest = treatment_forest_defaults();
  ForestParams variance_forest = variance_forest_defaults();
  RfxParams random_effects;
  BartParams propensity_model = propensity_model_defaults();

  void validate() const {
    general.validate();
    prognostic_forest.validate("prognostic_forest");
    treatment_forest.validate("treatment_effect_forest");
    variance_forest.validate("variance_forest");
    require(prognostic_forest.num_trees >= 1 && treatment_forest.num_trees >= 1, ErrorCode::kInvalidArgument,
            "prognostic and treatment forests need at least one tree");
    require(!(general.probit_outcome_model && variance_forest.num_trees > 0), ErrorCode::kInvalidArgument,
            "a variance forest cannot be combined with the probit outcome model");
  }
};

inline constexpr const char* kPropensityColumn = "propensity_score";

/// Fitted BCF model: y = mu(x) + tau(x) z (+ random effects) on the
/// standardized scale.
struct BcfModel {
  BcfParams params;
  Preprocessing preprocessing;  // covariates as supplied, without the propensity column
  StandardizationInfo standardization;
  ForestSamples mu_forests;
  ForestSamples tau_forests;
  std::optional<ForestSamples> variance_forests;
  std::vector<double> sigma2_global;
  std::vector<double> sigma2_leaf_mu;
  std::vector<double> sigma2_leaf_tau;
  std::optional<RfxSamples> rfx;
  std::shared_ptr<const BartModel> propensity_model;  // set when fitted internally
  bool uses_propensity = false;
  int num_gfr_retained = 0;

  int num_samples() const { return mu_forests.num_samples(); }
  bool is_probit() const { return params.general.probit_outcome_model; }
};

struct BcfWarmStart {
  const BcfModel* model = nullptr;
  int sample_index = 0;
};

struct BcfFitInput {
  std::optional<std::vector<double>> propensity;
  std::optional<RfxInput> rfx;
  std::optional<BcfWarmStart> warm_start;
  std::function<void(const SamplerSnapshot&)> observer;
};

namespace detail {

inline bool is_binary(std::span<const double> z) {
  for (double v : z) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

inline void check_propensity(std::span<const double> pi, int n, bool binary_treatment) {
  require(static_cast<int>(pi.size()) == n, ErrorCode::kDimension,
          "propensity length " + std::to_string(pi.size()) + " != rows " + std::to_string(n));
  for (std::size_t i = 0; i < pi.size(); ++i) {
    require(std::isfinite(pi[i]), ErrorCode::kInvalidArgument, "non-finite propensity at row " + std::to_string(i));
    if (binary_treatment) {
      require(pi[i] >= 0.0 && pi[i] <= 1.0, ErrorCode::kInvalidArgument,
              "propensity at row " + std::to_string(i) + " is outside [0, 1]");
    }
  }
}

inline std::vector<double> propensity_from_model(const BartModel& m, const CovariateMatrix& x) {
  const Eigen::VectorXd p = bart_predict(m, x, BartTerm::kYHat, PredictType::kMean).col(0);
  return std::vector<double>(p.data(), p.data() + p.size());
}

/// Covariates seen by the prognostic forest.
inline CovariateMatrix mu_covariates(const BcfModel& model, const CovariateMatrix& x,
                                     const std::optional<std::vector<double>>& propensity) {
  if (!model.uses_propensity) return x;
  std::vector<double> pi;
  if (propensity) {
    pi = *propensity;
  } else {
    require(model.propensity_model != nullptr, ErrorCode::kInvalidArgument,
            "this model was trained with a supplied propensity score; pass one for prediction");
    pi = propensity_from_model(*model.propensity_model, x);
  }
  check_propensity(pi, x.num_rows(), false);
  return x.with_appended_column(kPropensityColumn, pi);
}

}  // namespace detail

inline BcfModel bcf_fit(const CovariateMatrix& x, std::span<const double> z, std::span<const double> y,
                        const BcfParams& params, const BcfFitInput& input = {}) {
  params.validate();
  const auto& gen = params.general;
  const int n = x.num_rows();
  require(static_cast<int>(y.size()) == n, ErrorCode::kDimension,
          "outcome length " + std::to_string(y.size()) + " != covariate rows " + std::to_string(n));
  require(static_cast<int>(z.size()) == n, ErrorCode::kDimension,
          "treatment length " + std::to_string(z.size()) + " != covariate rows " + std::to_string(n));
  for (int i = 0; i < n; ++i) {
    require(std::isfinite(y[i]) && std::isfinite(z[i]), ErrorCode::kInvalidArgument,
            "non-finite outcome or treatment at row " + std::to_string(i));
  }
  if (gen.probit_outcome_model) require_binary(y, "probit outcome");
  const bool binary_z = detail::is_binary(z);

  const BcfModel* src = nullptr;
  int src_index = 0;
  if (input.warm_start) {
    src = input.warm_start->model;
    src_index = input.warm_start->sample_index;
    require(src != nullptr, ErrorCode::kInvalidArgument, "warm start needs a model");
    require(src_index >= 0 && src_index < src->num_samples(), ErrorCode::kRange,
            "warm-start index " + std::to_string(src_index) + " out of range [0, " +
                std::to_string(src->num_samples()) + ")");
    src->preprocessing.check(x);
    require(src->is_probit() == gen.probit_outcome_model, ErrorCode::kSchema,
            "warm start outcome model differs from the stored model");
    require(src->variance_forests.has_value() == (params.variance_forest.num_trees > 0), ErrorCode::kSchema,
            "warm start variance forest presence differs from the stored model");
    require(src->rfx.has_value() == input.rfx.has_value(), ErrorCode::kSchema,
            "warm start random effects presence differs from the stored model");
    require(src->mu_forests.num_trees() == params.prognostic_forest.num_trees &&
                src->tau_forests.num_trees() == params.treatment_forest.num_trees,
            ErrorCode::kSchema, "warm start forest sizes differ from the stored model");
    require(src->uses_propensity == (params.propensity_covariate == PropensityCovariate::kMu), ErrorCode::kSchema,
            "warm start propensity usage differs from the stored model");
  }

  BcfModel model;
  model.params = params;
  model.preprocessing = Preprocessing::from(x, 0);
  model.uses_propensity = params.propensity_covariate == PropensityCovariate::kMu;

  Rng rng(resolve_seed(gen.random_seed));

  // Propensity column for the prognostic forest.
  std::optional<std::vector<double>> propensity = input.propensity;
  if (propensity) detail::check_propensity(*propensity, n, binary_z);
  if (model.uses_propensity && !propensity) {
    if (src && src->propensity_model) {
      model.propensity_model = src->propensity_model;
    } else {
      require(!src, ErrorCode::kInvalidArgument, "warm start needs the propensity scores used at training");
      require(binary_z, ErrorCode::kInvalidArgument,
              "automatic propensity estimation needs a binary treatment; supply propensity scores or set "
              "propensity_covariate=none");
      BartParams pp = params.propensity_model;
      pp.general.probit_outcome_model = true;
      pp.general.random_seed = rng.next_u64();
      model.propensity_model = std::make_shared<const BartModel>(bart_fit(x, z, pp));
    }
    propensity = detail::propensity_from_model(*model.propensity_model, x);
  }
  const CovariateMatrix x_mu = model.uses_propensity ? x.with_appended_column(kPropensityColumn, *propensity) : x;

  if (src) {
    model.standardization = src->standardization;
  } else if (gen.probit_outcome_model) {
    model.standardization = StandardizationInfo{0.0, 1.0};
  } else {
    model.standardization = standardize_outcome(y).second;
  }
  std::vector<double> y_work(n);
  for (int i = 0; i < n; ++i) {
    y_work[i] = gen.probit_outcome_model ? (y[i] > 0.5 ? 0.6745 : -0.6745) : model.standardization.to_standard(y[i]);
  }

  // One dataset serves every forest: the treatment forest reads the basis z
  // and never splits on the propensity column, and all terms share the
  // variance weights.
  Eigen::MatrixXd zb(n, 1);
  for (int i = 0; i < n; ++i) zb(i, 0) = z[i];
  ForestDataset data(x_mu, zb);
  const auto& names_mu = x_mu.column_names();
  const int extra = model.uses_propensity ? 1 : 0;

  auto leaf_setup = [](const ForestParams& fp) {
    const double tau = fp.sigma2_leaf_init > 0.0 ? fp.sigma2_leaf_init : 1.0 / fp.num_trees;
    const double a = fp.a_leaf > 0.0 ? fp.a_leaf : 3.0;
    const double b = fp.b_leaf > 0.0 ? fp.b_leaf : detail::default_leaf_scale_b(a, tau);
    return std::array<double, 3>{tau, a, b};
  };

  const auto mu_leaf = leaf_setup(params.prognostic_forest);
  ForestModelConfig mu_cfg = build_forest_config(data, params.prognostic_forest, LeafModelType::kConstantGaussian, 1,
                                                 resolve_variable_weights(names_mu, params.prognostic_forest, extra));
  mu_cfg.update_leaf_scale(mu_leaf[0]);
  Forest mu_active(params.prognostic_forest.num_trees, 1, true, false);
  model.mu_forests = ForestSamples(params.prognostic_forest.num_trees, 1, true, false);
  ForestSampler mu_sampler(data, mu_cfg);

  const auto tau_leaf = leaf_setup(params.treatment_forest);
  std::vector<double> tau_weights = resolve_variable_weights(x.column_names(), params.treatment_forest);
  if (model.uses_propensity) tau_weights.push_back(0.0);
  ForestModelConfig tau_cfg = build_forest_config(data, params.treatment_forest, LeafModelType::kUnivariateRegression,
                                                  1, std::move(tau_weights));
  tau_cfg.update_leaf_scale(tau_leaf[0]);
  Forest tau_active(params.treatment_forest.num_trees, 1, false, false);
  model.tau_forests = ForestSamples(params.treatment_forest.num_trees, 1, false, false);
  ForestSampler tau_sampler(data, tau_cfg);

  const bool has_var = params.variance_forest.num_trees > 0;
  std::optional<ForestModelConfig> var_cfg;
  std::optional<Forest> var_active;
  std::optional<ForestSampler> var_sampler;
  if (has_var) {
    var_cfg = build_forest_config(data, params.variance_forest, LeafModelType::kLogLinearVariance, 1,
                                  resolve_variable_weights(names_mu, params.variance_forest, extra));
    detail::configure_variance_leaf(*var_cfg, params.variance_forest);
    var_active.emplace(params.variance_forest.num_trees, 1, true, true);
    model.variance_forests = ForestSamples(params.variance_forest.num_trees, 1, true, true);
    var_sampler.emplace(data, *var_cfg);
  }

  std::optional<RfxDataset> rfx_data;
  std::optional<RfxModelState> rfx_state;
  if (input.rfx) {
    const auto spec = rfx_model_spec_from_string(params.random_effects.model_spec);
    auto basis = detail::rfx_basis_for(*input.rfx, spec, n, z);
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
  double tau_mu = mu_leaf[0];
  double tau_tau = tau_leaf[0];

  Outcome residual(y_work);
  if (src) {
    mu_active = src->mu_forests.forest(src_index);
    tau_active = src->tau_forests.forest(src_index);
    mu_sampler.reconstitute(data, mu_active, LeafModelType::kConstantGaussian);
    tau_sampler.reconstitute(data, tau_active, LeafModelType::kUnivariateRegression);
    residual.subtract_vector(predict_forest(mu_active, data));
    residual.subtract_vector(predict_forest(tau_active, data));
    if (has_var) {
      var_active = src->variance_forests->forest(src_index);
      var_sampler->reconstitute(data, *var_active, LeafModelType::kLogLinearVariance);
    }
    if (rfx_state) {
      *rfx_state = src->rfx->state(src_index);
      residual.subtract_vector(rfx_predict(rfx_state->beta, rfx_data->group_ids(), rfx_data->basis()));
    }
    if (!gen.probit_outcome_model) global.update_global_error_variance(src->sigma2_global.at(src_index));
    tau_mu = src->sigma2_leaf_mu.at(src_index);
    tau_tau = src->sigma2_leaf_tau.at(src_index);
    mu_cfg.update_leaf_scale(tau_mu);
    tau_cfg.update_leaf_scale(tau_tau);
  } else {
    mu_sampler.prepare_for_sampler(data, residual, mu_active, LeafModelType::kConstantGaussian, sample_mean(y_work));
    tau_sampler.prepare_for_sampler(data, residual, tau_active, LeafModelType::kUnivariateRegression, 0.0);
    if (has_var) var_sampler->prepare_for_sampler(data, residual, *var_active, LeafModelType::kLogLinearVariance, 0.0);
  }

  auto notify = [&](int iteration, bool gfr) {
    if (!input.observer) return;
    input.observer(SamplerSnapshot{iteration, gfr, y_work, residual.residual(), data, mu_active,
                                   has_var ? &*var_active : nullptr, &tau_active, &data,
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

    mu_sampler.sample_one_iteration(data, residual, model.mu_forests, mu_active, rng, mu_cfg, global, keep, gfr);
    tau_sampler.sample_one_iteration(data, residual, model.tau_forests, tau_active, rng, tau_cfg, global, keep, gfr);
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
    if (params.prognostic_forest.sample_sigma2_leaf) {
      tau_mu = sample_leaf_scale(all_leaf_values(mu_active), mu_leaf[1], mu_leaf[2], rng);
      mu_cfg.update_leaf_scale(tau_mu);
    }
    if (params.treatment_forest.sample_sigma2_leaf) {
      tau_tau = sample_leaf_scale(all_leaf_values(tau_active), tau_leaf[1], tau_leaf[2], rng);
      tau_cfg.update_leaf_scale(tau_tau);
    }
    if (keep) {
      model.sigma2_global.push_back(global.global_error_variance);
      model.sigma2_leaf_mu.push_back(tau_mu);
      model.sigma2_leaf_tau.push_back(tau_tau);
      if (rfx_state) model.rfx->add(*rfx_state);
      if (gfr) ++model.num_gfr_retained;
    }
    notify(it, gfr);
  }
  return model;
}

inline BcfModel bcf_resume(const BcfModel& previous, int sample_index, const CovariateMatrix& x,
                           std::span<const double> z, std::span<const double> y, const BcfParams& params,
                           BcfFitInput input = {}) {
  input.warm_start = BcfWarmStart{&previous, sample_index};
  return bcf_fit(x, z, y, params, input);
}

enum class BcfTerm { kYHat, kMu, kCate, kRfx, kVariance };

inline BcfTerm bcf_term_from_string(const std::string& s) {
  if (s == "y_hat") return BcfTerm::kYHat;
  if (s == "mu") return BcfTerm::kMu;
  if (s == "cate") return BcfTerm::kCate;
  if (s == "rfx") return BcfTerm::kRfx;
  if (s == "variance" || s == "variance_forest") return BcfTerm::kVariance;
  throw Error(ErrorCode::kInvalidArgument, "unknown BCF prediction term '" + s + "'");
}

struct BcfPredictInput {
  std::optional<std::vector<double>> z;
  std::optional<std::vector<double>> propensity;
  std::optional<RfxInput> rfx;
};

/// n x num_samples draws of one term on the original outcome scale.
inline Eigen::MatrixXd bcf_predict_posterior(const BcfModel& model, const CovariateMatrix& x, BcfTerm term,
                                             const BcfPredictInput& input = {}) {
  model.preprocessing.check(x);
  const int n = x.num_rows();
  const auto& st = model.standardization;
  if (input.z) {
    require(static_cast<int>(input.z->size()) == n, ErrorCode::kDimension, "treatment length differs from rows");
  }
  auto tau_raw = [&]() {
    ForestDataset ones(x, Eigen::MatrixXd::Ones(n, 1));
    return model.tau_forests.predict(ones);
  };
  auto mu_raw = [&]() {
    ForestDataset d(detail::mu_covariates(model, x, input.propensity));
    return model.mu_forests.predict(d);
  };
  auto rfx_raw = [&]() {
    std::optional<std::span<const double>> zspan;
    if (input.z) zspan = std::span<const double>(*input.z);
    return detail::rfx_draws(model.rfx, input.rfx, n, zspan);
  };
  // xi_j added to the CATE under intercept_plus_treatment random effects
  auto cate_rfx = [&](Eigen::MatrixXd& tau) {
    if (!model.rfx || model.rfx->model_spec() != RfxModelSpec::kInterceptPlusTreatment || !input.rfx) return;
    for (int s = 0; s < tau.cols(); ++s) {
      const auto& beta = model.rfx->beta_sample(s);
      for (int i = 0; i < n; ++i) {
        const int g = input.rfx->group_ids[i];
        require(g >= 0 && g < beta.cols(), ErrorCode::kRange, "group id " + std::to_string(g) + " was not seen in training");
        tau(i, s) += beta(1, g);
      }
    }
  };

  switch (term) {
    case BcfTerm::kMu: {
      const Eigen::MatrixXd mu = mu_raw();
      return (mu.array() * st.scale + st.center).matrix();
    }
    case BcfTerm::kCate: {
      Eigen::MatrixXd tau = tau_raw();
      cate_rfx(tau);
      return tau * st.scale;
    }
    case BcfTerm::kYHat: {
      require(input.z.has_value(), ErrorCode::kInvalidArgument, "y_hat prediction needs the treatment vector");
      Eigen::MatrixXd f = mu_raw();
      const Eigen::MatrixXd tau = tau_raw();
      for (int i = 0; i < n; ++i) f.row(i) += tau.row(i) * (*input.z)[i];
      if (model.rfx) f += rfx_raw();
      if (model.is_probit()) return f.unaryExpr([](double v) { return normal_cdf_open(v); });
      return (f.array() * st.scale + st.center).matrix();
    }
    case BcfTerm::kRfx:
      return rfx_raw() * st.scale;
    case BcfTerm::kVariance: {
      require(model.variance_forests.has_value(), ErrorCode::kInvalidArgument, "model has no variance forest");
      ForestDataset d(detail::mu_covariates(model, x, input.propensity));
      Eigen::MatrixXd v = model.variance_forests->predict(d);
      for (int s = 0; s < v.cols(); ++s) v.col(s) *= model.sigma2_global[s] * st.scale * st.scale;
      return v;
    }
  }
  return {};
}

inline Eigen::MatrixXd bcf_predict(const BcfModel& model, const CovariateMatrix& x, BcfTerm term, PredictType type,
                                   const BcfPredictInput& input = {}) {
  Eigen::MatrixXd draws = bcf_predict_posterior(model, x, term, input);
  if (type == PredictType::kPosterior) return draws;
  return posterior_mean(draws);
}

/// Average treatment effect draws: column means of a CATE posterior.
inline Eigen::VectorXd ate_draws(const Eigen::MatrixXd& cate_posterior) {
  require(cate_posterior.rows() > 0, ErrorCode::kEmptyInput, "empty CATE posterior");
  return cate_posterior.colwise().mean().transpose();
}

/// Per-sample xi_j + mean of tau(x_i) over the rows of group j.
inline Eigen::VectorXd subgroup_ate(const BcfModel& model, const CovariateMatrix& x, std::span<const int> group_ids,
                                    int group) {
  require(static_cast<int>(group_ids.size()) == x.num_rows(), ErrorCode::kDimension,
          "group id count differs from rows");
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(group_ids.size()); ++i) {
    if (group_ids[i] == group) rows.push_back(i);
  }
  require(!rows.empty(), ErrorCode::kRange, "group " + std::to_string(group) + " has no rows");
  if (model.rfx) {
    require(group >= 0 && group < model.rfx->num_groups(), ErrorCode::kRange,
            "group " + std::to_string(group) + " was not seen in training");
  }
  model.preprocessing.check(x);
  const int n = x.num_rows();
  ForestDataset ones(x, Eigen::MatrixXd::Ones(n, 1));
  const Eigen::MatrixXd tau = model.tau_forests.predict(ones);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(tau.cols());
  for (int s = 0; s < tau.cols(); ++s) {
    double acc = 0.0;
    for (int i : rows) acc += tau(i, s);
    out[s] = acc / static_cast<double>(rows.size());
    if (model.rfx && model.rfx->model_spec() == RfxModelSpec::kInterceptPlusTreatment) {
      out[s] += model.rfx->beta_sample(s)(1, group);
    }
  }
  return out * model.standardization.scale;
}

}  // namespace stochforest

#endif  // STOCHFOREST_BCF_HPP_
