#ifndef STOCHFOREST_CLI_HPP_
#define STOCHFOREST_CLI_HPP_

// Command-line front end: simulate, fit, predict, resume, demo.
// Exit codes: 0 success, 2 invalid input, 1 runtime failure.

#include <CLI11.hpp>
#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "stochforest/bart.hpp"
#include "stochforest/bcf.hpp"
#include "stochforest/data.hpp"
#include "stochforest/dgp.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/recipes.hpp"
#include "stochforest/serialization.hpp"

namespace stochforest {

namespace cli_detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Small CSV writer; cells are numbers or plain labels.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    require(cells.size() == cols_, ErrorCode::kDimension, "csv row width mismatch");
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j) out_ << ',';
      out_ << cells[j];
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::size_t cols_;
  std::ostringstream out_;
};

inline std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) out.push_back(tok);
    }
  }
  return out;
}

/// Apply "section.key=value" overrides to a params JSON object. Only keys
/// that already exist may be set; values are parsed as JSON when possible.
inline void apply_overrides(Json& params, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, ErrorCode::kInvalidArgument, "override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    Json* node = &params;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) {
      require(node->is_object() && node->contains(part), ErrorCode::kInvalidArgument,
              "unknown parameter '" + key + "'");
      node = &(*node)[part];
    }
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    if (node->is_array() && value.is_string()) {
      Json arr = Json::array();
      for (const auto& s : split_list({raw})) arr.push_back(s);
      value = arr;
    }
    *node = value;
  }
}

inline std::vector<std::string> string_column(const CsvTable& table, const std::string& name) {
  const int c = table.require_column(name);
  std::vector<std::string> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) out.push_back(r[c]);
  return out;
}

inline Eigen::MatrixXd basis_matrix(const CsvTable& table, const std::vector<std::string>& cols) {
  Eigen::MatrixXd b(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto v = numeric_column(table, table.require_column(cols[j]));
    for (std::size_t i = 0; i < v.size(); ++i) b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
  }
  return b;
}

inline std::uint64_t chain_seed(std::uint64_t seed, int chain) {
  return seed + static_cast<std::uint64_t>(chain) * 0x9E3779B97F4A7C15ULL;
}

inline void append_samples(BartModel& into, const BartModel& from) {
  into.mean_forests.append(from.mean_forests);
  if (into.variance_forests && from.variance_forests) into.variance_forests->append(*from.variance_forests);
  into.sigma2_global.insert(into.sigma2_global.end(), from.sigma2_global.begin(), from.sigma2_global.end());
  into.sigma2_leaf.insert(into.sigma2_leaf.end(), from.sigma2_leaf.begin(), from.sigma2_leaf.end());
  if (into.rfx && from.rfx) into.rfx->append(*from.rfx);
  into.num_gfr_retained += from.num_gfr_retained;
}

inline void append_samples(BcfModel& into, const BcfModel& from) {
  into.mu_forests.append(from.mu_forests);
  into.tau_forests.append(from.tau_forests);
  if (into.variance_forests && from.variance_forests) into.variance_forests->append(*from.variance_forests);
  into.sigma2_global.insert(into.sigma2_global.end(), from.sigma2_global.begin(), from.sigma2_global.end());
  into.sigma2_leaf_mu.insert(into.sigma2_leaf_mu.end(), from.sigma2_leaf_mu.begin(), from.sigma2_leaf_mu.end());
  into.sigma2_leaf_tau.insert(into.sigma2_leaf_tau.end(), from.sigma2_leaf_tau.begin(), from.sigma2_leaf_tau.end());
  if (into.rfx && from.rfx) into.rfx->append(*from.rfx);
  into.num_gfr_retained += from.num_gfr_retained;
}

inline std::string trace_cell(const std::vector<double>& trace, std::size_t i, double scale2 = 1.0) {
  return i < trace.size() ? fmt(trace[i] * scale2) : "";
}

inline std::string trace_csv(const std::vector<BartModel>& chains) {
  CsvWriter w({"chain", "sample", "sigma2_global", "sigma2_leaf"});
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& m = chains[c];
    const double s2 = m.standardization.scale * m.standardization.scale;
    for (int s = 0; s < m.num_samples(); ++s) {
      const auto i = static_cast<std::size_t>(s);
      w.row({std::to_string(c), std::to_string(s), trace_cell(m.sigma2_global, i, s2), trace_cell(m.sigma2_leaf, i)});
    }
  }
  return w.str();
}

inline std::string trace_csv(const std::vector<BcfModel>& chains) {
  CsvWriter w({"chain", "sample", "sigma2_global", "sigma2_leaf_mu", "sigma2_leaf_tau"});
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& m = chains[c];
    const double s2 = m.standardization.scale * m.standardization.scale;
    for (int s = 0; s < m.num_samples(); ++s) {
      const auto i = static_cast<std::size_t>(s);
      w.row({std::to_string(c), std::to_string(s), trace_cell(m.sigma2_global, i, s2),
             trace_cell(m.sigma2_leaf_mu, i), trace_cell(m.sigma2_leaf_tau, i)});
    }
  }
  return w.str();
}

/// Run `fit_one(seed)` for every chain on its own thread; results keep
/// chain order so outputs do not depend on scheduling.
template <class Model, class Fn>
std::vector<Model> run_chains(int chains, std::uint64_t seed, Fn fit_one) {
  require(chains >= 1, ErrorCode::kInvalidArgument, "--chains must be >= 1");
  std::vector<std::optional<Model>> slots(chains);
  std::vector<std::exception_ptr> errors(chains);
  std::vector<std::thread> threads;
  for (int c = 0; c < chains; ++c) {
    threads.emplace_back([&, c] {
      try {
        slots[c] = fit_one(chain_seed(seed, c));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<Model> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// --- data options shared by fit / predict / resume -------------------------

struct DataOptions {
  std::string data_path;
  std::string outcome = "y";
  std::string treatment;
  std::string group;
  std::string propensity;
  std::vector<std::string> basis_cols;
  std::vector<std::string> ordered;
  std::vector<std::string> unordered;
  std::vector<std::string> exclude;

  void add_to(CLI::App* app, bool needs_outcome) {
    app->add_option("--data", data_path, "input CSV")->required()->check(CLI::ExistingFile);
    if (needs_outcome) app->add_option("--outcome", outcome, "outcome column")->capture_default_str();
    app->add_option("--treatment", treatment, "treatment column (BCF)");
    app->add_option("--group", group, "random-effect group column");
    app->add_option("--propensity", propensity, "propensity column (BCF)");
    app->add_option("--basis-cols", basis_cols, "leaf-basis columns (BART)")->delimiter(',');
    app->add_option("--ordered", ordered, "ordered categorical columns")->delimiter(',');
    app->add_option("--unordered", unordered, "unordered categorical columns")->delimiter(',');
    app->add_option("--exclude", exclude, "columns to ignore")->delimiter(',');
  }

  CategoricalSpec categorical_spec() const {
    CategoricalSpec spec;
    for (const auto& c : ordered) spec[c] = CategoricalKind::kOrdered;
    for (const auto& c : unordered) {
      require(!spec.count(c), ErrorCode::kInvalidArgument, "column '" + c + "' is both ordered and unordered");
      spec[c] = CategoricalKind::kUnordered;
    }
    return spec;
  }

  std::vector<std::string> non_covariates() const {
    std::vector<std::string> out = exclude;
    for (const auto* s : {&group, &propensity}) {
      if (!s->empty()) out.push_back(*s);
    }
    out.insert(out.end(), basis_cols.begin(), basis_cols.end());
    return out;
  }
};

inline std::optional<RfxInput> fit_rfx_input(const CsvTable& table, const DataOptions& d) {
  if (d.group.empty()) return std::nullopt;
  auto [ids, levels] = encode_group_labels(string_column(table, d.group));
  return RfxInput{std::move(ids), std::move(levels), std::nullopt};
}

template <class Model>
std::optional<RfxInput> predict_rfx_input(const CsvTable& table, const DataOptions& d, const Model& model) {
  if (d.group.empty() || !model.rfx) return std::nullopt;
  const auto labels = string_column(table, d.group);
  return RfxInput{model.rfx->encode_groups(labels), {}, std::nullopt};
}

inline CovariateMatrix schema_covariates(const CsvTable& table, const Preprocessing& p) {
  return encode_with_schema(table, p.column_names, p.feature_types, p.level_maps);
}

// --- fit --------------------------------------------------------------------

struct ModelOptions {
  std::string model = "bart";
  std::vector<std::string> overrides;
  std::vector<std::string> keep_vars, drop_vars, keep_vars_tau, drop_vars_tau;
  std::optional<int> num_gfr, num_burnin, num_mcmc, num_trees, num_trees_tau, variance_trees;
  bool probit = false;
  std::string rfx_spec;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app, bool with_model) {
    if (with_model) {
      app->add_option("--model", model, "bart or bcf")->check(CLI::IsMember({"bart", "bcf"}))->capture_default_str();
    }
    app->add_option("--set", overrides, "parameter override section.key=value (repeatable)");
    app->add_option("--keep-vars", keep_vars, "mean / prognostic forest keep list")->delimiter(',');
    app->add_option("--drop-vars", drop_vars, "mean / prognostic forest drop list")->delimiter(',');
    app->add_option("--keep-vars-tau", keep_vars_tau, "treatment forest keep list")->delimiter(',');
    app->add_option("--drop-vars-tau", drop_vars_tau, "treatment forest drop list")->delimiter(',');
    app->add_option("--num-gfr", num_gfr);
    app->add_option("--num-burnin", num_burnin);
    app->add_option("--num-mcmc", num_mcmc);
    app->add_option("--num-trees", num_trees, "mean / prognostic forest size");
    app->add_option("--num-trees-tau", num_trees_tau, "treatment forest size");
    app->add_option("--variance-trees", variance_trees, "variance forest size (0 = off)");
    app->add_flag("--probit", probit, "binary outcome with probit link");
    app->add_option("--rfx-spec", rfx_spec, "intercept_only or intercept_plus_treatment");
    app->add_option("--seed", seed, "random seed");
  }

  void apply_general(GeneralParams& g) const {
    if (num_gfr) g.num_gfr = *num_gfr;
    if (num_burnin) g.num_burnin = *num_burnin;
    if (num_mcmc) g.num_mcmc = *num_mcmc;
    if (probit) g.probit_outcome_model = true;
    if (seed) g.random_seed = *seed;
  }

  BartParams bart_params(BartParams p) const {
    apply_general(p.general);
    if (!keep_vars.empty()) p.mean_forest.keep_vars = keep_vars;
    if (!drop_vars.empty()) p.mean_forest.drop_vars = drop_vars;
    if (num_trees) p.mean_forest.num_trees = *num_trees;
    if (variance_trees) p.variance_forest.num_trees = *variance_trees;
    if (!rfx_spec.empty()) p.random_effects.model_spec = rfx_spec;
    Json j = to_json(p);
    apply_overrides(j, overrides);
    p = bart_params_from_json(j);
    p.validate();
    return p;
  }

  BcfParams bcf_params(BcfParams p) const {
    apply_general(p.general);
    if (!keep_vars.empty()) p.prognostic_forest.keep_vars = keep_vars;
    if (!drop_vars.empty()) p.prognostic_forest.drop_vars = drop_vars;
    if (!keep_vars_tau.empty()) p.treatment_forest.keep_vars = keep_vars_tau;
    if (!drop_vars_tau.empty()) p.treatment_forest.drop_vars = drop_vars_tau;
    if (num_trees) p.prognostic_forest.num_trees = *num_trees;
    if (num_trees_tau) p.treatment_forest.num_trees = *num_trees_tau;
    if (variance_trees) p.variance_forest.num_trees = *variance_trees;
    if (!rfx_spec.empty()) p.random_effects.model_spec = rfx_spec;
    Json j = to_json(p);
    apply_overrides(j, overrides);
    p = bcf_params_from_json(j);
    p.validate();
    return p;
  }
};

struct FitOptions {
  DataOptions data;
  ModelOptions model;
  int chains = 1;
  std::string out_path;
  std::string trace_path;
};

inline void run_fit(const FitOptions& o) {
  const CsvTable table = read_csv(o.data.data_path);
  const bool bcf = o.model.model == "bcf";
  std::optional<std::string> treatment;
  if (bcf) {
    require(!o.data.treatment.empty(), ErrorCode::kInvalidArgument, "--model bcf needs --treatment");
    treatment = o.data.treatment;
  }
  const LoadedData loaded =
      load_csv_table(table, o.data.outcome, treatment, o.data.categorical_spec(), o.data.non_covariates());
  const auto rfx = fit_rfx_input(table, o.data);
  std::string model_json, traces;

  if (bcf) {
    const BcfParams params = o.model.bcf_params(BcfParams{});
    BcfFitInput in;
    in.rfx = rfx;
    if (!o.data.propensity.empty()) in.propensity = numeric_column(table, table.require_column(o.data.propensity));
    const std::uint64_t seed = resolve_seed(params.general.random_seed);
    auto chains = run_chains<BcfModel>(o.chains, seed, [&](std::uint64_t s) {
      BcfParams p = params;
      p.general.random_seed = s;
      return bcf_fit(loaded.covariates, *loaded.treatment, loaded.outcome, p, in);
    });
    traces = trace_csv(chains);
    BcfModel merged = chains.front();
    for (std::size_t c = 1; c < chains.size(); ++c) append_samples(merged, chains[c]);
    model_json = bcf_model_to_json(merged);
  } else {
    const BartParams params = o.model.bart_params(BartParams{});
    BartFitInput in;
    in.rfx = rfx;
    if (!o.data.basis_cols.empty()) in.leaf_basis = basis_matrix(table, o.data.basis_cols);
    const std::uint64_t seed = resolve_seed(params.general.random_seed);
    auto chains = run_chains<BartModel>(o.chains, seed, [&](std::uint64_t s) {
      BartParams p = params;
      p.general.random_seed = s;
      return bart_fit(loaded.covariates, loaded.outcome, p, in);
    });
    traces = trace_csv(chains);
    BartModel merged = chains.front();
    for (std::size_t c = 1; c < chains.size(); ++c) append_samples(merged, chains[c]);
    model_json = bart_model_to_json(merged);
  }
  write_text_file(o.out_path, model_json);
  if (!o.trace_path.empty()) write_text_file(o.trace_path, traces);
}

// --- predict ----------------------------------------------------------------

struct PredictOptions {
  DataOptions data;
  std::string model_path;
  std::vector<std::string> terms{"y_hat"};
  std::string type = "mean";
  std::string out_path;
};

inline std::string predictions_csv(const std::vector<std::string>& names, const std::vector<Eigen::MatrixXd>& mats,
                                   bool posterior) {
  std::vector<std::string> header;
  for (std::size_t t = 0; t < names.size(); ++t) {
    if (!posterior) {
      header.push_back(names[t]);
    } else {
      for (Eigen::Index s = 0; s < mats[t].cols(); ++s) header.push_back(names[t] + "_" + std::to_string(s));
    }
  }
  CsvWriter w(header);
  const Eigen::Index n = mats.empty() ? 0 : mats.front().rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::string> cells;
    for (const auto& m : mats) {
      for (Eigen::Index s = 0; s < m.cols(); ++s) cells.push_back(fmt(m(i, s)));
    }
    w.row(cells);
  }
  return w.str();
}

inline void run_predict(const PredictOptions& o) {
  const std::string text = read_text_file(o.model_path);
  const std::string kind = model_kind_of(text);
  const CsvTable table = read_csv(o.data.data_path);
  const PredictType type = predict_type_from_string(o.type);
  std::vector<Eigen::MatrixXd> mats;
  if (kind == "bart") {
    const BartModel model = bart_model_from_json(text);
    const CovariateMatrix x = schema_covariates(table, model.preprocessing);
    BartPredictInput in;
    in.rfx = predict_rfx_input(table, o.data, model);
    if (!o.data.basis_cols.empty()) in.leaf_basis = basis_matrix(table, o.data.basis_cols);
    for (const auto& t : o.terms) mats.push_back(bart_predict(model, x, bart_term_from_string(t), type, in));
  } else {
    const BcfModel model = bcf_model_from_json(text);
    const CovariateMatrix x = schema_covariates(table, model.preprocessing);
    BcfPredictInput in;
    in.rfx = predict_rfx_input(table, o.data, model);
    if (!o.data.treatment.empty()) in.z = numeric_column(table, table.require_column(o.data.treatment));
    if (!o.data.propensity.empty()) in.propensity = numeric_column(table, table.require_column(o.data.propensity));
    for (const auto& t : o.terms) mats.push_back(bcf_predict(model, x, bcf_term_from_string(t), type, in));
  }
  write_text_file(o.out_path, predictions_csv(o.terms, mats, type == PredictType::kPosterior));
}

// --- resume -----------------------------------------------------------------

struct ResumeOptions {
  DataOptions data;
  ModelOptions model;
  std::string model_path;
  int warmstart_index = -1;  // default: last retained draw
  bool append = false;
  std::string out_path;
  std::string trace_path;
};

inline void run_resume(const ResumeOptions& o) {
  const std::string text = read_text_file(o.model_path);
  const std::string kind = model_kind_of(text);
  const CsvTable table = read_csv(o.data.data_path);
  const auto y = numeric_column(table, table.require_column(o.data.outcome));
  const auto rfx = fit_rfx_input(table, o.data);
  std::string model_json, traces;
  if (kind == "bart") {
    const BartModel prev = bart_model_from_json(text);
    const CovariateMatrix x = schema_covariates(table, prev.preprocessing);
    const int idx = o.warmstart_index < 0 ? prev.num_samples() - 1 : o.warmstart_index;
    BartParams params = prev.params;
    params.general.random_seed.reset();
    params.general.keep_gfr.reset();
    params.general.num_gfr = 0;
    params = o.model.bart_params(params);
    BartFitInput in;
    in.rfx = rfx;
    if (!o.data.basis_cols.empty()) in.leaf_basis = basis_matrix(table, o.data.basis_cols);
    in.warm_start = warm_start_from(prev, idx, x);
    BartModel next = bart_fit(x, y, params, in);
    traces = trace_csv(std::vector<BartModel>{next});
    if (o.append) {
      BartModel merged = prev;
      append_samples(merged, next);
      merged.params = next.params;
      next = std::move(merged);
    }
    model_json = bart_model_to_json(next);
  } else {
    const BcfModel prev = bcf_model_from_json(text);
    const CovariateMatrix x = schema_covariates(table, prev.preprocessing);
    require(!o.data.treatment.empty(), ErrorCode::kInvalidArgument, "resuming a BCF model needs --treatment");
    const auto z = numeric_column(table, table.require_column(o.data.treatment));
    const int idx = o.warmstart_index < 0 ? prev.num_samples() - 1 : o.warmstart_index;
    BcfParams params = prev.params;
    params.general.random_seed.reset();
    params.general.keep_gfr.reset();
    params.general.num_gfr = 0;
    params = o.model.bcf_params(params);
    BcfFitInput in;
    in.rfx = rfx;
    if (!o.data.propensity.empty()) in.propensity = numeric_column(table, table.require_column(o.data.propensity));
    in.warm_start = warm_start_from(prev, idx, x);
    BcfModel next = bcf_fit(x, z, y, params, in);
    traces = trace_csv(std::vector<BcfModel>{next});
    if (o.append) {
      BcfModel merged = prev;
      append_samples(merged, next);
      merged.params = next.params;
      next = std::move(merged);
    }
    model_json = bcf_model_to_json(next);
  }
  write_text_file(o.out_path, model_json);
  if (!o.trace_path.empty()) write_text_file(o.trace_path, traces);
}

// --- simulate -----------------------------------------------------------------

struct SimulateOptions {
  std::string dgp = "friedman";
  int n = 500;
  int p = 10;
  double snr = 3.0;
  double nu = 2.0;
  double sigma2 = 9.0;
  double gamma = 5.0;
  int groups = 30;
  double group_sd = 2.0;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

inline SimulatedData simulate(const SimulateOptions& o) {
  const std::uint64_t seed = resolve_seed(o.seed);
  if (o.dgp == "friedman") return dgp_friedman(o.n, o.p, o.snr, seed);
  if (o.dgp == "causal_friedman") return dgp_causal_friedman(o.n, o.p, seed);
  if (o.dgp == "robust") return dgp_robust(o.n, o.p, o.nu, o.sigma2, seed);
  if (o.dgp == "linear_term") return dgp_linear_term(o.n, o.p, o.gamma, seed, o.snr);
  if (o.dgp == "heteroskedastic") return dgp_heteroskedastic(o.n, o.p, seed);
  if (o.dgp == "probit") return dgp_probit(o.n, o.p, seed);
  if (o.dgp == "random_intercepts") {
    require(o.groups >= 1 && o.n % o.groups == 0, ErrorCode::kInvalidArgument, "--n must be a multiple of --groups");
    return dgp_random_intercepts(o.groups, o.n / o.groups, o.p, o.group_sd, seed);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown dgp '" + o.dgp + "'");
}

inline std::string simulated_csv(const SimulatedData& d) {
  const int p = static_cast<int>(d.x.cols());
  std::vector<std::string> header = default_column_names(p);
  std::vector<const std::vector<double>*> extra;
  auto add = [&](const char* name, const std::vector<double>* v) {
    header.emplace_back(name);
    extra.push_back(v);
  };
  add("y", &d.y);
  if (d.z) add("z", &*d.z);
  if (d.w) add("W", &*d.w);
  add(d.tau ? "mu_true" : "f_true", &d.f);
  if (d.tau) add("tau_true", &*d.tau);
  if (d.propensity) add("pi_true", &*d.propensity);
  if (d.noise_sd) add("noise_sd", &*d.noise_sd);
  if (d.group) header.emplace_back("group");
  CsvWriter w(header);
  for (int i = 0; i < d.num_rows(); ++i) {
    std::vector<std::string> cells;
    for (int j = 0; j < p; ++j) cells.push_back(fmt(d.x(i, j)));
    for (const auto* v : extra) cells.push_back(fmt((*v)[i]));
    if (d.group) cells.push_back("g" + std::to_string((*d.group)[i]));
    w.row(cells);
  }
  return w.str();
}

// --- demo ---------------------------------------------------------------------

struct DemoOptions {
  std::string recipe;
  int n = 500;
  int p = 10;
  RecipeOptions recipe_options;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline void run_demo(const DemoOptions& o) {
  RecipeOptions ro = o.recipe_options;
  ro.seed = resolve_seed(o.seed);
  std::string traces;
  if (o.recipe == "additive-linear") {
    const auto d = dgp_linear_term(o.n, o.p, 5.0, ro.seed);
    const CovariateMatrix x = CovariateMatrix::numeric(d.x, default_column_names(o.p));
    const auto r = recipe_additive_linear(x, d.y, *d.w, ro);
    CsvWriter w({"sample", "gamma", "sigma2"});
    for (std::size_t s = 0; s < r.gamma.size(); ++s) w.row({std::to_string(s), fmt(r.gamma[s]), fmt(r.sigma2[s])});
    traces = w.str();
    double g = 0.0;
    for (double v : r.gamma) g += v;
    std::cout << "gamma posterior mean " << g / static_cast<double>(r.gamma.size()) << " (truth 5)\n"
              << "forest rmse vs truth " << rmse(r.forest_mean(ForestDataset(x)), d.f) << "\n";
  } else if (o.recipe == "robust-errors") {
    const auto d = dgp_robust(o.n, o.p, ro.nu, 9.0, ro.seed);
    const CovariateMatrix x = CovariateMatrix::numeric(d.x, default_column_names(o.p));
    const auto r = recipe_robust_errors(x, d.y, ro);
    CsvWriter w({"sample", "a2", "tau2", "sigma2"});
    for (std::size_t s = 0; s < r.a2.size(); ++s) {
      w.row({std::to_string(s), fmt(r.a2[s]), fmt(r.tau2[s]), fmt(r.sigma2[s])});
    }
    traces = w.str();
    std::cout << "forest rmse vs truth " << rmse(r.forest_mean(ForestDataset(x)), d.f) << "\n";
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown recipe '" + o.recipe + "'");
  }
  if (!o.out_path.empty()) write_text_file(o.out_path, traces);
}

}  // namespace cli_detail

inline int cli_main(int argc, char** argv) {
  using namespace cli_detail;
  CLI::App app{"Bayesian tree ensembles (BART / BCF)", "stochforest"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file; options go under [simulate], [fit], ... sections");

  SimulateOptions sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "write a simulated dataset");
  simulate_cmd
      ->add_option("--dgp", sim.dgp)
      ->check(CLI::IsMember(
          {"friedman", "causal_friedman", "robust", "linear_term", "heteroskedastic", "probit", "random_intercepts"}))
      ->capture_default_str();
  simulate_cmd->add_option("--n", sim.n)->capture_default_str();
  simulate_cmd->add_option("--p", sim.p)->capture_default_str();
  simulate_cmd->add_option("--snr", sim.snr)->capture_default_str();
  simulate_cmd->add_option("--nu", sim.nu)->capture_default_str();
  simulate_cmd->add_option("--sigma2", sim.sigma2)->capture_default_str();
  simulate_cmd->add_option("--gamma", sim.gamma)->capture_default_str();
  simulate_cmd->add_option("--groups", sim.groups)->capture_default_str();
  simulate_cmd->add_option("--group-sd", sim.group_sd)->capture_default_str();
  simulate_cmd->add_option("--seed", sim.seed);
  simulate_cmd->add_option("--out", sim.out_path)->required();

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit a BART or BCF model");
  fit.data.add_to(fit_cmd, true);
  fit.model.add_to(fit_cmd, true);
  fit_cmd->add_option("--chains", fit.chains, "independent chains")->capture_default_str();
  fit_cmd->add_option("--out", fit.out_path, "model JSON")->required();
  fit_cmd->add_option("--trace", fit.trace_path, "parameter trace CSV");

  PredictOptions pred;
  auto* predict_cmd = app.add_subcommand("predict", "predict from a saved model");
  pred.data.add_to(predict_cmd, false);
  predict_cmd->add_option("--model", pred.model_path)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--terms", pred.terms)->delimiter(',')->capture_default_str();
  predict_cmd->add_option("--type", pred.type)->check(CLI::IsMember({"mean", "posterior"}))->capture_default_str();
  predict_cmd->add_option("--out", pred.out_path)->required();

  ResumeOptions res;
  auto* resume_cmd = app.add_subcommand("resume", "continue sampling from a saved draw");
  res.data.add_to(resume_cmd, true);
  res.model.add_to(resume_cmd, false);
  resume_cmd->add_option("--model", res.model_path)->required()->check(CLI::ExistingFile);
  resume_cmd->add_option("--warmstart-index", res.warmstart_index, "0-based draw (default: last)");
  resume_cmd->add_flag("--append", res.append, "keep the original draws in the output");
  resume_cmd->add_option("--out", res.out_path)->required();
  resume_cmd->add_option("--trace", res.trace_path);

  DemoOptions demo;
  auto* demo_cmd = app.add_subcommand("demo", "custom-sampler recipes");
  demo_cmd->add_option("recipe", demo.recipe)->required()->check(CLI::IsMember({"additive-linear", "robust-errors"}));
  demo_cmd->add_option("--n", demo.n)->capture_default_str();
  demo_cmd->add_option("--p", demo.p)->capture_default_str();
  demo_cmd->add_option("--num-trees", demo.recipe_options.num_trees)->capture_default_str();
  demo_cmd->add_option("--num-burnin", demo.recipe_options.num_burnin)->capture_default_str();
  demo_cmd->add_option("--num-mcmc", demo.recipe_options.num_mcmc)->capture_default_str();
  demo_cmd->add_option("--gamma-tau", demo.recipe_options.gamma_tau)->capture_default_str();
  demo_cmd->add_option("--nu", demo.recipe_options.nu)->capture_default_str();
  demo_cmd->add_option("--seed", demo.seed);
  demo_cmd->add_option("--out", demo.out_path, "trace CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate_cmd) {
      write_text_file(sim.out_path, simulated_csv(simulate(sim)));
    } else if (*fit_cmd) {
      run_fit(fit);
    } else if (*predict_cmd) {
      run_predict(pred);
    } else if (*resume_cmd) {
      run_resume(res);
    } else if (*demo_cmd) {
      run_demo(demo);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_validation() ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace stochforest

#endif  // STOCHFOREST_CLI_HPP_
