#ifndef STOCHFOREST_SERIALIZATION_HPP_
#define STOCHFOREST_SERIALIZATION_HPP_

// JSON model artifacts. Layout is documented in docs/model_schema.md.

#include <Eigen/Dense>

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stochforest/bart.hpp"
#include "stochforest/bcf.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/random_effects.hpp"
#include "stochforest/tree.hpp"

namespace stochforest {

using Json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1.0";

namespace json_detail {

inline const Json& at(const Json& j, const std::string& key) {
  require(j.is_object() && j.contains(key), ErrorCode::kSchema, "missing JSON field '" + key + "'");
  return j.at(key);
}

template <typename T>
T get(const Json& j, const std::string& key) {
  try {
    return at(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, "bad JSON field '" + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key);
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  require(j.is_array() && static_cast<Eigen::Index>(j.size()) == rows, ErrorCode::kSchema,
          std::string(what) + ": wrong row count");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols, ErrorCode::kSchema,
            std::string(what) + ": wrong column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

inline Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index size, const char* what) {
  require(j.is_array() && static_cast<Eigen::Index>(j.size()) == size, ErrorCode::kSchema,
          std::string(what) + ": wrong length");
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = j[i].get<double>();
  return v;
}

inline SplitKind split_kind_from_string(const std::string& s, int node_id) {
  if (s == "numeric_le") return SplitKind::kNumericLe;
  if (s == "ordered_le") return SplitKind::kOrderedLe;
  if (s == "category_subset") return SplitKind::kCategorySubset;
  throw Error(ErrorCode::kSchema, "node " + std::to_string(node_id) + " has unknown split kind '" + s + "'");
}

}  // namespace json_detail

// ---------------------------------------------------------------------------
// Trees and forests
// ---------------------------------------------------------------------------

inline Json tree_to_json(const Tree& tree) {
  Json nodes = Json::array();
  for (int id = 0; id < tree.node_capacity(); ++id) {
    if (!tree.is_valid_node(id)) continue;
    const auto& nd = tree.node(id);
    Json rec;
    rec["id"] = id;
    rec["parent"] = nd.parent;
    rec["left"] = nd.left;
    rec["right"] = nd.right;
    if (nd.is_leaf()) {
      rec["feature"] = -1;
      rec["kind"] = "leaf";
      rec["leaf_values"] = nd.leaf_values;
    } else {
      rec["feature"] = nd.rule.feature;
      rec["kind"] = to_string(nd.rule.kind);
      if (nd.rule.kind == SplitKind::kCategorySubset) {
        rec["level_set"] = nd.rule.level_set;
      } else {
        rec["threshold"] = nd.rule.threshold;
      }
      rec["leaf_values"] = Json::array();
    }
    nodes.push_back(std::move(rec));
  }
  return Json{{"nodes", std::move(nodes)}};
}

inline Tree tree_from_json(const Json& j, int leaf_dimension) {
  using namespace json_detail;
  const Json& nodes = at(j, "nodes");
  require(nodes.is_array() && !nodes.empty(), ErrorCode::kSchema, "tree has no nodes");
  int max_id = -1;
  for (const auto& rec : nodes) max_id = std::max(max_id, get<int>(rec, "id"));
  require(max_id < 4 * static_cast<int>(nodes.size()) + 16, ErrorCode::kStructure, "node ids are implausibly sparse");
  std::vector<TreeNode> table(max_id + 1);
  for (auto& nd : table) nd.deleted = true;
  for (const auto& rec : nodes) {
    const int id = get<int>(rec, "id");
    require(id >= 0, ErrorCode::kStructure, "negative node id " + std::to_string(id));
    require(table[id].deleted, ErrorCode::kStructure, "duplicate node id " + std::to_string(id));
    TreeNode nd;
    nd.parent = get<int>(rec, "parent");
    nd.left = get<int>(rec, "left");
    nd.right = get<int>(rec, "right");
    const auto kind = get<std::string>(rec, "kind");
    if (kind == "leaf") {
      require(nd.left < 0 && nd.right < 0, ErrorCode::kStructure,
              "leaf node " + std::to_string(id) + " lists children");
      nd.leaf_values = get<std::vector<double>>(rec, "leaf_values");
    } else {
      nd.rule.feature = get<int>(rec, "feature");
      nd.rule.kind = split_kind_from_string(kind, id);
      if (nd.rule.kind == SplitKind::kCategorySubset) {
        nd.rule = SplitRule::category_subset(nd.rule.feature, get<std::vector<int>>(rec, "level_set"));
      } else {
        nd.rule.threshold = get<double>(rec, "threshold");
      }
      require(nd.left >= 0 && nd.right >= 0, ErrorCode::kStructure,
              "internal node " + std::to_string(id) + " is missing a child");
      require(nd.left <= max_id && nd.right <= max_id, ErrorCode::kStructure,
              "node " + std::to_string(id) + " has missing child " + std::to_string(std::max(nd.left, nd.right)));
    }
    table[id] = std::move(nd);
  }
  return Tree::from_nodes(leaf_dimension, std::move(table));
}

inline Json forest_samples_to_json(const ForestSamples& fs) {
  Json samples = Json::array();
  for (const auto& forest : fs.forests()) {
    Json trees = Json::array();
    for (const auto& t : forest.trees()) trees.push_back(tree_to_json(t));
    samples.push_back(Json{{"trees", std::move(trees)}});
  }
  return Json{{"num_trees", fs.num_trees()},
              {"leaf_dimension", fs.leaf_dimension()},
              {"leaf_constant", fs.is_leaf_constant()},
              {"exponentiated", fs.is_exponentiated()},
              {"samples", std::move(samples)}};
}

inline ForestSamples forest_samples_from_json(const Json& j) {
  using namespace json_detail;
  const int m = get<int>(j, "num_trees");
  const int dim = get<int>(j, "leaf_dimension");
  require(m >= 1 && dim >= 1, ErrorCode::kSchema, "forest container needs num_trees >= 1 and leaf_dimension >= 1");
  ForestSamples fs(m, dim, get<bool>(j, "leaf_constant"), get<bool>(j, "exponentiated"));
  for (const auto& sample : at(j, "samples")) {
    const Json& trees = at(sample, "trees");
    require(trees.is_array() && static_cast<int>(trees.size()) == m, ErrorCode::kSchema,
            "forest sample has the wrong number of trees");
    Forest forest(m, dim, fs.is_leaf_constant(), fs.is_exponentiated());
    for (int t = 0; t < m; ++t) forest.tree(t) = tree_from_json(trees[t], dim);
    fs.add(forest);
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Random effects, preprocessing, parameters
// ---------------------------------------------------------------------------

inline Json rfx_to_json(const RfxSamples& r) {
  Json samples = Json::array();
  for (int s = 0; s < r.num_samples(); ++s) {
    const auto st = r.state(s);
    samples.push_back(Json{{"beta", json_detail::matrix_to_json(st.beta)},
                           {"xi", json_detail::matrix_to_json(st.xi)},
                           {"alpha", json_detail::vector_to_json(st.alpha)},
                           {"variance_components", json_detail::vector_to_json(st.variance_components)}});
  }
  return Json{{"model_spec", to_string(r.model_spec())},
              {"dims", {r.num_components(), r.num_groups(), r.num_samples()}},
              {"group_labels", r.group_labels()},
              {"samples", std::move(samples)}};
}

inline RfxSamples rfx_from_json(const Json& j) {
  using namespace json_detail;
  const auto dims = get<std::vector<int>>(j, "dims");
  require(dims.size() == 3 && dims[0] >= 1 && dims[1] >= 1, ErrorCode::kSchema, "rfx dims must be [k, L, m]");
  const int k = dims[0], num_groups = dims[1];
  RfxSamples r(k, num_groups, rfx_model_spec_from_string(get<std::string>(j, "model_spec")),
               get<std::vector<std::string>>(j, "group_labels"));
  const Json& samples = at(j, "samples");
  require(samples.is_array() && static_cast<int>(samples.size()) == dims[2], ErrorCode::kSchema,
          "rfx sample count differs from dims");
  for (const auto& s : samples) {
    RfxModelState st;
    st.beta = matrix_from_json(at(s, "beta"), k, num_groups, "rfx beta");
    st.xi = matrix_from_json(at(s, "xi"), k, num_groups, "rfx xi");
    st.alpha = vector_from_json(at(s, "alpha"), k, "rfx alpha");
    st.variance_components = vector_from_json(at(s, "variance_components"), k, "rfx variance_components");
    r.add(st);
  }
  return r;
}

inline Json preprocessing_to_json(const Preprocessing& p) {
  std::vector<int> codes;
  for (auto t : p.feature_types) codes.push_back(to_code(t));
  return Json{{"feature_types", codes},
              {"column_names", p.column_names},
              {"level_maps", p.level_maps},
              {"leaf_basis_dimension", p.leaf_basis_dimension}};
}

inline Preprocessing preprocessing_from_json(const Json& j) {
  using namespace json_detail;
  Preprocessing p;
  for (int c : get<std::vector<int>>(j, "feature_types")) p.feature_types.push_back(feature_type_from_code(c));
  p.column_names = get<std::vector<std::string>>(j, "column_names");
  p.level_maps = get<std::vector<std::vector<std::string>>>(j, "level_maps");
  p.leaf_basis_dimension = get<int>(j, "leaf_basis_dimension");
  require(p.column_names.size() == p.feature_types.size() && p.level_maps.size() == p.feature_types.size(),
          ErrorCode::kSchema, "preprocessing arrays differ in length");
  return p;
}

inline Json to_json(const ForestParams& p) {
  return Json{{"alpha", p.alpha},
              {"beta", p.beta},
              {"num_trees", p.num_trees},
              {"min_samples_leaf", p.min_samples_leaf},
              {"max_depth", p.max_depth},
              {"cutpoint_grid_size", p.cutpoint_grid_size},
              {"keep_vars", p.keep_vars},
              {"drop_vars", p.drop_vars},
              {"sample_sigma2_leaf", p.sample_sigma2_leaf},
              {"sigma2_leaf_init", p.sigma2_leaf_init},
              {"a_leaf", p.a_leaf},
              {"b_leaf", p.b_leaf}};
}

inline ForestParams forest_params_from_json(const Json& j, ForestParams d) {
  using json_detail::get_or;
  d.alpha = get_or(j, "alpha", d.alpha);
  d.beta = get_or(j, "beta", d.beta);
  d.num_trees = get_or(j, "num_trees", d.num_trees);
  d.min_samples_leaf = get_or(j, "min_samples_leaf", d.min_samples_leaf);
  d.max_depth = get_or(j, "max_depth", d.max_depth);
  d.cutpoint_grid_size = get_or(j, "cutpoint_grid_size", d.cutpoint_grid_size);
  d.keep_vars = get_or(j, "keep_vars", d.keep_vars);
  d.drop_vars = get_or(j, "drop_vars", d.drop_vars);
  d.sample_sigma2_leaf = get_or(j, "sample_sigma2_leaf", d.sample_sigma2_leaf);
  d.sigma2_leaf_init = get_or(j, "sigma2_leaf_init", d.sigma2_leaf_init);
  d.a_leaf = get_or(j, "a_leaf", d.a_leaf);
  d.b_leaf = get_or(j, "b_leaf", d.b_leaf);
  return d;
}

inline Json to_json(const GeneralParams& g) {
  Json j{{"num_gfr", g.num_gfr},
         {"num_burnin", g.num_burnin},
         {"num_mcmc", g.num_mcmc},
         {"sample_sigma2_global", g.sample_sigma2_global},
         {"probit_outcome_model", g.probit_outcome_model},
         {"sigma2_init", g.sigma2_init},
         {"a_global", g.a_global},
         {"b_global", g.b_global}};
  j["keep_gfr"] = g.keep_gfr ? Json(*g.keep_gfr) : Json(nullptr);
  j["random_seed"] = g.random_seed ? Json(*g.random_seed) : Json(nullptr);
  return j;
}

inline GeneralParams general_params_from_json(const Json& j) {
  using json_detail::get_or;
  GeneralParams g;
  g.num_gfr = get_or(j, "num_gfr", g.num_gfr);
  g.num_burnin = get_or(j, "num_burnin", g.num_burnin);
  g.num_mcmc = get_or(j, "num_mcmc", g.num_mcmc);
  g.sample_sigma2_global = get_or(j, "sample_sigma2_global", g.sample_sigma2_global);
  g.probit_outcome_model = get_or(j, "probit_outcome_model", g.probit_outcome_model);
  g.sigma2_init = get_or(j, "sigma2_init", g.sigma2_init);
  g.a_global = get_or(j, "a_global", g.a_global);
  g.b_global = get_or(j, "b_global", g.b_global);
  if (j.contains("keep_gfr") && !j.at("keep_gfr").is_null()) g.keep_gfr = j.at("keep_gfr").get<bool>();
  if (j.contains("random_seed") && !j.at("random_seed").is_null()) {
    g.random_seed = j.at("random_seed").get<std::uint64_t>();
  }
  return g;
}

inline Json to_json(const RfxParams& r) {
  return Json{{"model_spec", r.model_spec},
              {"alpha_mean", r.prior.alpha_mean},
              {"alpha_variance", r.prior.alpha_variance},
              {"a_variance", r.prior.a_variance},
              {"b_variance", r.prior.b_variance}};
}

inline RfxParams rfx_params_from_json(const Json& j) {
  using json_detail::get_or;
  RfxParams r;
  r.model_spec = get_or(j, "model_spec", r.model_spec);
  r.prior.alpha_mean = get_or(j, "alpha_mean", r.prior.alpha_mean);
  r.prior.alpha_variance = get_or(j, "alpha_variance", r.prior.alpha_variance);
  r.prior.a_variance = get_or(j, "a_variance", r.prior.a_variance);
  r.prior.b_variance = get_or(j, "b_variance", r.prior.b_variance);
  return r;
}

inline Json to_json(const BartParams& p) {
  return Json{{"general", to_json(p.general)},
              {"mean_forest", to_json(p.mean_forest)},
              {"variance_forest", to_json(p.variance_forest)},
              {"random_effects", to_json(p.random_effects)}};
}

inline BartParams bart_params_from_json(const Json& j) {
  BartParams p;
  if (j.contains("general")) p.general = general_params_from_json(j.at("general"));
  if (j.contains("mean_forest")) p.mean_forest = forest_params_from_json(j.at("mean_forest"), p.mean_forest);
  if (j.contains("variance_forest")) {
    p.variance_forest = forest_params_from_json(j.at("variance_forest"), p.variance_forest);
  }
  if (j.contains("random_effects")) p.random_effects = rfx_params_from_json(j.at("random_effects"));
  return p;
}

inline Json to_json(const BcfParams& p) {
  return Json{{"general", to_json(p.general)},
              {"propensity_covariate", to_string(p.propensity_covariate)},
              {"prognostic_forest", to_json(p.prognostic_forest)},
              {"treatment_effect_forest", to_json(p.treatment_forest)},
              {"variance_forest", to_json(p.variance_forest)},
              {"random_effects", to_json(p.random_effects)},
              {"propensity_model", to_json(p.propensity_model)}};
}

inline BcfParams bcf_params_from_json(const Json& j) {
  BcfParams p;
  if (j.contains("general")) p.general = general_params_from_json(j.at("general"));
  if (j.contains("propensity_covariate")) {
    p.propensity_covariate = propensity_covariate_from_string(j.at("propensity_covariate").get<std::string>());
  }
  if (j.contains("prognostic_forest")) {
    p.prognostic_forest = forest_params_from_json(j.at("prognostic_forest"), p.prognostic_forest);
  }
  if (j.contains("treatment_effect_forest")) {
    p.treatment_forest = forest_params_from_json(j.at("treatment_effect_forest"), p.treatment_forest);
  }
  if (j.contains("variance_forest")) {
    p.variance_forest = forest_params_from_json(j.at("variance_forest"), p.variance_forest);
  }
  if (j.contains("random_effects")) p.random_effects = rfx_params_from_json(j.at("random_effects"));
  if (j.contains("propensity_model")) p.propensity_model = bart_params_from_json(j.at("propensity_model"));
  return p;
}

// ---------------------------------------------------------------------------
// Model artifacts
// ---------------------------------------------------------------------------

namespace json_detail {

inline void check_header(const Json& j, const std::string& kind) {
  require(j.is_object(), ErrorCode::kSchema, "model artifact must be a JSON object");
  const auto version = get<std::string>(j, "schema_version");
  require(version == kSchemaVersion, ErrorCode::kSchema,
          "unsupported schema_version '" + version + "' (this build reads " + kSchemaVersion + ")");
  const auto found = get<std::string>(j, "model_kind");
  require(found == kind, ErrorCode::kSchema, "expected a " + kind + " model, found '" + found + "'");
}

inline Json standardization_to_json(const StandardizationInfo& s) {
  return Json{{"center", s.center}, {"scale", s.scale}};
}

inline StandardizationInfo standardization_from_json(const Json& j) {
  StandardizationInfo s{get<double>(j, "center"), get<double>(j, "scale")};
  require(s.scale > 0.0, ErrorCode::kSchema, "standardization scale must be positive");
  return s;
}

inline void check_trace(const std::vector<double>& trace, int n, const std::string& name) {
  require(static_cast<int>(trace.size()) == n, ErrorCode::kSchema,
          "trace '" + name + "' has " + std::to_string(trace.size()) + " entries, expected " + std::to_string(n));
}

inline Json parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace json_detail

inline Json bart_model_to_json_value(const BartModel& m) {
  Json forests{{"mean", forest_samples_to_json(m.mean_forests)}};
  if (m.variance_forests) forests["variance"] = forest_samples_to_json(*m.variance_forests);
  Json params = to_json(m.params);
  params["num_gfr_retained"] = m.num_gfr_retained;
  return Json{{"schema_version", kSchemaVersion},
              {"model_kind", "bart"},
              {"forests", std::move(forests)},
              {"traces", {{"sigma2_global", m.sigma2_global}, {"sigma2_leaf", m.sigma2_leaf}}},
              {"rfx", m.rfx ? rfx_to_json(*m.rfx) : Json(nullptr)},
              {"standardization", json_detail::standardization_to_json(m.standardization)},
              {"preprocessing", preprocessing_to_json(m.preprocessing)},
              {"params", std::move(params)}};
}

inline BartModel bart_model_from_json_value(const Json& j) {
  using namespace json_detail;
  check_header(j, "bart");
  BartModel m;
  const Json& params = at(j, "params");
  m.params = bart_params_from_json(params);
  m.num_gfr_retained = get_or(params, "num_gfr_retained", 0);
  m.preprocessing = preprocessing_from_json(at(j, "preprocessing"));
  m.standardization = standardization_from_json(at(j, "standardization"));
  m.mean_leaf_model = detail::mean_leaf_type(m.preprocessing.leaf_basis_dimension);
  const Json& forests = at(j, "forests");
  m.mean_forests = forest_samples_from_json(at(forests, "mean"));
  if (forests.contains("variance")) m.variance_forests = forest_samples_from_json(forests.at("variance"));
  const Json& traces = at(j, "traces");
  m.sigma2_global = get<std::vector<double>>(traces, "sigma2_global");
  m.sigma2_leaf = get<std::vector<double>>(traces, "sigma2_leaf");
  if (!at(j, "rfx").is_null()) m.rfx = rfx_from_json(j.at("rfx"));
  const int ns = m.num_samples();
  check_trace(m.sigma2_global, ns, "sigma2_global");
  check_trace(m.sigma2_leaf, ns, "sigma2_leaf");
  if (m.variance_forests) {
    require(m.variance_forests->num_samples() == ns, ErrorCode::kSchema, "variance forest sample count mismatch");
  }
  if (m.rfx) require(m.rfx->num_samples() == ns, ErrorCode::kSchema, "rfx sample count mismatch");
  return m;
}

inline std::string bart_model_to_json(const BartModel& m) { return bart_model_to_json_value(m).dump(); }

inline BartModel bart_model_from_json(const std::string& text) {
  return bart_model_from_json_value(json_detail::parse(text));
}

inline Json bcf_model_to_json_value(const BcfModel& m) {
  Json forests{{"mu", forest_samples_to_json(m.mu_forests)}, {"tau", forest_samples_to_json(m.tau_forests)}};
  if (m.variance_forests) forests["variance"] = forest_samples_to_json(*m.variance_forests);
  if (m.propensity_model) forests["propensity"] = forest_samples_to_json(m.propensity_model->mean_forests);
  Json params = to_json(m.params);
  params["num_gfr_retained"] = m.num_gfr_retained;
  return Json{{"schema_version", kSchemaVersion},
              {"model_kind", "bcf"},
              {"forests", std::move(forests)},
              {"traces",
               {{"sigma2_global", m.sigma2_global},
                {"sigma2_leaf_mu", m.sigma2_leaf_mu},
                {"sigma2_leaf_tau", m.sigma2_leaf_tau}}},
              {"rfx", m.rfx ? rfx_to_json(*m.rfx) : Json(nullptr)},
              {"standardization", json_detail::standardization_to_json(m.standardization)},
              {"preprocessing", preprocessing_to_json(m.preprocessing)},
              {"params", std::move(params)}};
}

inline BcfModel bcf_model_from_json_value(const Json& j) {
  using namespace json_detail;
  check_header(j, "bcf");
  BcfModel m;
  const Json& params = at(j, "params");
  m.params = bcf_params_from_json(params);
  m.num_gfr_retained = get_or(params, "num_gfr_retained", 0);
  m.uses_propensity = m.params.propensity_covariate == PropensityCovariate::kMu;
  m.preprocessing = preprocessing_from_json(at(j, "preprocessing"));
  m.standardization = standardization_from_json(at(j, "standardization"));
  const Json& forests = at(j, "forests");
  m.mu_forests = forest_samples_from_json(at(forests, "mu"));
  m.tau_forests = forest_samples_from_json(at(forests, "tau"));
  if (forests.contains("variance")) m.variance_forests = forest_samples_from_json(forests.at("variance"));
  if (forests.contains("propensity")) {
    // The internal propensity model is a probit BART on the same covariates.
    BartModel pm;
    pm.params = m.params.propensity_model;
    pm.params.general.probit_outcome_model = true;
    pm.preprocessing = m.preprocessing;
    pm.standardization = StandardizationInfo{0.0, 1.0};
    pm.mean_forests = forest_samples_from_json(forests.at("propensity"));
    pm.sigma2_global.assign(pm.mean_forests.num_samples(), 1.0);
    m.propensity_model = std::make_shared<const BartModel>(std::move(pm));
  }
  const Json& traces = at(j, "traces");
  m.sigma2_global = get<std::vector<double>>(traces, "sigma2_global");
  m.sigma2_leaf_mu = get<std::vector<double>>(traces, "sigma2_leaf_mu");
  m.sigma2_leaf_tau = get<std::vector<double>>(traces, "sigma2_leaf_tau");
  if (!at(j, "rfx").is_null()) m.rfx = rfx_from_json(j.at("rfx"));
  const int ns = m.num_samples();
  require(m.tau_forests.num_samples() == ns, ErrorCode::kSchema, "tau forest sample count mismatch");
  check_trace(m.sigma2_global, ns, "sigma2_global");
  check_trace(m.sigma2_leaf_mu, ns, "sigma2_leaf_mu");
  check_trace(m.sigma2_leaf_tau, ns, "sigma2_leaf_tau");
  if (m.variance_forests) {
    require(m.variance_forests->num_samples() == ns, ErrorCode::kSchema, "variance forest sample count mismatch");
  }
  if (m.rfx) require(m.rfx->num_samples() == ns, ErrorCode::kSchema, "rfx sample count mismatch");
  return m;
}

inline std::string bcf_model_to_json(const BcfModel& m) { return bcf_model_to_json_value(m).dump(); }

inline BcfModel bcf_model_from_json(const std::string& text) {
  return bcf_model_from_json_value(json_detail::parse(text));
}

/// "bart" or "bcf", after checking the schema version.
inline std::string model_kind_of(const std::string& text) {
  const Json j = json_detail::parse(text);
  const auto version = json_detail::get<std::string>(j, "schema_version");
  require(version == kSchemaVersion, ErrorCode::kSchema, "unsupported schema_version '" + version + "'");
  return json_detail::get<std::string>(j, "model_kind");
}

/// Validated warm-start handle for draw `sample_index` (0-based) of `model`.
inline BartWarmStart warm_start_from(const BartModel& model, int sample_index, const CovariateMatrix& x) {
  require(sample_index >= 0 && sample_index < model.num_samples(), ErrorCode::kRange,
          "warm-start index " + std::to_string(sample_index) + " out of range [0, " +
              std::to_string(model.num_samples()) + ")");
  model.preprocessing.check(x);
  return BartWarmStart{&model, sample_index};
}

inline BcfWarmStart warm_start_from(const BcfModel& model, int sample_index, const CovariateMatrix& x) {
  require(sample_index >= 0 && sample_index < model.num_samples(), ErrorCode::kRange,
          "warm-start index " + std::to_string(sample_index) + " out of range [0, " +
              std::to_string(model.num_samples()) + ")");
  model.preprocessing.check(x);
  return BcfWarmStart{&model, sample_index};
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing '" + path + "'");
}

}  // namespace stochforest

#endif  // STOCHFOREST_SERIALIZATION_HPP_
