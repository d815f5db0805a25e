#ifndef STOCHFOREST_FOREST_SAMPLER_HPP_
#define STOCHFOREST_FOREST_SAMPLER_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/leaf_models.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/tree.hpp"

namespace stochforest {

/// Everything the sampler needs to know about one forest term.
struct ForestModelConfig {
  std::vector<FeatureType> feature_types;
  std::vector<double> variable_weights;  // split-variable selection probabilities
  int leaf_dimension = 1;
  LeafModelType leaf_model_type = LeafModelType::kConstantGaussian;
  int num_trees = 200;
  int num_features = 0;
  int num_observations = 0;
  double alpha = 0.95;
  double beta = 2.0;
  int min_samples_leaf = 5;
  int max_depth = -1;  // negative means unlimited
  int cutpoint_grid_size = 100;
  LeafHyperparams leaf;

  void update_leaf_scale(double tau) {
    require(tau > 0.0, ErrorCode::kInvalidArgument, "leaf scale must be positive");
    leaf.tau = tau;
  }

  void validate() const {
    require(num_trees >= 1, ErrorCode::kInvalidArgument, "num_trees must be >= 1");
    require(num_features >= 1 && static_cast<int>(feature_types.size()) == num_features,
            ErrorCode::kDimension, "feature_types length must equal num_features");
    require(static_cast<int>(variable_weights.size()) == num_features, ErrorCode::kDimension,
            "variable_weights length must equal num_features");
    double total = 0.0;
    for (double w : variable_weights) {
      require(w >= 0.0 && std::isfinite(w), ErrorCode::kInvalidArgument, "variable weights must be >= 0");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-10, ErrorCode::kInvalidArgument,
            "variable weights must sum to 1 (got " + std::to_string(total) + ")");
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument, "alpha must be in (0, 1]");
    require(beta > 0.0, ErrorCode::kInvalidArgument, "beta must be positive");
    require(min_samples_leaf >= 1, ErrorCode::kInvalidArgument, "min_samples_leaf must be >= 1");
    require(cutpoint_grid_size >= 1, ErrorCode::kInvalidArgument, "cutpoint_grid_size must be >= 1");
    require(leaf_dimension >= 1, ErrorCode::kInvalidArgument, "leaf_dimension must be >= 1");
    switch (leaf_model_type) {
      case LeafModelType::kConstantGaussian:
      case LeafModelType::kUnivariateRegression:
        require(leaf_dimension == 1, ErrorCode::kInvalidArgument,
                "leaf model types 0 and 1 have leaf dimension 1");
        require(leaf.tau > 0.0, ErrorCode::kInvalidArgument, "leaf prior variance must be positive");
        break;
      case LeafModelType::kMultivariateRegression:
        require(leaf.sigma0.rows() == leaf_dimension && leaf.sigma0.cols() == leaf_dimension,
                ErrorCode::kDimension, "sigma0 must be leaf_dimension x leaf_dimension");
        break;
      case LeafModelType::kLogLinearVariance:
        require(leaf_dimension == 1, ErrorCode::kInvalidArgument, "variance leaves are scalar");
        require(leaf.a_leaf > 0.0 && leaf.b_leaf > 0.0, ErrorCode::kInvalidArgument,
                "variance leaf prior must be positive");
        break;
    }
  }

  void check_dataset(const ForestDataset& data) const {
    validate();
    require(data.num_covariates() == num_features, ErrorCode::kDimension,
            "dataset has " + std::to_string(data.num_covariates()) + " covariates, config expects " +
                std::to_string(num_features));
    require(data.num_observations() == num_observations, ErrorCode::kDimension,
            "dataset has " + std::to_string(data.num_observations()) + " rows, config expects " +
                std::to_string(num_observations));
    for (int j = 0; j < num_features; ++j) {
      require(data.covariates().feature_type(j) == feature_types[j], ErrorCode::kSchema,
              "feature type of column " + std::to_string(j) + " disagrees with the config");
    }
    if (uses_basis(leaf_model_type)) {
      require(data.has_basis() && data.basis_dimension() == leaf_dimension, ErrorCode::kDimension,
              "regression leaves need a basis with leaf_dimension columns");
    }
  }
};

/// Config with uniform variable weights over the dataset's columns.
inline ForestModelConfig make_forest_model_config(const ForestDataset& data, LeafModelType type,
                                                  int num_trees, int leaf_dimension = 1) {
  ForestModelConfig c;
  c.feature_types = data.covariates().feature_types();
  c.num_features = data.num_covariates();
  c.num_observations = data.num_observations();
  c.variable_weights.assign(c.num_features, 1.0 / c.num_features);
  c.leaf_model_type = type;
  c.num_trees = num_trees;
  c.leaf_dimension = leaf_dimension;
  if (type == LeafModelType::kMultivariateRegression) {
    c.leaf.sigma0 = Eigen::MatrixXd::Identity(leaf_dimension, leaf_dimension);
  }
  return c;
}

struct GlobalModelConfig {
  double global_error_variance = 1.0;
  double a_global = 1.0;
  double b_global = 1.0;

  void update_global_error_variance(double sigma2) {
    require(sigma2 > 0.0 && std::isfinite(sigma2), ErrorCode::kInvalidArgument,
            "global error variance must be positive");
    global_error_variance = sigma2;
  }
};

// ---------------------------------------------------------------------------
// Cutpoints
// ---------------------------------------------------------------------------

/// Split positions k (left child = sorted[0..k)) for a node's sorted values.
/// Every boundary between distinct values is used when there are at most
/// `grid_size` of them; otherwise the boundaries nearest to evenly spaced
/// node-local quantiles.
inline std::vector<int> candidate_boundaries(std::span<const double> sorted, int grid_size) {
  std::vector<int> all;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k - 1] < sorted[k]) all.push_back(static_cast<int>(k));
  }
  if (static_cast<int>(all.size()) <= grid_size) return all;
  std::vector<int> picked;
  picked.reserve(grid_size);
  const double n = static_cast<double>(sorted.size());
  for (int q = 1; q <= grid_size; ++q) {
    const double target = q * n / (grid_size + 1);
    auto it = std::lower_bound(all.begin(), all.end(), target,
                               [](int k, double t) { return static_cast<double>(k) < t; });
    if (it == all.end()) it = std::prev(all.end());
    if (picked.empty() || picked.back() != *it) picked.push_back(*it);
  }
  return picked;
}

inline double boundary_threshold(std::span<const double> sorted, int k, FeatureType type) {
  return type == FeatureType::kNumeric ? 0.5 * (sorted[k - 1] + sorted[k]) : sorted[k - 1];
}

inline SplitRule ordered_rule(int feature, FeatureType type, double threshold) {
  return type == FeatureType::kNumeric ? SplitRule::numeric_le(feature, threshold)
                                       : SplitRule::ordered_le(feature, threshold);
}

// ---------------------------------------------------------------------------
// Single-tree moves
// ---------------------------------------------------------------------------

/// Inputs shared by the structural moves for one tree update.
struct TreeMoveContext {
  const CovariateMatrix& x;
  const LeafObservationView& obs;
  const ForestModelConfig& config;
  double sigma2;

  double ml(const LeafSuffStats& s) const {
    return log_marginal(config.leaf_model_type, s, config.leaf, sigma2);
  }
  int basis_dim() const { return obs.basis ? static_cast<int>(obs.basis->cols()) : 1; }
  LeafSuffStats empty_stats() const { return LeafSuffStats(config.leaf_model_type, basis_dim()); }
};

struct MoveCounters {
  long grow_proposed = 0;
  long grow_accepted = 0;
  long prune_proposed = 0;
  long prune_accepted = 0;
};

/// Key used to order unordered-categorical levels before scanning prefixes.
inline double level_sort_key(const LeafSuffStats& s) {
  switch (s.type()) {
    case LeafModelType::kMultivariateRegression:
      return s.gram(0, 0) > 0.0 ? s.cross[0] / s.gram(0, 0) : 0.0;
    case LeafModelType::kLogLinearVariance:
      return s.count > 0 ? s.response_sum / s.count : 0.0;
    default:
      return s.precision_sum > 0.0 ? s.response_sum / s.precision_sum : 0.0;
  }
}

/// One Metropolis-Hastings grow or prune proposal on `tree`.
///
/// Grow picks a leaf uniformly, a variable by `variable_weights` and a cut
/// uniformly among the node's candidate cutpoints (a uniform nonempty proper
/// level subset for unordered features). Prune picks uniformly among nodes
/// whose children are both leaves. The rule-selection probability equals the
/// prior's, so it cancels from the acceptance ratio. `membership[i]` is the
/// leaf holding row i and is kept in sync on acceptance.
inline bool mh_tree_move(Tree& tree, std::span<int> membership, const TreeMoveContext& ctx, Rng& rng,
                         MoveCounters* counters = nullptr) {
  const auto& cfg = ctx.config;
  const int n = static_cast<int>(membership.size());
  const auto leaves = tree.leaves();
  const int num_leaves = static_cast<int>(leaves.size());
  const bool grow = num_leaves == 1 || rng.uniform() < 0.5;

  if (grow) {
    if (counters) ++counters->grow_proposed;
    const int leaf = leaves[rng.uniform_index(leaves.size())];
    const int depth = tree.depth(leaf);
    if (cfg.max_depth >= 0 && depth >= cfg.max_depth) return false;
    const int feature = static_cast<int>(rng.categorical(cfg.variable_weights));
    const FeatureType ftype = cfg.feature_types[feature];

    std::vector<int> rows;
    for (int i = 0; i < n; ++i) {
      if (membership[i] == leaf) rows.push_back(i);
    }
    if (static_cast<int>(rows.size()) < 2 * cfg.min_samples_leaf) return false;

    SplitRule rule;
    if (ftype == FeatureType::kUnorderedCategorical) {
      std::vector<int> levels;
      for (int i : rows) levels.push_back(static_cast<int>(ctx.x(i, feature)));
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      if (levels.size() < 2) return false;
      std::vector<int> subset;
      do {
        subset.clear();
        for (int lv : levels) {
          if (rng.bernoulli(0.5)) subset.push_back(lv);
        }
      } while (subset.empty() || subset.size() == levels.size());
      rule = SplitRule::category_subset(feature, std::move(subset));
    } else {
      std::vector<double> values;
      values.reserve(rows.size());
      for (int i : rows) values.push_back(ctx.x(i, feature));
      std::sort(values.begin(), values.end());
      const auto bounds = candidate_boundaries(values, cfg.cutpoint_grid_size);
      if (bounds.empty()) return false;
      const int k = bounds[rng.uniform_index(bounds.size())];
      rule = ordered_rule(feature, ftype, boundary_threshold(values, k, ftype));
    }

    LeafSuffStats left = ctx.empty_stats(), right = ctx.empty_stats();
    for (int i : rows) {
      (rule.routes_left(ctx.x(i, feature)) ? left : right).add(ctx.obs, i);
    }
    if (left.count < cfg.min_samples_leaf || right.count < cfg.min_samples_leaf) return false;

    const double ps = split_probability(cfg.alpha, cfg.beta, depth);
    const double ps_child = split_probability(cfg.alpha, cfg.beta, depth + 1);
    const double log_prior_ratio = std::log(ps) + 2.0 * std::log1p(-ps_child) - std::log1p(-ps);
    const double log_lik_ratio = ctx.ml(left) + ctx.ml(right) - ctx.ml(left + right);

    const int parent = tree.parent(leaf);
    bool parent_was_nog = false;
    if (parent >= 0) {
      const int sibling = tree.left(parent) == leaf ? tree.right(parent) : tree.left(parent);
      parent_was_nog = tree.is_leaf(sibling);
    }
    const int nog_new = static_cast<int>(tree.leaf_parents().size()) - (parent_was_nog ? 1 : 0) + 1;
    const double p_grow = num_leaves == 1 ? 1.0 : 0.5;
    const double log_transition = std::log(0.5 / nog_new) - std::log(p_grow / num_leaves);

    const double log_accept = log_prior_ratio + log_lik_ratio + log_transition;
    if (!(std::log(rng.uniform()) < log_accept)) return false;

    const auto [l, r] = tree.grow(leaf, rule);
    for (int i : rows) membership[i] = rule.routes_left(ctx.x(i, feature)) ? l : r;
    if (counters) ++counters->grow_accepted;
    return true;
  }

  if (counters) ++counters->prune_proposed;
  const auto nogs = tree.leaf_parents();
  const int node = nogs[rng.uniform_index(nogs.size())];
  const int l = tree.left(node);
  const int r = tree.right(node);
  LeafSuffStats left = ctx.empty_stats(), right = ctx.empty_stats();
  for (int i = 0; i < n; ++i) {
    if (membership[i] == l) left.add(ctx.obs, i);
    else if (membership[i] == r) right.add(ctx.obs, i);
  }
  const int depth = tree.depth(node);
  const double ps = split_probability(cfg.alpha, cfg.beta, depth);
  const double ps_child = split_probability(cfg.alpha, cfg.beta, depth + 1);
  const double log_prior_ratio = std::log1p(-ps) - std::log(ps) - 2.0 * std::log1p(-ps_child);
  const double log_lik_ratio = ctx.ml(left + right) - ctx.ml(left) - ctx.ml(right);
  const int leaves_after = num_leaves - 1;
  const double p_grow_after = leaves_after == 1 ? 1.0 : 0.5;
  const double log_transition =
      std::log(p_grow_after / leaves_after) - std::log(0.5 / static_cast<double>(nogs.size()));

  const double log_accept = log_prior_ratio + log_lik_ratio + log_transition;
  if (!(std::log(rng.uniform()) < log_accept)) return false;

  tree.prune(node);
  for (int i = 0; i < n; ++i) {
    if (membership[i] == l || membership[i] == r) membership[i] = node;
  }
  if (counters) ++counters->prune_accepted;
  return true;
}

/// Row indices pre-sorted by each covariate; built once per dataset.
class SortedFeatureIndex {
 public:
  SortedFeatureIndex() = default;
  explicit SortedFeatureIndex(const CovariateMatrix& x) {
    const int n = x.num_rows();
    order_.resize(x.num_columns());
    for (int j = 0; j < x.num_columns(); ++j) {
      auto& ord = order_[j];
      ord.resize(n);
      std::iota(ord.begin(), ord.end(), 0);
      std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return x(a, j) < x(b, j); });
    }
  }

  int num_features() const { return static_cast<int>(order_.size()); }
  const std::vector<int>& feature(int j) const { return order_[j]; }

 private:
  std::vector<std::vector<int>> order_;
};

/// Scratch buffers reused across grow-from-root calls.
struct GfrWorkspace {
  std::vector<std::vector<int>> order;
  std::vector<std::pair<int, int>> ranges;
  std::vector<char> goes_left;
  std::vector<int> buffer;
  std::vector<double> values;
  std::vector<double> log_weights;
};

/// Regrow `tree` from the root, sampling each node's split (or stop) with
/// probability proportional to prior times integrated likelihood.
///
/// For a node at depth d, a candidate split on feature j with K_j cutpoints
/// scores log(p_d) + log(w_j) - log(K_j) + ml(left) + ml(right), and stopping
/// scores log(1 - p_d) + ml(node), where p_d = alpha / (1 + d)^beta.
/// Unordered features contribute the K - 1 prefix splits of their levels
/// ordered by the node's per-level mean.
inline void gfr_regrow_tree(Tree& tree, std::span<int> membership, const TreeMoveContext& ctx,
                            const SortedFeatureIndex& sorted, GfrWorkspace& ws, Rng& rng) {
  const auto& cfg = ctx.config;
  const int n = static_cast<int>(membership.size());
  const int p = sorted.num_features();
  tree.reset(0.0);

  ws.order.resize(p);
  for (int j = 0; j < p; ++j) ws.order[j] = sorted.feature(j);
  ws.ranges.assign(1, {0, n});
  ws.goes_left.assign(n, 0);
  ws.buffer.resize(n);

  struct Candidate {
    int feature;
    double threshold;
    std::vector<int> levels;
  };
  std::vector<Candidate> candidates;
  std::vector<int> stack{Tree::kRoot};

  while (!stack.empty()) {
    const int node = stack.back();
    stack.pop_back();
    const auto [begin, end] = ws.ranges[node];
    const int n_node = end - begin;
    const int depth = tree.depth(node);

    if (cfg.max_depth >= 0 && depth >= cfg.max_depth) continue;
    if (n_node < 2 * cfg.min_samples_leaf) continue;

    LeafSuffStats node_stats = ctx.empty_stats();
    for (int pos = begin; pos < end; ++pos) node_stats.add(ctx.obs, ws.order[0][pos]);
    const double ps = split_probability(cfg.alpha, cfg.beta, depth);
    const double log_ps = std::log(ps);

    candidates.clear();
    ws.log_weights.clear();
    ws.log_weights.push_back(std::log1p(-ps) + ctx.ml(node_stats));

    for (int j = 0; j < p; ++j) {
      const double wj = cfg.variable_weights[j];
      if (wj <= 0.0) continue;
      const FeatureType ftype = cfg.feature_types[j];
      const auto seg = std::span<const int>(ws.order[j]).subspan(begin, n_node);

      if (ftype == FeatureType::kUnorderedCategorical) {
        const int num_levels = std::max(ctx.x.num_levels(j), 1);
        std::vector<LeafSuffStats> by_level(num_levels, ctx.empty_stats());
        for (int i : seg) by_level[static_cast<int>(ctx.x(i, j))].add(ctx.obs, i);
        std::vector<int> present;
        for (int lv = 0; lv < num_levels; ++lv) {
          if (!by_level[lv].empty()) present.push_back(lv);
        }
        if (present.size() < 2) continue;
        std::stable_sort(present.begin(), present.end(), [&](int a, int b) {
          return level_sort_key(by_level[a]) < level_sort_key(by_level[b]);
        });
        const double prior = log_ps + std::log(wj) - std::log(static_cast<double>(present.size() - 1));
        LeafSuffStats acc = ctx.empty_stats();
        for (std::size_t t = 0; t + 1 < present.size(); ++t) {
          acc += by_level[present[t]];
          const LeafSuffStats right = node_stats - acc;
          if (acc.count < cfg.min_samples_leaf || right.count < cfg.min_samples_leaf) continue;
          candidates.push_back({j, 0.0, std::vector<int>(present.begin(), present.begin() + t + 1)});
          ws.log_weights.push_back(prior + ctx.ml(acc) + ctx.ml(right));
        }
        continue;
      }

      ws.values.resize(n_node);
      for (int k = 0; k < n_node; ++k) ws.values[k] = ctx.x(seg[k], j);
      const auto bounds = candidate_boundaries(ws.values, cfg.cutpoint_grid_size);
      if (bounds.empty()) continue;
      const double prior = log_ps + std::log(wj) - std::log(static_cast<double>(bounds.size()));
      LeafSuffStats acc = ctx.empty_stats();
      int pos = 0;
      for (int k : bounds) {
        while (pos < k) acc.add(ctx.obs, seg[pos++]);
        if (k < cfg.min_samples_leaf || n_node - k < cfg.min_samples_leaf) continue;
        const LeafSuffStats right = node_stats - acc;
        candidates.push_back({j, boundary_threshold(ws.values, k, ftype), {}});
        ws.log_weights.push_back(prior + ctx.ml(acc) + ctx.ml(right));
      }
    }

    if (candidates.empty()) continue;
    const std::size_t choice = rng.categorical_log(ws.log_weights);
    if (choice == 0) continue;
    const Candidate& chosen = candidates[choice - 1];
    SplitRule rule = chosen.levels.empty()
                         ? ordered_rule(chosen.feature, cfg.feature_types[chosen.feature], chosen.threshold)
                         : SplitRule::category_subset(chosen.feature, chosen.levels);

    int n_left = 0;
    for (int pos = begin; pos < end; ++pos) {
      const int i = ws.order[0][pos];
      ws.goes_left[i] = rule.routes_left(ctx.x(i, rule.feature)) ? 1 : 0;
      n_left += ws.goes_left[i];
    }
    for (int j = 0; j < p; ++j) {
      auto& ord = ws.order[j];
      int write = begin;
      int spill = 0;
      for (int pos = begin; pos < end; ++pos) {
        const int i = ord[pos];
        if (ws.goes_left[i]) ord[write++] = i;
        else ws.buffer[spill++] = i;
      }
      std::copy(ws.buffer.begin(), ws.buffer.begin() + spill, ord.begin() + write);
    }

    const auto [l, r] = tree.grow(node, std::move(rule));
    if (static_cast<int>(ws.ranges.size()) < tree.node_capacity()) ws.ranges.resize(tree.node_capacity());
    ws.ranges[l] = {begin, begin + n_left};
    ws.ranges[r] = {begin + n_left, end};
    stack.push_back(r);
    stack.push_back(l);
  }

  for (int leaf : tree.leaves()) {
    const auto [begin, end] = ws.ranges[leaf];
    for (int pos = begin; pos < end; ++pos) membership[ws.order[0][pos]] = leaf;
  }
}

// ---------------------------------------------------------------------------
// Forest-level sampler
// ---------------------------------------------------------------------------

/// Temporary tracking structures for sampling one forest: per-tree leaf
/// membership of every training row, pre-sorted feature orders for
/// grow-from-root, and move counters.
class ForestSampler {
 public:
  ForestSampler(const ForestDataset& data, const ForestModelConfig& config)
      : sorted_(data.covariates()), membership_(config.num_trees) {
    config.check_dataset(data);
  }

  /// Set every root to leaf_init / m and remove the forest's contribution
  /// from the residual (or fold it into the variance weights for variance
  /// forests).
  void prepare_for_sampler(ForestDataset& data, Outcome& outcome, Forest& forest, LeafModelType type,
                           double leaf_init) {
    require(forest.is_root_only(), ErrorCode::kStructure, "prepare_for_sampler needs a root-only forest");
    require(static_cast<int>(membership_.size()) == forest.num_trees(), ErrorCode::kDimension,
            "forest size differs from sampler config");
    require(static_cast<int>(outcome.size()) == data.num_observations(), ErrorCode::kDimension,
            "outcome length differs from dataset");
    forest.reset_roots(leaf_init / forest.num_trees());
    const int n = data.num_observations();
    for (auto& m : membership_) m.assign(n, Tree::kRoot);
    if (type == LeafModelType::kLogLinearVariance) {
      auto w = data.mutable_variance_weights();
      for (double& v : w) v *= std::exp(leaf_init);
      return;
    }
    outcome.subtract_vector(predict_forest(forest, data));
  }

  /// Rebuild memberships for an existing forest (warm start). Variance
  /// forests multiply their current output into the variance weights; mean
  /// forests leave the residual untouched.
  void reconstitute(ForestDataset& data, const Forest& forest, LeafModelType type) {
    check_forest_inputs(forest, data);
    require(static_cast<int>(membership_.size()) == forest.num_trees(), ErrorCode::kDimension,
            "forest size differs from sampler config");
    const int n = data.num_observations();
    for (int t = 0; t < forest.num_trees(); ++t) {
      auto& m = membership_[t];
      m.resize(n);
      for (int i = 0; i < n; ++i) m[i] = forest.tree(t).find_leaf(data.covariates(), i);
    }
    if (type == LeafModelType::kLogLinearVariance) {
      const auto h = predict_forest(forest, data);
      auto w = data.mutable_variance_weights();
      for (int i = 0; i < n; ++i) w[i] *= h[i];
    }
  }

  /// Backfit every tree once: add its contribution back, redraw structure
  /// (MH move or full regrow) and leaf parameters, then remove the new
  /// contribution. Optionally snapshot the forest into `samples`.
  void sample_one_iteration(ForestDataset& data, Outcome& outcome, ForestSamples& samples, Forest& active,
                            Rng& rng, const ForestModelConfig& config, const GlobalModelConfig& global,
                            bool keep_forest, bool gfr) {
    config.check_dataset(data);
    require(active.num_trees() == config.num_trees && active.leaf_dimension() == config.leaf_dimension,
            ErrorCode::kDimension, "active forest does not match config");
    require(static_cast<int>(outcome.size()) == data.num_observations(), ErrorCode::kDimension,
            "outcome length differs from dataset");
    const int n = data.num_observations();
    for (const auto& m : membership_) {
      require(static_cast<int>(m.size()) == n, ErrorCode::kStructure,
              "sampler not prepared; call prepare_for_sampler first");
    }
    const LeafModelType type = config.leaf_model_type;
    const bool variance = type == LeafModelType::kLogLinearVariance;
    const double sigma2 = global.global_error_variance;
    const Eigen::MatrixXd* basis = uses_basis(type) ? &data.basis() : nullptr;
    auto residual = outcome.mutable_residual();

    precision_.clear();
    if (variance || data.has_variance_weights()) {
      precision_.resize(n);
      if (!variance) {
        for (int i = 0; i < n; ++i) precision_[i] = 1.0 / data.variance_weight(i);
      }
    }
    const LeafObservationView view{residual, precision_, basis};
    const TreeMoveContext ctx{data.covariates(), view, config, sigma2};
    const int d = config.leaf_dimension;

    auto tree_value = [&](const Tree& tree, int leaf, int i) {
      const auto v = tree.leaf_values(leaf);
      if (!basis) return v[0];
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += v[k] * (*basis)(i, k);
      return s;
    };

    for (int t = 0; t < active.num_trees(); ++t) {
      Tree& tree = active.tree(t);
      auto& memb = membership_[t];

      std::span<double> weights;
      if (variance) {
        weights = data.mutable_variance_weights();
        for (int i = 0; i < n; ++i) {
          precision_[i] = 1.0 / (weights[i] * std::exp(-tree.leaf_value(memb[i])));
        }
      } else {
        for (int i = 0; i < n; ++i) residual[i] += tree_value(tree, memb[i], i);
      }

      if (gfr) {
        gfr_regrow_tree(tree, memb, ctx, sorted_, workspace_, rng);
      } else {
        mh_tree_move(tree, memb, ctx, rng, &counters_);
      }

      leaf_stats_.assign(tree.node_capacity(), ctx.empty_stats());
      for (int i = 0; i < n; ++i) leaf_stats_[memb[i]].add(view, i);
      for (int leaf : tree.leaves()) {
        tree.set_leaf_values(leaf, sample_leaf_params(type, leaf_stats_[leaf], config.leaf, sigma2, rng));
      }

      if (variance) {
        for (int i = 0; i < n; ++i) {
          weights[i] = std::exp(tree.leaf_value(memb[i])) / precision_[i];
          require(std::isfinite(weights[i]) && weights[i] > 0.0, ErrorCode::kNumeric,
                  "variance forest produced a non-finite variance weight");
        }
      } else {
        for (int i = 0; i < n; ++i) {
          residual[i] -= tree_value(tree, memb[i], i);
          require(std::isfinite(residual[i]), ErrorCode::kNumeric, "residual became non-finite");
        }
      }
    }
    if (keep_forest) samples.add(active);
  }

  const std::vector<int>& membership(int tree) const { return membership_[tree]; }
  const MoveCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = MoveCounters{}; }

 private:
  SortedFeatureIndex sorted_;
  std::vector<std::vector<int>> membership_;
  GfrWorkspace workspace_;
  std::vector<double> precision_;
  std::vector<LeafSuffStats> leaf_stats_;
  MoveCounters counters_;
};

inline void prepare_for_sampler(ForestDataset& data, Outcome& outcome, ForestSampler& sampler, Forest& forest,
                                LeafModelType type, double leaf_init) {
  sampler.prepare_for_sampler(data, outcome, forest, type, leaf_init);
}

/// Draw sigma^2 from IG(a + n/2, b + sum r_i^2 / (2 v_i)) using the full
/// residual and the dataset's variance weights.
inline double sample_global_error_variance(const Outcome& outcome, const ForestDataset& data, Rng& rng,
                                           double a_global, double b_global) {
  require(a_global > 0.0 && b_global > 0.0, ErrorCode::kInvalidArgument, "IG prior must be positive");
  require(static_cast<int>(outcome.size()) == data.num_observations(), ErrorCode::kDimension,
          "outcome length differs from dataset");
  double ss = 0.0;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    ss += outcome[i] * outcome[i] / data.variance_weight(static_cast<int>(i));
  }
  return rng.inverse_gamma(a_global + 0.5 * static_cast<double>(outcome.size()), b_global + 0.5 * ss);
}

}  // namespace stochforest

#endif  // STOCHFOREST_FOREST_SAMPLER_HPP_
