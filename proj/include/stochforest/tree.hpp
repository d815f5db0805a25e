#ifndef STOCHFOREST_TREE_HPP_
#define STOCHFOREST_TREE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"

namespace stochforest {

enum class SplitKind { kNumericLe, kOrderedLe, kCategorySubset };

/// A binary split on one covariate. Observations satisfying the rule go to
/// the left child: `value <= threshold` for numeric and ordered features,
/// `level in level_set` for unordered ones.
struct SplitRule {
  int feature = -1;
  SplitKind kind = SplitKind::kNumericLe;
  double threshold = 0.0;
  std::vector<int> level_set;  // sorted, unique

  static SplitRule numeric_le(int feature, double threshold) {
    return SplitRule{feature, SplitKind::kNumericLe, threshold, {}};
  }
  static SplitRule ordered_le(int feature, double threshold) {
    return SplitRule{feature, SplitKind::kOrderedLe, threshold, {}};
  }
  static SplitRule category_subset(int feature, std::vector<int> levels) {
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    require(!levels.empty(), ErrorCode::kInvalidArgument, "category subset must be nonempty");
    return SplitRule{feature, SplitKind::kCategorySubset, 0.0, std::move(levels)};
  }

  bool routes_left(double value) const {
    if (kind == SplitKind::kCategorySubset) {
      return std::binary_search(level_set.begin(), level_set.end(), static_cast<int>(value));
    }
    return value <= threshold;
  }

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

inline SplitKind natural_split_kind(FeatureType type) {
  switch (type) {
    case FeatureType::kNumeric: return SplitKind::kNumericLe;
    case FeatureType::kOrderedCategorical: return SplitKind::kOrderedLe;
    case FeatureType::kUnorderedCategorical: return SplitKind::kCategorySubset;
  }
  return SplitKind::kNumericLe;
}

inline const char* to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::kNumericLe: return "numeric_le";
    case SplitKind::kOrderedLe: return "ordered_le";
    case SplitKind::kCategorySubset: return "category_subset";
  }
  return "?";
}

inline bool evaluate_split(const SplitRule& rule, FeatureType type, double value) {
  require(rule.kind == natural_split_kind(type), ErrorCode::kInvalidArgument,
          std::string("split kind ") + to_string(rule.kind) + " does not match feature type code " +
              std::to_string(to_code(type)));
  return rule.routes_left(value);
}

inline bool evaluate_split(const SplitRule& rule, const CovariateMatrix& x, int row) {
  require(rule.feature >= 0 && rule.feature < x.num_columns(), ErrorCode::kDimension,
          "split feature index out of range");
  return evaluate_split(rule, x.feature_type(rule.feature), x(row, rule.feature));
}

struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  bool deleted = false;
  SplitRule rule;                   // meaningful for internal nodes only
  std::vector<double> leaf_values;  // meaningful for leaves only

  bool is_leaf() const { return left < 0; }
};

/// Index-based binary tree. Node 0 is always the root; node ids stay stable
/// across edits, and ids freed by a prune are recycled by later grows.
class Tree {
 public:
  static constexpr int kRoot = 0;

  explicit Tree(int leaf_dimension = 1) : leaf_dimension_(leaf_dimension) {
    require(leaf_dimension >= 1, ErrorCode::kInvalidArgument, "leaf dimension must be >= 1");
    reset(0.0);
  }

  void reset(double root_value) {
    nodes_.assign(1, TreeNode{});
    nodes_[0].leaf_values.assign(leaf_dimension_, root_value);
    free_.clear();
  }

  void reset(std::span<const double> root_values) {
    require(static_cast<int>(root_values.size()) == leaf_dimension_, ErrorCode::kDimension,
            "root value dimension mismatch");
    reset(0.0);
    nodes_[0].leaf_values.assign(root_values.begin(), root_values.end());
  }

  int leaf_dimension() const { return leaf_dimension_; }
  int node_capacity() const { return static_cast<int>(nodes_.size()); }
  bool is_valid_node(int id) const {
    return id >= 0 && id < node_capacity() && !nodes_[id].deleted;
  }
  const TreeNode& node(int id) const { return nodes_[id]; }
  const std::vector<TreeNode>& raw_nodes() const { return nodes_; }

  bool is_leaf(int id) const { return nodes_[id].is_leaf(); }
  bool is_root_only() const { return nodes_[kRoot].is_leaf(); }
  int left(int id) const { return nodes_[id].left; }
  int right(int id) const { return nodes_[id].right; }
  int parent(int id) const { return nodes_[id].parent; }
  int depth(int id) const { return nodes_[id].depth; }
  const SplitRule& rule(int id) const { return nodes_[id].rule; }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (int i = 0; i < node_capacity(); ++i) {
      if (!nodes_[i].deleted && nodes_[i].is_leaf()) out.push_back(i);
    }
    return out;
  }

  /// Internal nodes whose two children are both leaves (prune candidates).
  std::vector<int> leaf_parents() const {
    std::vector<int> out;
    for (int i = 0; i < node_capacity(); ++i) {
      const auto& nd = nodes_[i];
      if (!nd.deleted && !nd.is_leaf() && nodes_[nd.left].is_leaf() && nodes_[nd.right].is_leaf()) {
        out.push_back(i);
      }
    }
    return out;
  }

  int num_nodes() const { return node_capacity() - static_cast<int>(free_.size()); }
  int num_leaves() const { return (num_nodes() + 1) / 2; }

  int max_leaf_depth() const {
    int d = 0;
    for (const auto& nd : nodes_) {
      if (!nd.deleted && nd.is_leaf()) d = std::max(d, nd.depth);
    }
    return d;
  }

  std::span<const double> leaf_values(int id) const { return nodes_[id].leaf_values; }
  double leaf_value(int id, int k = 0) const { return nodes_[id].leaf_values[k]; }

  void set_leaf_values(int id, std::span<const double> values) {
    require(is_valid_node(id) && is_leaf(id), ErrorCode::kStructure,
            "node " + std::to_string(id) + " is not a leaf");
    require(static_cast<int>(values.size()) == leaf_dimension_, ErrorCode::kDimension,
            "leaf value dimension mismatch");
    nodes_[id].leaf_values.assign(values.begin(), values.end());
  }

  void set_leaf_value(int id, double value) {
    const double v[1] = {value};
    set_leaf_values(id, std::span<const double>(v, 1));
  }

  /// Replace a leaf by an internal node with two zero-valued leaves.
  std::pair<int, int> grow(int leaf_id, SplitRule rule) {
    require(is_valid_node(leaf_id), ErrorCode::kStructure, "grow: invalid node " + std::to_string(leaf_id));
    require(is_leaf(leaf_id), ErrorCode::kStructure,
            "grow: node " + std::to_string(leaf_id) + " is not a leaf");
    const int l = allocate();
    const int r = allocate();
    const int depth = nodes_[leaf_id].depth + 1;
    for (int child : {l, r}) {
      nodes_[child] = TreeNode{};
      nodes_[child].parent = leaf_id;
      nodes_[child].depth = depth;
      nodes_[child].leaf_values.assign(leaf_dimension_, 0.0);
    }
    auto& nd = nodes_[leaf_id];
    nd.left = l;
    nd.right = r;
    nd.rule = std::move(rule);
    nd.leaf_values.clear();
    return {l, r};
  }

  /// Collapse an internal node whose children are both leaves.
  void prune(int node_id) {
    require(is_valid_node(node_id) && !is_leaf(node_id), ErrorCode::kStructure,
            "prune: node " + std::to_string(node_id) + " is not an internal node");
    auto& nd = nodes_[node_id];
    require(is_leaf(nd.left) && is_leaf(nd.right), ErrorCode::kStructure,
            "prune: children of node " + std::to_string(node_id) + " are not both leaves");
    const int l = nd.left;
    const int r = nd.right;
    nd.left = nd.right = -1;
    nd.rule = SplitRule{};
    nd.leaf_values.assign(leaf_dimension_, 0.0);
    release(std::max(l, r));
    release(std::min(l, r));
  }

  int find_leaf(const CovariateMatrix& x, int row) const {
    int id = kRoot;
    while (!nodes_[id].is_leaf()) {
      const auto& nd = nodes_[id];
      id = nd.rule.routes_left(x(row, nd.rule.feature)) ? nd.left : nd.right;
    }
    return id;
  }

  int max_feature_index() const {
    int f = -1;
    for (const auto& nd : nodes_) {
      if (!nd.deleted && !nd.is_leaf()) f = std::max(f, nd.rule.feature);
    }
    return f;
  }

  /// Structural and numeric equality, independent of node id assignment.
  bool equivalent(const Tree& other) const {
    return leaf_dimension_ == other.leaf_dimension_ && equivalent_from(other, kRoot, kRoot, true);
  }

  /// Same splits, ignoring leaf values.
  bool same_structure(const Tree& other) const { return equivalent_from(other, kRoot, kRoot, false); }

  friend bool operator==(const Tree& a, const Tree& b) { return a.equivalent(b); }

  /// Rebuild from a node table (e.g. parsed JSON). Missing ids are treated
  /// as deleted slots. Throws kStructure on any invariant violation.
  static Tree from_nodes(int leaf_dimension, std::vector<TreeNode> nodes) {
    Tree t(leaf_dimension);
    t.nodes_ = std::move(nodes);
    t.free_.clear();
    for (int i = 0; i < t.node_capacity(); ++i) {
      if (t.nodes_[i].deleted) t.free_.push_back(i);
    }
    t.recompute_depths();
    t.validate();
    return t;
  }

  void validate() const {
    require(!nodes_.empty() && !nodes_[kRoot].deleted, ErrorCode::kStructure, "tree has no root");
    require(nodes_[kRoot].parent == -1, ErrorCode::kStructure, "root node must not have a parent");
    std::vector<int> seen(nodes_.size(), 0);
    std::vector<int> stack{kRoot};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      require(id >= 0 && id < node_capacity() && !nodes_[id].deleted, ErrorCode::kStructure,
              "node " + std::to_string(id) + " referenced but missing");
      require(seen[id] == 0, ErrorCode::kStructure, "node " + std::to_string(id) + " reached twice");
      seen[id] = 1;
      const auto& nd = nodes_[id];
      if (nd.is_leaf()) {
        require(nd.right < 0, ErrorCode::kStructure, "node " + std::to_string(id) + " has one child");
        require(static_cast<int>(nd.leaf_values.size()) == leaf_dimension_, ErrorCode::kStructure,
                "leaf " + std::to_string(id) + " has wrong leaf dimension");
      } else {
        require(nd.right >= 0, ErrorCode::kStructure, "node " + std::to_string(id) + " has one child");
        for (int c : {nd.left, nd.right}) {
          require(c < node_capacity() && !nodes_[c].deleted, ErrorCode::kStructure,
                  "node " + std::to_string(id) + " has missing child " + std::to_string(c));
          require(nodes_[c].parent == id, ErrorCode::kStructure,
                  "node " + std::to_string(c) + " has inconsistent parent");
          stack.push_back(c);
        }
        require(nd.rule.feature >= 0, ErrorCode::kStructure,
                "internal node " + std::to_string(id) + " has no split feature");
      }
    }
    for (int i = 0; i < node_capacity(); ++i) {
      require(nodes_[i].deleted || seen[i], ErrorCode::kStructure,
              "orphan node " + std::to_string(i) + " is not reachable from the root");
    }
  }

 private:
  int allocate() {
    if (!free_.empty()) {
      auto it = std::min_element(free_.begin(), free_.end());
      const int id = *it;
      free_.erase(it);
      return id;
    }
    nodes_.emplace_back();
    return node_capacity() - 1;
  }

  void release(int id) {
    if (id == node_capacity() - 1) {
      nodes_.pop_back();
      while (!nodes_.empty() && nodes_.back().deleted) {
        free_.erase(std::find(free_.begin(), free_.end(), node_capacity() - 1));
        nodes_.pop_back();
      }
    } else {
      nodes_[id] = TreeNode{};
      nodes_[id].deleted = true;
      free_.push_back(id);
    }
  }

  void recompute_depths() {
    std::vector<int> stack{kRoot};
    if (nodes_.empty()) return;
    nodes_[kRoot].depth = 0;
    std::size_t guard = 0;
    while (!stack.empty() && guard++ <= nodes_.size()) {
      const int id = stack.back();
      stack.pop_back();
      const auto& nd = nodes_[id];
      if (nd.is_leaf()) continue;
      for (int c : {nd.left, nd.right}) {
        if (c >= 0 && c < node_capacity()) {
          nodes_[c].depth = nd.depth + 1;
          stack.push_back(c);
        }
      }
    }
  }

  bool equivalent_from(const Tree& other, int a, int b, bool compare_values) const {
    const auto& na = nodes_[a];
    const auto& nb = other.nodes_[b];
    if (na.is_leaf() != nb.is_leaf()) return false;
    if (na.is_leaf()) return !compare_values || na.leaf_values == nb.leaf_values;
    return na.rule == nb.rule && equivalent_from(other, na.left, nb.left, compare_values) &&
           equivalent_from(other, na.right, nb.right, compare_values);
  }

  int leaf_dimension_;
  std::vector<TreeNode> nodes_;
  std::vector<int> free_;
};

/// Value of one tree at one row: the leaf constant, or the leaf vector
/// dotted with the basis row for regression leaves.
inline double predict_tree(const Tree& tree, const CovariateMatrix& x, int row,
                           std::span<const double> basis_row = {}) {
  const int leaf = tree.find_leaf(x, row);
  const auto values = tree.leaf_values(leaf);
  if (basis_row.empty()) {
    require(tree.leaf_dimension() == 1, ErrorCode::kInvalidArgument,
            "multivariate leaves require a basis row");
    return values[0];
  }
  require(basis_row.size() == values.size(), ErrorCode::kDimension, "basis row dimension mismatch");
  double out = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) out += values[k] * basis_row[k];
  return out;
}

/// Log prior probability of a tree's shape under the depth-dependent split
/// probability alpha / (1 + depth)^beta.
inline double split_probability(double alpha, double beta, int depth) {
  return alpha / std::pow(1.0 + depth, beta);
}

inline double tree_log_prior(const Tree& tree, double alpha, double beta) {
  require(alpha > 0.0 && alpha <= 1.0 && beta > 0.0, ErrorCode::kInvalidArgument,
          "tree prior requires 0 < alpha <= 1 and beta > 0");
  double lp = 0.0;
  for (const auto& nd : tree.raw_nodes()) {
    if (nd.deleted) continue;
    const double ps = split_probability(alpha, beta, nd.depth);
    lp += nd.is_leaf() ? std::log1p(-ps) : std::log(ps);
  }
  return lp;
}

/// Grow with the data precondition: both children must receive at least one
/// of the training rows currently routed to `leaf_id`.
inline std::pair<int, int> apply_grow(Tree& tree, int leaf_id, SplitRule rule, const CovariateMatrix& x) {
  require(tree.is_valid_node(leaf_id) && tree.is_leaf(leaf_id), ErrorCode::kStructure,
          "grow target " + std::to_string(leaf_id) + " is not a leaf");
  require(rule.feature >= 0 && rule.feature < x.num_columns(), ErrorCode::kDimension,
          "split feature index out of range");
  require(rule.kind == natural_split_kind(x.feature_type(rule.feature)), ErrorCode::kInvalidArgument,
          "split kind does not match feature type");
  int n_left = 0, n_right = 0;
  for (int i = 0; i < x.num_rows(); ++i) {
    if (tree.find_leaf(x, i) != leaf_id) continue;
    (rule.routes_left(x(i, rule.feature)) ? n_left : n_right)++;
  }
  require(n_left > 0 && n_right > 0, ErrorCode::kInvalidArgument,
          "split would leave an empty child (left " + std::to_string(n_left) + ", right " +
              std::to_string(n_right) + ")");
  return tree.grow(leaf_id, std::move(rule));
}

inline void apply_prune(Tree& tree, int internal_id) { tree.prune(internal_id); }

/// Sum-of-trees ensemble. Variance forests are flagged `exponentiated`: their
/// output is exp(sum of log-scale leaves).
class Forest {
 public:
  Forest() = default;
  Forest(int num_trees, int leaf_dimension = 1, bool leaf_constant = true, bool exponentiated = false)
      : trees_(num_trees, Tree(leaf_dimension)),
        leaf_dimension_(leaf_dimension),
        leaf_constant_(leaf_constant),
        exponentiated_(exponentiated) {
    require(num_trees >= 1, ErrorCode::kInvalidArgument, "forest needs at least one tree");
  }

  int num_trees() const { return static_cast<int>(trees_.size()); }
  int leaf_dimension() const { return leaf_dimension_; }
  bool is_leaf_constant() const { return leaf_constant_; }
  bool is_exponentiated() const { return exponentiated_; }

  Tree& tree(int i) { return trees_[i]; }
  const Tree& tree(int i) const { return trees_[i]; }
  std::vector<Tree>& trees() { return trees_; }
  const std::vector<Tree>& trees() const { return trees_; }

  bool is_root_only() const {
    return std::all_of(trees_.begin(), trees_.end(), [](const Tree& t) { return t.is_root_only(); });
  }

  void reset_roots(double value) {
    for (auto& t : trees_) t.reset(value);
  }

  /// Additive sum over trees for one row (log scale for variance forests).
  double predict_raw(const CovariateMatrix& x, int row, std::span<const double> basis_row) const {
    double s = 0.0;
    for (const auto& t : trees_) s += predict_tree(t, x, row, basis_row);
    return s;
  }

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  std::vector<Tree> trees_;
  int leaf_dimension_ = 1;
  bool leaf_constant_ = true;
  bool exponentiated_ = false;
};

inline void check_forest_inputs(const Forest& forest, const ForestDataset& data) {
  require(forest.num_trees() >= 1, ErrorCode::kInvalidArgument, "empty forest");
  int max_feature = -1;
  for (const auto& t : forest.trees()) max_feature = std::max(max_feature, t.max_feature_index());
  require(max_feature < data.num_covariates(), ErrorCode::kDimension,
          "forest splits on feature " + std::to_string(max_feature) + " but dataset has " +
              std::to_string(data.num_covariates()) + " columns");
  if (!forest.is_leaf_constant()) {
    require(data.has_basis(), ErrorCode::kInvalidArgument, "regression-leaf forest needs a leaf basis");
    require(data.basis_dimension() == forest.leaf_dimension(), ErrorCode::kDimension,
            "basis dimension " + std::to_string(data.basis_dimension()) + " != leaf dimension " +
                std::to_string(forest.leaf_dimension()));
  } else {
    require(forest.leaf_dimension() == 1, ErrorCode::kInvalidArgument,
            "constant-leaf forests must have leaf dimension 1");
  }
}

/// Length-n prediction: additive sum over trees, exponentiated for variance
/// forests.
inline std::vector<double> predict_forest(const Forest& forest, const ForestDataset& data) {
  check_forest_inputs(forest, data);
  const int n = data.num_observations();
  const auto& x = data.covariates();
  std::vector<double> out(n, 0.0);
  std::vector<double> basis_row;
  for (int i = 0; i < n; ++i) {
    std::span<const double> brow;
    if (!forest.is_leaf_constant()) {
      const auto& b = data.basis();
      basis_row.resize(b.cols());
      for (Eigen::Index k = 0; k < b.cols(); ++k) basis_row[k] = b(i, k);
      brow = basis_row;
    }
    out[i] = forest.predict_raw(x, i, brow);
  }
  if (forest.is_exponentiated()) {
    for (double& v : out) v = std::exp(v);
  }
  return out;
}

/// Ordered container of forest snapshots sharing tree count and leaf
/// dimension.
class ForestSamples {
 public:
  ForestSamples() = default;
  ForestSamples(int num_trees, int leaf_dimension, bool leaf_constant, bool exponentiated = false)
      : num_trees_(num_trees),
        leaf_dimension_(leaf_dimension),
        leaf_constant_(leaf_constant),
        exponentiated_(exponentiated) {}

  int num_samples() const { return static_cast<int>(forests_.size()); }
  int num_trees() const { return num_trees_; }
  int leaf_dimension() const { return leaf_dimension_; }
  bool is_leaf_constant() const { return leaf_constant_; }
  bool is_exponentiated() const { return exponentiated_; }

  const Forest& forest(int i) const {
    require(i >= 0 && i < num_samples(), ErrorCode::kRange,
            "sample index " + std::to_string(i) + " out of range [0, " + std::to_string(num_samples()) + ")");
    return forests_[i];
  }
  const std::vector<Forest>& forests() const { return forests_; }

  void add(const Forest& forest) {
    require(forest.num_trees() == num_trees_ && forest.leaf_dimension() == leaf_dimension_ &&
                forest.is_leaf_constant() == leaf_constant_ && forest.is_exponentiated() == exponentiated_,
            ErrorCode::kDimension, "forest snapshot does not match container shape");
    forests_.push_back(forest);
  }

  void append(const ForestSamples& other) {
    for (const auto& f : other.forests_) add(f);
  }

  /// n x num_samples matrix of forest predictions.
  Eigen::MatrixXd predict(const ForestDataset& data) const {
    Eigen::MatrixXd out(data.num_observations(), num_samples());
    for (int s = 0; s < num_samples(); ++s) {
      const auto col = predict_forest(forests_[s], data);
      for (int i = 0; i < data.num_observations(); ++i) out(i, s) = col[i];
    }
    return out;
  }

  friend bool operator==(const ForestSamples&, const ForestSamples&) = default;

 private:
  int num_trees_ = 0;
  int leaf_dimension_ = 1;
  bool leaf_constant_ = true;
  bool exponentiated_ = false;
  std::vector<Forest> forests_;
};

}  // namespace stochforest

#endif  // STOCHFOREST_TREE_HPP_
