#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/tree.hpp"

using namespace stochforest;

namespace {

// Fig. 1: 0: X1 <= 5 -> (1: b1, 2: X2 <= 3 -> (3: b2, 4: b3))
Tree figure_one() {
  Tree t;
  auto [l, r] = t.grow(Tree::kRoot, SplitRule::numeric_le(0, 5.0));
  auto [rl, rr] = t.grow(r, SplitRule::numeric_le(1, 3.0));
  t.set_leaf_value(l, 1.0);
  t.set_leaf_value(rl, 2.0);
  t.set_leaf_value(rr, 3.0);
  return t;
}

CovariateMatrix row_matrix(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  int j = 0;
  for (double x : v) m(0, j++) = x;
  return CovariateMatrix::numeric(m);
}

Tree random_tree(Rng& rng, int num_grows) {
  Tree t;
  for (int k = 0; k < num_grows; ++k) {
    auto leaves = t.leaves();
    const int leaf = leaves[static_cast<std::size_t>(rng.uniform() * leaves.size())];
    t.grow(leaf, SplitRule::numeric_le(0, rng.uniform()));
  }
  return t;
}

}  // namespace

TEST(EvaluateSplit, Boundaries) {
  EXPECT_TRUE(evaluate_split(SplitRule::numeric_le(0, 5.0), FeatureType::kNumeric, 5.0));
  EXPECT_FALSE(evaluate_split(SplitRule::numeric_le(0, 5.0), FeatureType::kNumeric, 5.0 + 1e-12));
  EXPECT_FALSE(evaluate_split(SplitRule::category_subset(0, {0, 2}), FeatureType::kUnorderedCategorical, 1.0));
  EXPECT_TRUE(evaluate_split(SplitRule::category_subset(0, {0, 2}), FeatureType::kUnorderedCategorical, 2.0));
  EXPECT_TRUE(evaluate_split(SplitRule::ordered_le(0, 3.0), FeatureType::kOrderedCategorical, 3.0));
}

TEST(EvaluateSplit, KindMismatch) {
  EXPECT_THROW(evaluate_split(SplitRule::numeric_le(0, 1.0), FeatureType::kUnorderedCategorical, 1.0), Error);
}

TEST(PredictTree, RootOnly) {
  Tree t;
  t.reset(3.0);
  EXPECT_EQ(predict_tree(t, row_matrix({0.1, 99.0}), 0), 3.0);
}

TEST(PredictTree, FigureOne) {
  const Tree t = figure_one();
  const auto x = row_matrix({7.0, 2.0});
  EXPECT_EQ(t.find_leaf(x, 0), 3);
  EXPECT_EQ(predict_tree(t, x, 0), 2.0);
  EXPECT_EQ(predict_tree(t, row_matrix({5.0, 9.0}), 0), 1.0);
  EXPECT_EQ(predict_tree(t, row_matrix({5.5, 3.5}), 0), 3.0);
}

TEST(PredictTree, RegressionLeafDotProduct) {
  Tree t(4);
  const std::vector<double> beta{1, 0, 0, 2};
  t.reset(beta);
  const std::vector<double> psi{1, 0.3, 0, 1};
  EXPECT_DOUBLE_EQ(predict_tree(t, row_matrix({0.0}), 0, psi), 3.0);
  const std::vector<double> short_psi{1, 0.3};
  EXPECT_THROW(predict_tree(t, row_matrix({0.0}), 0, short_psi), Error);
}

TEST(PredictForest, Additivity) {
  Forest f(2);
  f.tree(0).reset(1.0);
  f.tree(1).reset(2.0);
  ForestDataset d(CovariateMatrix::numeric(Eigen::MatrixXd::Random(5, 2)));
  for (double v : predict_forest(f, d)) EXPECT_EQ(v, 3.0);

  Forest v(3, 1, true, true);
  v.reset_roots(0.0);
  for (double p : predict_forest(v, d)) EXPECT_EQ(p, 1.0);
}

TEST(PredictForest, SumOfTreesExact) {
  Rng rng(11);
  Forest f(5);
  for (auto& t : f.trees()) {
    t = random_tree(rng, 4);
    for (int leaf : t.leaves()) t.set_leaf_value(leaf, rng.normal());
  }
  Eigen::MatrixXd x(30, 1);
  for (int i = 0; i < 30; ++i) x(i, 0) = rng.uniform();
  ForestDataset d(CovariateMatrix::numeric(x));
  const auto pred = predict_forest(f, d);
  for (int i = 0; i < 30; ++i) {
    double s = 0.0;
    for (const auto& t : f.trees()) s += predict_tree(t, d.covariates(), i);
    EXPECT_EQ(pred[i], s);
  }
}

TEST(PredictForest, DimensionMismatch) {
  Forest f(1);
  f.tree(0).grow(Tree::kRoot, SplitRule::numeric_le(3, 0.5));
  ForestDataset d(CovariateMatrix::numeric(Eigen::MatrixXd::Random(2, 2)));
  EXPECT_THROW(predict_forest(f, d), Error);
}

TEST(TreePrior, RootOnly) {
  Tree t;
  EXPECT_NEAR(tree_log_prior(t, 0.95, 2.0), std::log(0.05), 1e-15);
}

TEST(TreePrior, FigureOneClosedForm) {
  const Tree t = figure_one();
  for (auto [a, b] : {std::pair{0.95, 2.0}, std::pair{0.5, 1.0}, std::pair{1.0, 0.5}}) {
    const double expected = std::log(a * (a / std::pow(2.0, b)) * (1 - a / std::pow(2.0, b)) *
                                     std::pow(1 - a / std::pow(3.0, b), 2));
    EXPECT_NEAR(tree_log_prior(t, a, b), expected, 1e-12);
  }
  // factors as printed, rounded to five digits
  EXPECT_NEAR(std::exp(tree_log_prior(t, 0.95, 2.0)), 0.95 * 0.2375 * 0.7625 * 0.89444 * 0.89444, 5e-6);
}

TEST(TreePrior, MatchesRecursiveOracle) {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const Tree t = random_tree(rng, static_cast<int>(rng.uniform() * 12));
    const double a = 0.05 + 0.95 * rng.uniform();
    const double b = 0.1 + 3.0 * rng.uniform();
    EXPECT_NEAR(tree_log_prior(t, a, b), oracle::tree_log_prior_recursive(t, Tree::kRoot, 0, a, b), 1e-12);
  }
}

TEST(TreePrior, RejectsBadHyperparameters) {
  Tree t;
  EXPECT_THROW(tree_log_prior(t, 0.0, 2.0), Error);
  EXPECT_THROW(tree_log_prior(t, 1.5, 2.0), Error);
  EXPECT_THROW(tree_log_prior(t, 0.9, 0.0), Error);
}

TEST(GrowPrune, InversePair) {
  Tree t;
  t.reset(0.7);
  const Tree before = t;
  auto [l, r] = t.grow(Tree::kRoot, SplitRule::numeric_le(0, 0.5));
  EXPECT_EQ(t.num_nodes(), 3);
  EXPECT_EQ(t.depth(Tree::kRoot), 0);
  EXPECT_EQ(t.depth(l), 1);
  EXPECT_EQ(t.depth(r), 1);
  EXPECT_EQ(t.leaf_value(l), 0.0);
  t.prune(Tree::kRoot);
  EXPECT_TRUE(t.same_structure(before));
  EXPECT_EQ(t.num_nodes(), 1);
}

TEST(GrowPrune, InversePairOnRandomTrees) {
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    Tree t = random_tree(rng, 5);
    const Tree before = t;
    const auto leaves = t.leaves();
    const int leaf = leaves[k % leaves.size()];
    t.grow(leaf, SplitRule::numeric_le(0, 0.25));
    t.prune(leaf);
    EXPECT_TRUE(t.same_structure(before));
    t.validate();
  }
}

TEST(GrowPrune, WrongNodeKinds) {
  Tree t = figure_one();
  EXPECT_THROW(t.grow(0, SplitRule::numeric_le(0, 1.0)), Error);
  EXPECT_THROW(t.prune(1), Error);
  EXPECT_THROW(t.prune(0), Error);  // right child is internal
}

TEST(GrowPrune, EmptyChildRejected) {
  Eigen::MatrixXd x(3, 1);
  x << 0.1, 0.2, 0.3;
  const auto cm = CovariateMatrix::numeric(x);
  Tree t;
  try {
    apply_grow(t, Tree::kRoot, SplitRule::numeric_le(0, 0.05), cm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  EXPECT_TRUE(t.is_root_only());
  apply_grow(t, Tree::kRoot, SplitRule::numeric_le(0, 0.15), cm);
  EXPECT_EQ(t.num_leaves(), 2);
}

TEST(Partition, EveryRowReachesExactlyOneLeaf) {
  Rng rng(21);
  Eigen::MatrixXd x(200, 1);
  for (int i = 0; i < 200; ++i) x(i, 0) = rng.uniform();
  const auto cm = CovariateMatrix::numeric(x);
  for (int k = 0; k < 10; ++k) {
    const Tree t = random_tree(rng, 8);
    const auto leaves = t.leaves();
    for (int i = 0; i < 200; ++i) {
      int hits = 0;
      // a leaf's region: follow the parent chain and check each rule
      for (int leaf : leaves) {
        bool inside = true;
        for (int c = leaf; t.parent(c) >= 0; c = t.parent(c)) {
          const int p = t.parent(c);
          const bool left = t.rule(p).routes_left(x(i, t.rule(p).feature));
          inside = inside && (left == (t.left(p) == c));
        }
        hits += inside ? 1 : 0;
      }
      EXPECT_EQ(hits, 1);
      EXPECT_TRUE(std::find(leaves.begin(), leaves.end(), t.find_leaf(cm, i)) != leaves.end());
    }
  }
}

TEST(TreeStructure, FromNodesDetectsOrphans) {
  Tree t = figure_one();
  auto nodes = t.raw_nodes();
  nodes.push_back(TreeNode{});
  nodes.back().leaf_values = {0.0};
  try {
    Tree::from_nodes(1, nodes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStructure);
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
  }
  EXPECT_TRUE(Tree::from_nodes(1, t.raw_nodes()).equivalent(t));
}
