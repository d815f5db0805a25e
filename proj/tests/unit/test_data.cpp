#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stochforest/data.hpp"
#include "stochforest/leaf_models.hpp"
#include "stochforest/rng.hpp"

using namespace stochforest;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

}  // namespace

TEST(Csv, ThreeRowFile) {
  const auto d = load_csv_table(parse_csv("y,x1\n1,0.5\n2,0.25\n3,1\n"), "y", std::nullopt, {});
  EXPECT_EQ(d.covariates.num_columns(), 1);
  EXPECT_EQ(d.outcome.size(), 3u);
  EXPECT_DOUBLE_EQ(d.covariates(1, 0), 0.25);
}

TEST(Csv, UnorderedFirstOccurrenceEncoding) {
  const auto d = load_csv_table(parse_csv("y,C1\n1,a\n2,b\n3,a\n"), "y", std::nullopt,
                                {{"C1", CategoricalKind::kUnordered}});
  EXPECT_EQ(d.covariates.feature_type(0), FeatureType::kUnorderedCategorical);
  EXPECT_EQ(d.covariates(0, 0), 0);
  EXPECT_EQ(d.covariates(1, 0), 1);
  EXPECT_EQ(d.covariates(2, 0), 0);
  EXPECT_EQ(d.covariates.level_labels(0), (std::vector<std::string>{"a", "b"}));
}

TEST(Csv, AcicShapedFeatureTypes) {
  const std::string text =
      "y,z,C1,XC,S3,C2,C3,X1\n"
      "1,0,u,a,1,2,3,0.1\n"
      "2,1,v,b,2,1,1,0.2\n"
      "3,0,w,a,3,3,2,0.3\n";
  CategoricalSpec spec{{"C1", CategoricalKind::kUnordered},
                       {"XC", CategoricalKind::kUnordered},
                       {"S3", CategoricalKind::kOrdered},
                       {"C2", CategoricalKind::kOrdered},
                       {"C3", CategoricalKind::kOrdered}};
  const auto d = load_csv_table(parse_csv(text), "y", std::string("z"), spec);
  std::vector<int> codes;
  for (auto t : d.covariates.feature_types()) codes.push_back(to_code(t));
  EXPECT_EQ(codes, (std::vector<int>{2, 2, 1, 1, 1, 0}));
  ASSERT_TRUE(d.treatment.has_value());
  EXPECT_EQ(*d.treatment, (std::vector<double>{0, 1, 0}));
}

TEST(Csv, Errors) {
  EXPECT_EQ(code_of([] { parse_csv(""); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(code_of([] { load_csv_table(parse_csv("y,x\n1,2\n"), "nope", std::nullopt, {}); }), ErrorCode::kSchema);
  try {
    load_csv_table(parse_csv("y,x\n1,2\n2,abc\n"), "y", std::nullopt, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos) << e.what();
  }
}

TEST(Csv, QuotedFieldsAndCrLf) {
  const auto t = parse_csv("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
}

TEST(Csv, EncodingRoundTrip) {
  const auto table = parse_csv("y,c\n1,red\n2,green\n3,blue\n4,red\n");
  const auto d = load_csv_table(table, "y", std::nullopt, {{"c", CategoricalKind::kUnordered}});
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(d.covariates.decode_level(0, static_cast<int>(d.covariates(i, 0))), table.rows[i][1]);
  }
}

TEST(Standardize, SymmetricCase) {
  auto [z, info] = standardize_outcome(std::vector<double>{1, 2, 3});
  EXPECT_DOUBLE_EQ(info.center, 2.0);
  EXPECT_DOUBLE_EQ(info.scale, 1.0);
  EXPECT_EQ(z, (std::vector<double>{-1, 0, 1}));
}

TEST(Standardize, DegenerateScale) {
  EXPECT_EQ(code_of([] { standardize_outcome(std::vector<double>{5, 5, 5}); }), ErrorCode::kDegenerateScale);
}

TEST(Standardize, RecoversMomentsAndInverts) {
  Rng rng(3);
  std::vector<double> y(1000);
  for (double& v : y) v = rng.normal(10.0, 2.0);
  auto [z, info] = standardize_outcome(y);
  EXPECT_NEAR(info.center, 10.0, 1.0);
  EXPECT_NEAR(info.scale, 2.0, 0.2);
  EXPECT_NEAR(oracle::mean(z), 0.0, 1e-10);
  EXPECT_NEAR(std::sqrt(oracle::variance(z)), 1.0, 1e-10);
  const auto back = info.invert(z);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(back[i], y[i], 1e-12 * std::abs(y[i]));
}

TEST(VarianceWeights, UnitWeightsMatchUnweighted) {
  const CovariateMatrix x = CovariateMatrix::numeric(Eigen::MatrixXd::Random(4, 2));
  ForestDataset plain(x);
  ForestDataset weighted(x, std::nullopt, std::vector<double>(4, 1.0));
  std::vector<double> r{0.3, -1.2, 2.0, 0.7};
  std::vector<double> prec(4, 1.0);
  LeafSuffStats a(LeafModelType::kConstantGaussian), b(LeafModelType::kConstantGaussian);
  for (int i = 0; i < 4; ++i) {
    a.add(LeafObservationView{r, {}, nullptr}, i);
    prec[i] = 1.0 / weighted.variance_weight(i);
    b.add(LeafObservationView{r, prec, nullptr}, i);
  }
  LeafHyperparams hp;
  hp.tau = 0.5;
  EXPECT_EQ(log_marginal(LeafModelType::kConstantGaussian, a, hp, 1.3),
            log_marginal(LeafModelType::kConstantGaussian, b, hp, 1.3));
  EXPECT_FALSE(plain.has_variance_weights());
}

TEST(VarianceWeights, DoublingMatchesClosedForm) {
  // Doubling every variance weight halves every precision; re-derive the
  // constant-leaf marginal by hand for that case.
  std::vector<double> r{0.5, 1.5, -0.25};
  std::vector<double> prec(3, 0.5);
  LeafSuffStats s(LeafModelType::kConstantGaussian);
  for (int i = 0; i < 3; ++i) s.add(LeafObservationView{r, prec, nullptr}, i);
  LeafHyperparams hp;
  hp.tau = 0.7;
  const double sigma2 = 0.9;
  const double sw = 1.5, swr = 0.5 * (0.5 + 1.5 - 0.25);
  const double expected =
      0.5 * std::log(sigma2 / (sigma2 + hp.tau * sw)) + hp.tau * swr * swr / (2 * sigma2 * (sigma2 + hp.tau * sw));
  EXPECT_NEAR(log_marginal(LeafModelType::kConstantGaussian, s, hp, sigma2), expected, 1e-14);
}

TEST(VarianceWeights, Validation) {
  ForestDataset d(CovariateMatrix::numeric(Eigen::MatrixXd::Random(3, 1)));
  EXPECT_EQ(code_of([&] { d.update_variance_weights(std::vector<double>{1, 0, 1}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { d.update_variance_weights(std::vector<double>{1, 1}); }), ErrorCode::kDimension);
  d.update_variance_weights(std::vector<double>{1, 2, 3});
  EXPECT_DOUBLE_EQ(d.variance_weight(2), 3.0);
}

TEST(OutcomeTest, AddSubtract) {
  Outcome o(std::vector<double>{1, 2});
  o.add_vector(std::vector<double>{1, 1});
  EXPECT_EQ(o[0], 2);
  EXPECT_EQ(o[1], 3);
  const std::vector<double> v{0.1, 1e-3};
  o.add_vector(v);
  o.subtract_vector(v);
  EXPECT_NEAR(o[0], 2.0, 1e-12);
  EXPECT_NEAR(o[1], 3.0, 1e-12);
  EXPECT_EQ(code_of([&] { o.add_vector(std::vector<double>{1}); }), ErrorCode::kDimension);
}

TEST(CovariateMatrixTest, RejectsNonFinite) {
  Eigen::MatrixXd v(2, 1);
  v << 1.0, std::nan("");
  EXPECT_EQ(code_of([&] { CovariateMatrix::numeric(v); }), ErrorCode::kInvalidArgument);
}
