#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "oracles.hpp"
#include "stochforest/dgp.hpp"
#include "stochforest/serialization.hpp"

using namespace stochforest;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(-1);
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

BartModel small_bart(bool with_extras) {
  const auto sim = dgp_random_intercepts(8, 10, 5, 1.0, 3);
  BartParams p;
  p.general.random_seed = 3;
  p.general.num_mcmc = 12;
  p.mean_forest.num_trees = 8;
  BartFitInput in;
  if (with_extras) {
    p.variance_forest.num_trees = 4;
    in.rfx = RfxInput{*sim.group, {}, std::nullopt};
  }
  return bart_fit(CovariateMatrix::numeric(sim.x), sim.y, p, in);
}

}  // namespace

TEST(Serialization, BartRoundTripPredictsIdentically) {
  for (bool extras : {false, true}) {
    const auto model = small_bart(extras);
    const std::string text = bart_model_to_json(model);
    const auto back = bart_model_from_json(text);
    EXPECT_TRUE(back.mean_forests == model.mean_forests);
    EXPECT_EQ(back.sigma2_global, model.sigma2_global);
    EXPECT_EQ(back.preprocessing, model.preprocessing);
    EXPECT_EQ(bart_model_to_json(back), text);

    const auto probe = dgp_random_intercepts(8, 3, 5, 1.0, 77);
    const auto x = CovariateMatrix::numeric(probe.x);
    BartPredictInput pin;
    if (extras) pin.rfx = RfxInput{*probe.group, {}, std::nullopt};
    const auto a = bart_predict(model, x, BartTerm::kYHat, PredictType::kPosterior, pin);
    const auto b = bart_predict(back, x, BartTerm::kYHat, PredictType::kPosterior, pin);
    EXPECT_TRUE((a.array() == b.array()).all());
    if (extras) {
      EXPECT_TRUE((bart_predict(model, x, BartTerm::kVarianceForest, PredictType::kPosterior).array() ==
                   bart_predict(back, x, BartTerm::kVarianceForest, PredictType::kPosterior).array())
                      .all());
    }
  }
}

TEST(Serialization, BcfRoundTripPredictsIdentically) {
  const auto sim = dgp_causal_friedman(80, 5, 4);
  const auto x = CovariateMatrix::numeric(sim.x);
  BcfParams p;
  p.general.random_seed = 4;
  p.general.num_mcmc = 10;
  p.prognostic_forest.num_trees = 10;
  p.treatment_forest.num_trees = 5;
  p.propensity_model.mean_forest.num_trees = 5;
  p.propensity_model.general.num_mcmc = 10;
  const auto model = bcf_fit(x, *sim.z, sim.y, p);
  const std::string text = bcf_model_to_json(model);
  EXPECT_EQ(model_kind_of(text), "bcf");
  const auto back = bcf_model_from_json(text);
  EXPECT_EQ(bcf_model_to_json(back), text);
  ASSERT_NE(back.propensity_model, nullptr);
  BcfPredictInput pin;
  pin.z = *sim.z;
  for (auto term : {BcfTerm::kYHat, BcfTerm::kMu, BcfTerm::kCate}) {
    const auto a = bcf_predict(model, x, term, PredictType::kPosterior, pin);
    const auto b = bcf_predict(back, x, term, PredictType::kPosterior, pin);
    EXPECT_TRUE((a.array() == b.array()).all());
  }
  EXPECT_EQ(code_of([&] { bart_model_from_json(text); }), ErrorCode::kSchema);
}

TEST(Serialization, CategoricalLevelMapsSurvive) {
  const std::string csv = "y,color,size\n1.0,red,0.1\n2.5,blue,0.4\n0.3,red,0.9\n1.7,green,0.2\n2.2,blue,0.5\n"
                          "0.9,green,0.7\n1.1,red,0.3\n2.8,blue,0.8\n";
  const auto data = load_csv_table(parse_csv(csv), "y", std::nullopt, {{"color", CategoricalKind::kUnordered}});
  BartParams p;
  p.general.random_seed = 1;
  p.general.num_mcmc = 5;
  p.mean_forest.num_trees = 3;
  p.mean_forest.min_samples_leaf = 1;
  const auto model = bart_fit(data.covariates, data.outcome, p);
  const auto back = bart_model_from_json(bart_model_to_json(model));
  EXPECT_EQ(back.preprocessing.level_maps, data.covariates.level_maps());
  EXPECT_EQ(back.preprocessing.feature_types, data.covariates.feature_types());
}

TEST(Serialization, TamperedTreesAreRejected) {
  const auto model = small_bart(false);
  auto j = json_detail::parse(bart_model_to_json(model));
  auto& nodes = j["forests"]["mean"]["samples"][0]["trees"][0]["nodes"];
  const int next = static_cast<int>(nodes.size()) + 5;
  nodes.push_back(Json{{"id", next}, {"parent", 0}, {"left", -1}, {"right", -1}, {"feature", -1},
                       {"kind", "leaf"}, {"leaf_values", {0.0}}});
  const std::string orphan = error_text([&] { bart_model_from_json(j.dump()); });
  EXPECT_NE(orphan.find(std::to_string(next)), std::string::npos) << orphan;

  auto k = json_detail::parse(bart_model_to_json(model));
  auto& knodes = k["forests"]["mean"]["samples"][0]["trees"][0]["nodes"];
  knodes.push_back(knodes[0]);
  EXPECT_EQ(code_of([&] { bart_model_from_json(k.dump()); }), ErrorCode::kStructure);

  auto v = json_detail::parse(bart_model_to_json(model));
  v["schema_version"] = "9.9";
  EXPECT_EQ(code_of([&] { bart_model_from_json(v.dump()); }), ErrorCode::kSchema);
  EXPECT_EQ(code_of([&] { model_kind_of(v.dump()); }), ErrorCode::kSchema);
  EXPECT_EQ(code_of([&] { bart_model_from_json("{not json"); }), ErrorCode::kParse);

  auto t = json_detail::parse(bart_model_to_json(model));
  t["traces"]["sigma2_global"].erase(0);
  EXPECT_EQ(code_of([&] { bart_model_from_json(t.dump()); }), ErrorCode::kSchema);
}

TEST(Serialization, MissingChildNamed) {
  const auto model = small_bart(false);
  auto j = json_detail::parse(bart_model_to_json(model));
  // find an internal node and cut one of its children
  for (auto& tree : j["forests"]["mean"]["samples"].back()["trees"]) {
    auto& nodes = tree["nodes"];
    if (nodes.size() < 3) continue;
    const int child = nodes[0]["left"].get<int>();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k]["id"].get<int>() == child) {
        nodes.erase(k);
        break;
      }
    }
    const std::string msg = error_text([&] { bart_model_from_json(j.dump()); });
    EXPECT_NE(msg.find(std::to_string(child)), std::string::npos) << msg;
    return;
  }
  GTEST_SKIP() << "no grown tree in the last sample";
}

TEST(Serialization, WarmStartIndexBounds) {
  const auto sim = dgp_friedman(60, 5, 3.0, 5);
  const auto x = CovariateMatrix::numeric(sim.x);
  BartParams p;
  p.general.random_seed = 5;
  p.general.num_gfr = 20;
  p.general.num_mcmc = 0;
  p.mean_forest.num_trees = 6;
  const auto gfr = bart_model_from_json(bart_model_to_json(bart_fit(x, sim.y, p)));
  ASSERT_EQ(gfr.num_samples(), 20);
  const auto ws = warm_start_from(gfr, 19, x);
  EXPECT_EQ(ws.sample_index, 19);
  EXPECT_EQ(code_of([&] { warm_start_from(gfr, 20, x); }), ErrorCode::kRange);
  const auto narrow = CovariateMatrix::numeric(sim.x.leftCols(3));
  EXPECT_EQ(code_of([&] { warm_start_from(gfr, 0, narrow); }), ErrorCode::kSchema);

  // zero further iterations is rejected, so compare the restored state through the observer
  auto q = p;
  q.general.num_gfr = 0;
  q.general.num_mcmc = 1;
  BartFitInput in;
  in.warm_start = ws;
  bool seen = false;
  in.observer = [&](const SamplerSnapshot& s) {
    if (s.iteration != -1) return;
    seen = true;
    const auto restored = predict_forest(s.mean_forest, s.data);
    const auto stored = predict_forest(gfr.mean_forests.forest(19), s.data);
    EXPECT_EQ(restored, stored);
  };
  bart_fit(x, sim.y, q, in);
  EXPECT_TRUE(seen);
}
