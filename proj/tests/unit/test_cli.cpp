#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "oracles.hpp"
#include "stochforest/serialization.hpp"

using namespace stochforest;

namespace {

const std::string kCli = STOCHFOREST_CLI_PATH;

int cli(const std::string& args) { return oracle::run_cli(kCli, args); }

int count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    if (kCli.empty()) GTEST_SKIP() << "CLI target not built";
    dir = oracle::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::filesystem::path dir;
};

}  // namespace

TEST_F(CliTest, SimulateIsDeterministic) {
  ASSERT_EQ(cli("simulate --dgp friedman --n 500 --p 100 --snr 3 --seed 1 --out " + path("a.csv")), 0);
  ASSERT_EQ(cli("simulate --dgp friedman --n 500 --p 100 --snr 3 --seed 1 --out " + path("b.csv")), 0);
  EXPECT_EQ(oracle::slurp(path("a.csv")), oracle::slurp(path("b.csv")));
  EXPECT_EQ(count_lines(path("a.csv")), 501);
  ASSERT_EQ(cli("simulate --dgp friedman --n 500 --p 100 --snr 3 --seed 2 --out " + path("c.csv")), 0);
  EXPECT_NE(oracle::slurp(path("a.csv")), oracle::slurp(path("c.csv")));
}

TEST_F(CliTest, FitPredictRoundTrip) {
  ASSERT_EQ(cli("simulate --dgp friedman --n 120 --p 6 --seed 3 --out " + path("d.csv")), 0);
  const std::string fit = "fit --model bart --data " + path("d.csv") +
                          " --outcome y --exclude f_true,noise_sd --num-trees 10 --num-mcmc 15 --seed 5";
  ASSERT_EQ(cli(fit + " --out " + path("m1.json") + " --trace " + path("t1.csv")), 0);
  ASSERT_EQ(cli(fit + " --out " + path("m2.json") + " --trace " + path("t2.csv")), 0);
  EXPECT_EQ(oracle::slurp(path("m1.json")), oracle::slurp(path("m2.json")));
  EXPECT_EQ(oracle::slurp(path("t1.csv")), oracle::slurp(path("t2.csv")));
  EXPECT_EQ(count_lines(path("t1.csv")), 16);

  ASSERT_EQ(cli("predict --model " + path("m1.json") + " --data " + path("d.csv") +
                " --terms y_hat --type mean --out " + path("p.csv")),
            0);
  EXPECT_EQ(count_lines(path("p.csv")), 121);
  ASSERT_EQ(cli("predict --model " + path("m1.json") + " --data " + path("d.csv") +
                " --terms y_hat --type posterior --out " + path("pp.csv")),
            0);
  std::ifstream in(path("pp.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.substr(0, 16), "y_hat_0,y_hat_1,");
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 14);

  ASSERT_EQ(cli("resume --model " + path("m1.json") + " --data " + path("d.csv") +
                " --outcome y --warmstart-index 3 --num-mcmc 4 --seed 9 --out " + path("r.json")),
            0);
  EXPECT_EQ(bart_model_from_json(oracle::slurp(path("r.json"))).num_samples(), 4);
  EXPECT_EQ(cli("resume --model " + path("m1.json") + " --data " + path("d.csv") +
                " --outcome y --warmstart-index 15 --out " + path("r2.json")),
            2);
}

TEST_F(CliTest, ExitCodes) {
  ASSERT_EQ(cli("simulate --dgp friedman --n 30 --p 5 --seed 1 --out " + path("d.csv")), 0);
  EXPECT_EQ(cli("fit --data " + path("missing.csv") + " --out " + path("m.json")), 2);
  EXPECT_EQ(cli("fit --data " + path("d.csv") + " --outcome nope --out " + path("m.json")), 2);
  EXPECT_EQ(cli("simulate --dgp nope --out " + path("x.csv")), 2);
  EXPECT_EQ(cli("simulate --dgp friedman --p 3 --out " + path("x.csv")), 2);
  EXPECT_EQ(cli("fit --data " + path("d.csv") + " --num-trees 3 --num-mcmc 2 --out " + path("no_dir/m.json")), 1);
  std::ofstream(path("bad.csv")) << "y,X1\n1,abc\n2,3\n";
  EXPECT_EQ(cli("fit --data " + path("bad.csv") + " --out " + path("m.json")), 2);
  EXPECT_EQ(cli("bogus"), 2);
}

TEST_F(CliTest, KeepVarsTauRestrictsTreatmentTrees) {
  ASSERT_EQ(cli("simulate --dgp causal_friedman --n 200 --p 6 --seed 4 --out " + path("c.csv")), 0);
  ASSERT_EQ(cli("fit --model bcf --data " + path("c.csv") +
                " --outcome y --treatment z --exclude mu_true,tau_true,pi_true,noise_sd --keep-vars-tau X1,X2"
                " --num-trees 10 --num-trees-tau 10 --num-mcmc 20 --seed 4 --out " + path("m.json")),
            0);
  const auto model = bcf_model_from_json(oracle::slurp(path("m.json")));
  std::set<int> used;
  for (const auto& f : model.tau_forests.forests()) {
    for (const auto& t : f.trees()) {
      for (const auto& nd : t.raw_nodes()) {
        if (!nd.deleted && !nd.is_leaf()) used.insert(nd.rule.feature);
      }
    }
  }
  EXPECT_FALSE(used.empty());
  for (int j : used) EXPECT_TRUE(j == 0 || j == 1) << "split on column " << j;
}

TEST_F(CliTest, ConfigFileMatchesFlags) {
  std::ofstream(path("cfg.ini")) << "[simulate]\ndgp = \"heteroskedastic\"\nn = 40\np = 6\nseed = 4\n";
  ASSERT_EQ(cli("--config " + path("cfg.ini") + " simulate --out " + path("a.csv")), 0);
  ASSERT_EQ(cli("simulate --dgp heteroskedastic --n 40 --p 6 --seed 4 --out " + path("b.csv")), 0);
  EXPECT_EQ(oracle::slurp(path("a.csv")), oracle::slurp(path("b.csv")));
}

TEST_F(CliTest, ChainsAreDeterministic) {
  ASSERT_EQ(cli("simulate --dgp friedman --n 80 --p 5 --seed 6 --out " + path("d.csv")), 0);
  const std::string fit = "fit --data " + path("d.csv") +
                          " --exclude f_true,noise_sd --num-trees 5 --num-mcmc 5 --chains 3 --seed 6";
  ASSERT_EQ(cli(fit + " --out " + path("a.json") + " --trace " + path("a.csv")), 0);
  ASSERT_EQ(cli(fit + " --out " + path("b.json") + " --trace " + path("b.csv")), 0);
  EXPECT_EQ(oracle::slurp(path("a.json")), oracle::slurp(path("b.json")));
  EXPECT_EQ(oracle::slurp(path("a.csv")), oracle::slurp(path("b.csv")));
  EXPECT_EQ(bart_model_from_json(oracle::slurp(path("a.json"))).num_samples(), 15);
}

TEST_F(CliTest, DemoRecipes) {
  EXPECT_EQ(cli("demo additive-linear --n 100 --num-trees 10 --num-mcmc 5 --seed 1 --out " + path("a.csv")), 0);
  EXPECT_EQ(count_lines(path("a.csv")), 6);
  EXPECT_EQ(cli("demo robust-errors --n 100 --num-trees 10 --num-mcmc 5 --seed 1 --out " + path("r.csv")), 0);
  EXPECT_EQ(count_lines(path("r.csv")), 6);
  EXPECT_EQ(cli("demo nope"), 2);
}
