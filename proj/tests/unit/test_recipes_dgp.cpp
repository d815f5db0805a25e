#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stochforest/dgp.hpp"
#include "stochforest/recipes.hpp"

using namespace stochforest;

namespace {

double friedman_formula(double x1, double x2, double x3, double x4, double x5) {
  return 10.0 * std::sin(M_PI * x1 * x2) + 20.0 * (x3 - 0.5) * (x3 - 0.5) + 10.0 * x4 + 5.0 * x5;
}

std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace

TEST(Dgp, FriedmanMeanValues) {
  const double row[] = {0.5, 0.5, 0.5, 0.5, 0.5, 0.9};
  EXPECT_NEAR(friedman_mean(row), 10.0 * std::sin(M_PI / 4.0) + 5.0 + 2.5, 1e-12);
  EXPECT_NEAR(friedman_mean(row), 14.5711, 1e-4);
  const double zero[] = {0.0, 0.7, 0.5, 0.0, 0.0};
  EXPECT_EQ(friedman_mean(zero), 0.0);
  const auto sim = dgp_friedman(50, 7, 3.0, 1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(sim.f[i], friedman_formula(sim.x(i, 0), sim.x(i, 1), sim.x(i, 2), sim.x(i, 3), sim.x(i, 4)), 1e-12);
  }
  EXPECT_THROW(dgp_friedman(10, 4, 3.0, 1), Error);
}

TEST(Dgp, FriedmanSignalToNoise) {
  const auto sim = dgp_friedman(5000, 5, 3.0, 2);
  const double ratio = std::sqrt(oracle::variance(minus(sim.y, sim.f)) / oracle::variance(sim.f));
  EXPECT_NEAR(ratio, 1.0 / 3.0, 0.1 / 3.0);
}

TEST(Dgp, CausalFriedman) {
  const auto sim = dgp_causal_friedman(20000, 5, 3);
  double tau_sum = 0.0;
  const double mu_bar = oracle::mean(sim.f);
  for (int i = 0; i < 20000; ++i) {
    EXPECT_EQ((*sim.tau)[i], 5.0 * sim.x(i, 0));
    const double pi = (*sim.propensity)[i];
    ASSERT_GT(pi, 0.0);
    ASSERT_LT(pi, 1.0);
    EXPECT_NEAR(pi, 0.5 * std::erfc(-0.05 * (sim.f[i] - mu_bar) / std::sqrt(2.0)), 1e-15);
    tau_sum += (*sim.tau)[i];
  }
  // E[5 X1] = 2.5; sd of 5 X1 is 1.44, so the SE at n = 20000 is 0.01
  EXPECT_NEAR(tau_sum / 20000.0, 2.5, 0.05);
  std::vector<double> eps(20000);
  for (int i = 0; i < 20000; ++i) eps[i] = sim.y[i] - sim.f[i] - (*sim.tau)[i] * (*sim.z)[i];
  EXPECT_NEAR(oracle::variance(eps), 1.0, 0.05);
}

TEST(Dgp, Robust) {
  const auto exact = dgp_robust(200, 5, 2.0, 0.0, 4);
  EXPECT_EQ(exact.y, exact.f);
  const auto near_gauss = dgp_robust(50000, 5, 200.0, 1.0, 5);
  const auto e = minus(near_gauss.y, near_gauss.f);
  const double m = oracle::mean(e), v = oracle::variance(e);
  double m4 = 0.0;
  for (double x : e) m4 += std::pow(x - m, 4) / e.size();
  // t_200 kurtosis is 3 + 6 / 196
  EXPECT_NEAR(m4 / (v * v), 3.0, 0.15);
  EXPECT_THROW(dgp_robust(10, 5, 0.0, 1.0, 1), Error);
}

TEST(Dgp, LinearTerm) {
  const auto sim = dgp_linear_term(4000, 5, 5.0, 6);
  ASSERT_TRUE(sim.w.has_value());
  std::vector<double> eps(4000);
  for (int i = 0; i < 4000; ++i) eps[i] = sim.y[i] - sim.f[i] - 5.0 * (*sim.w)[i];
  const double noise = (*sim.noise_sd)[0];
  EXPECT_NEAR(std::sqrt(oracle::variance(eps)), noise, 0.05 * noise);
  const auto flat = dgp_linear_term(100, 5, 0.0, 6);
  const double flat_noise = std::sqrt(oracle::variance(flat.f)) / 3.0;
  EXPECT_NEAR((*flat.noise_sd)[0], flat_noise, 1e-12);
}

TEST(Dgp, HeteroskedasticAndGroups) {
  const auto h = dgp_heteroskedastic(100, 5, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ((*h.noise_sd)[i], 1.0 + 2.0 * h.x(i, 0));
  const auto g = dgp_random_intercepts(4, 3, 5, 2.0, 8);
  EXPECT_EQ(*g.group, (std::vector<int>{0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3}));
  EXPECT_EQ(g.group_effect->size(), 4u);
  const auto p = dgp_probit(500, 3, 9);
  for (double v : p.y) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(AdditiveLinear, RecoversGammaWithZeroForest) {
  Rng rng(10);
  const int n = 500;
  Eigen::MatrixXd x(n, 3);
  std::vector<double> w(n), y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform();
    w[i] = rng.uniform();
    y[i] = 5.0 * w[i] + 0.5 * rng.normal();
  }
  RecipeOptions opt;
  opt.num_trees = 50;
  opt.num_burnin = 50;
  opt.num_mcmc = 200;
  opt.seed = 10;
  const auto res = recipe_additive_linear(CovariateMatrix::numeric(x), y, w, opt);
  EXPECT_EQ(res.gamma.size(), 200u);
  EXPECT_EQ(res.forests.num_samples(), 200);
  const double g = oracle::mean(res.gamma);
  EXPECT_GE(g, 4.5);
  EXPECT_LE(g, 5.5);
  EXPECT_LT(res.max_conservation_error, 1e-10);
}

TEST(AdditiveLinear, PointMassPriorPinsGamma) {
  const auto sim = dgp_linear_term(200, 5, 5.0, 11);
  RecipeOptions opt;
  opt.num_trees = 20;
  opt.num_mcmc = 30;
  opt.gamma_tau = 1e-10;
  const auto res = recipe_additive_linear(CovariateMatrix::numeric(sim.x), sim.y, *sim.w, opt);
  for (double g : res.gamma) EXPECT_LT(std::abs(g), 1e-3);
  opt.gamma_tau = 0.0;
  for (double g : recipe_additive_linear(CovariateMatrix::numeric(sim.x), sim.y, *sim.w, opt).gamma) {
    EXPECT_EQ(g, 0.0);
  }
  EXPECT_LT(res.max_conservation_error, 1e-10);
}

TEST(RobustErrors, LargeNuConcentratesPhi) {
  const auto sim = dgp_friedman(300, 5, 3.0, 12);
  RecipeOptions opt;
  opt.num_trees = 50;
  opt.num_burnin = 20;
  opt.num_mcmc = 50;
  opt.nu = 200.0;
  opt.seed = 12;
  const auto res = recipe_robust_errors(CovariateMatrix::numeric(sim.x), sim.y, opt);
  EXPECT_LT(res.max_conservation_error, 1e-10);
  for (int s = 0; s < opt.num_mcmc; ++s) {
    std::vector<double> phi(res.phi.rows());
    for (int i = 0; i < res.phi.rows(); ++i) phi[i] = res.phi(i, s);
    const double rel_sd = std::sqrt(oracle::variance(phi)) / oracle::mean(phi);
    EXPECT_LT(rel_sd, 0.2);
    EXPECT_NEAR(oracle::mean(phi) / res.tau2[s], 1.0, 0.2);
  }
}

TEST(RobustErrors, OutlierGetsLargePhi) {
  auto sim = dgp_friedman(300, 5, 3.0, 13);
  const double noise = (*sim.noise_sd)[0];
  sim.y[17] = sim.f[17] + 25.0 * noise;
  RecipeOptions opt;
  opt.num_trees = 50;
  opt.num_burnin = 50;
  opt.num_mcmc = 100;
  opt.seed = 13;
  const auto res = recipe_robust_errors(CovariateMatrix::numeric(sim.x), sim.y, opt);
  const Eigen::VectorXd phi_mean = res.phi.rowwise().mean();
  std::vector<double> pm(phi_mean.data(), phi_mean.data() + phi_mean.size());
  EXPECT_GE(pm[17], 5.0 * oracle::quantile(pm, 0.5));
}

TEST(RobustErrors, ScaleRecoveredOnRobustDgp) {
  const auto sim = dgp_robust(500, 5, 2.0, 9.0, 14);
  RecipeOptions opt;
  opt.num_trees = 50;
  opt.num_burnin = 50;
  opt.num_mcmc = 150;
  opt.seed = 14;
  const auto res = recipe_robust_errors(CovariateMatrix::numeric(sim.x), sim.y, opt);
  const double s2 = oracle::mean(res.sigma2);
  EXPECT_GT(s2, 9.0 / 2.0);
  EXPECT_LT(s2, 9.0 * 2.0);
  for (std::size_t s = 0; s < res.sigma2.size(); ++s) {
    EXPECT_NEAR(res.sigma2[s], res.a2[s] * res.tau2[s] * res.standardization.scale * res.standardization.scale,
                1e-9 * res.sigma2[s]);
  }
}
