#ifndef STOCHFOREST_DGP_HPP_
#define STOCHFOREST_DGP_HPP_

// Simulated datasets used by the demos, the CLI `simulate` command and the
// test suite.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/rng.hpp"

namespace stochforest {

struct SimulatedData {
  Eigen::MatrixXd x;
  std::vector<double> y;
  std::vector<double> f;  // conditional mean (mu for causal data)
  std::optional<std::vector<double>> z;
  std::optional<std::vector<double>> tau;
  std::optional<std::vector<double>> propensity;
  std::optional<std::vector<double>> w;
  std::optional<std::vector<double>> noise_sd;
  std::optional<std::vector<int>> group;
  std::optional<std::vector<double>> group_effect;

  int num_rows() const { return static_cast<int>(x.rows()); }
};

inline double friedman_mean(const double* row) {
  return 10.0 * std::sin(std::numbers::pi * row[0] * row[1]) + 20.0 * (row[2] - 0.5) * (row[2] - 0.5) +
         10.0 * row[3] + 5.0 * row[4];
}

inline double friedman_mean(const Eigen::MatrixXd& x, int i) {
  const double r[5] = {x(i, 0), x(i, 1), x(i, 2), x(i, 3), x(i, 4)};
  return friedman_mean(r);
}

namespace dgp_detail {

inline void check_shape(int n, int p, int min_p = 5) {
  require(n >= 1, ErrorCode::kInvalidArgument, "n must be >= 1");
  require(p >= min_p, ErrorCode::kInvalidArgument, "p must be >= " + std::to_string(min_p));
}

inline Eigen::MatrixXd uniform_matrix(int n, int p, Rng& rng) {
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.uniform();
  }
  return x;
}

inline std::vector<double> friedman_column(const Eigen::MatrixXd& x) {
  std::vector<double> f(x.rows());
  for (int i = 0; i < x.rows(); ++i) f[i] = friedman_mean(x, i);
  return f;
}

inline double sd(const std::vector<double>& v) { return v.size() < 2 ? 0.0 : std::sqrt(sample_variance(v)); }

}  // namespace dgp_detail

/// X ~ U(0,1)^{n x p}, y = f(X) + N(0, (sd(f) / snr)^2).
inline SimulatedData dgp_friedman(int n, int p, double snr, std::uint64_t seed) {
  dgp_detail::check_shape(n, p);
  require(snr > 0.0, ErrorCode::kInvalidArgument, "snr must be positive");
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f = dgp_detail::friedman_column(d.x);
  const double noise = dgp_detail::sd(d.f) / snr;
  d.y.resize(n);
  for (int i = 0; i < n; ++i) d.y[i] = d.f[i] + noise * rng.normal();
  d.noise_sd = std::vector<double>(n, noise);
  return d;
}

/// mu = Friedman mean, pi = Phi(0.05 (mu - mean mu)), Z ~ Bernoulli(pi),
/// tau = 5 x1, y = mu + tau Z + N(0, 1).
inline SimulatedData dgp_causal_friedman(int n, int p, std::uint64_t seed) {
  dgp_detail::check_shape(n, p);
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f = dgp_detail::friedman_column(d.x);
  const double mu_bar = sample_mean(d.f);
  std::vector<double> pi(n), z(n), tau(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    pi[i] = normal_cdf(0.05 * (d.f[i] - mu_bar));
    z[i] = rng.bernoulli(pi[i]) ? 1.0 : 0.0;
    tau[i] = 5.0 * d.x(i, 0);
  }
  for (int i = 0; i < n; ++i) d.y[i] = d.f[i] + tau[i] * z[i] + rng.normal();
  d.z = std::move(z);
  d.tau = std::move(tau);
  d.propensity = std::move(pi);
  d.noise_sd = std::vector<double>(n, 1.0);
  return d;
}

/// Friedman mean plus sqrt(sigma2) * t_nu errors.
inline SimulatedData dgp_robust(int n, int p, double nu, double sigma2, std::uint64_t seed) {
  dgp_detail::check_shape(n, p);
  require(nu > 0.0, ErrorCode::kInvalidArgument, "nu must be positive");
  require(sigma2 >= 0.0, ErrorCode::kInvalidArgument, "sigma2 must be >= 0");
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f = dgp_detail::friedman_column(d.x);
  d.y.resize(n);
  const double s = std::sqrt(sigma2);
  for (int i = 0; i < n; ++i) d.y[i] = d.f[i] + (sigma2 > 0.0 ? s * rng.student_t(nu) : 0.0);
  return d;
}

/// Friedman data with an extra linear term gamma * W, W ~ U(0,1). Noise is
/// set from the Friedman mean with snr = 3.
inline SimulatedData dgp_linear_term(int n, int p, double gamma, std::uint64_t seed, double snr = 3.0) {
  dgp_detail::check_shape(n, p);
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f = dgp_detail::friedman_column(d.x);
  const double noise = dgp_detail::sd(d.f) / snr;
  std::vector<double> w(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double eps = noise * rng.normal();
    w[i] = rng.uniform();
    d.y[i] = gamma * w[i] + d.f[i] + eps;
  }
  d.w = std::move(w);
  d.noise_sd = std::vector<double>(n, noise);
  return d;
}

/// y = f + N(0, (1 + 2 x1)^2).
inline SimulatedData dgp_heteroskedastic(int n, int p, std::uint64_t seed) {
  dgp_detail::check_shape(n, p);
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f = dgp_detail::friedman_column(d.x);
  std::vector<double> sd(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    sd[i] = 1.0 + 2.0 * d.x(i, 0);
    d.y[i] = d.f[i] + sd[i] * rng.normal();
  }
  d.noise_sd = std::move(sd);
  return d;
}

/// Friedman data with group random intercepts N(0, group_sd^2) and unit
/// noise; groups are assigned round-robin.
inline SimulatedData dgp_random_intercepts(int num_groups, int per_group, int p, double group_sd, std::uint64_t seed) {
  require(num_groups >= 1 && per_group >= 1, ErrorCode::kInvalidArgument, "need >= 1 group and >= 1 row per group");
  const int n = num_groups * per_group;
  dgp_detail::check_shape(n, p);
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f = dgp_detail::friedman_column(d.x);
  std::vector<double> effect(num_groups);
  for (double& e : effect) e = group_sd * rng.normal();
  std::vector<int> g(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    g[i] = i % num_groups;
    d.y[i] = d.f[i] + effect[g[i]] + rng.normal();
  }
  d.group = std::move(g);
  d.group_effect = std::move(effect);
  d.noise_sd = std::vector<double>(n, 1.0);
  return d;
}

/// Binary outcome: y = 1 when x1 + x2 + small noise > 1.
inline SimulatedData dgp_probit(int n, int p, std::uint64_t seed, double noise_sd = 0.1) {
  dgp_detail::check_shape(n, p, 2);
  Rng rng(seed);
  SimulatedData d;
  d.x = dgp_detail::uniform_matrix(n, p, rng);
  d.f.resize(n);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.f[i] = normal_cdf((d.x(i, 0) + d.x(i, 1) - 1.0) / noise_sd);
    d.y[i] = d.x(i, 0) + d.x(i, 1) - 1.0 + noise_sd * rng.normal() > 0.0 ? 1.0 : 0.0;
  }
  return d;
}

inline std::vector<std::string> default_column_names(int p) {
  std::vector<std::string> names;
  for (int j = 0; j < p; ++j) names.push_back("X" + std::to_string(j + 1));
  return names;
}

}  // namespace stochforest

#endif  // STOCHFOREST_DGP_HPP_
