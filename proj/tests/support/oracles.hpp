#ifndef STOCHFOREST_TESTS_ORACLES_HPP_
#define STOCHFOREST_TESTS_ORACLES_HPP_

// Independent reference computations shared by the unit and acceptance
// suites. Nothing here calls the library's closed forms.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stochforest/tree.hpp"

namespace oracle {

/// log of the integral of exp(logf) over (lo, hi), shifted by the maximum
/// of logf on a coarse grid to stay in range.
inline double log_integrate(const std::function<double(double)>& logf, double lo, double hi, double shift_lo,
                            double shift_hi) {
  double shift = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 2000; ++k) shift = std::max(shift, logf(shift_lo + (shift_hi - shift_lo) * k / 2000.0));
  auto f = [&](double t) { return std::exp(logf(t) - shift); };
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 25, 1e-13, &err);
  return shift + std::log(v);
}

/// Gaussian leaf with optional scalar basis b:
///   log int prod_i N(r_i | b_i mu, sigma2 / w_i) / N(r_i | 0, sigma2 / w_i) N(mu | 0, tau) dmu
inline double gaussian_leaf(const std::vector<double>& r, const std::vector<double>& w,
                            const std::vector<double>& b, double tau, double sigma2) {
  auto logf = [&](double mu) {
    double ll = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double bi = b.empty() ? 1.0 : b[i];
      ll += -w[i] * ((r[i] - bi * mu) * (r[i] - bi * mu) - r[i] * r[i]) / (2.0 * sigma2);
    }
    return ll - 0.5 * mu * mu / tau - 0.5 * std::log(2.0 * std::numbers::pi * tau);
  };
  const double span = 40.0 * std::sqrt(tau) + 40.0;
  return log_integrate(logf, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                       -span, span);
}

/// Two-dimensional regression leaf, nested quadrature over (beta_1, beta_2):
///   log int exp(sum_i w_i (r_i psi_i'b - (psi_i'b)^2 / 2) / sigma2) N(b | 0, S0) db
inline double regression_leaf_2d(const std::vector<double>& r, const std::vector<double>& w,
                                 const Eigen::MatrixXd& psi, const Eigen::Matrix2d& s0, double sigma2) {
  const Eigen::Matrix2d s0_inv = s0.inverse();
  const double log_norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(s0.determinant());
  auto log_joint = [&](double b1, double b2) {
    double ll = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double fit = psi(i, 0) * b1 + psi(i, 1) * b2;
      ll += w[i] * (r[i] * fit - 0.5 * fit * fit) / sigma2;
    }
    const Eigen::Vector2d b(b1, b2);
    return ll - 0.5 * b.dot(s0_inv * b) + log_norm;
  };
  const double span = 12.0 * std::sqrt(s0.diagonal().maxCoeff()) + 12.0;
  auto inner = [&](double b1) {
    return std::exp(log_integrate([&](double b2) { return log_joint(b1, b2); }, -span, span, -span, span));
  };
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(inner, -span, span, 20, 1e-12, &err);
  return std::log(v);
}

/// Variance leaf: r_i ~ N(0, sigma2 s / w_i), s ~ IG(a, b); integrated over
/// u = log s. Gaussian constants (2 pi sigma2 / w_i)^{-1/2} are dropped.
inline double variance_leaf(const std::vector<double>& r, const std::vector<double>& w, double a, double b,
                            double sigma2) {
  double ss = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) ss += w[i] * r[i] * r[i];
  const double n = static_cast<double>(r.size());
  auto logf = [&](double u) {
    const double s = std::exp(u);
    const double log_prior = a * std::log(b) - std::lgamma(a) - (a + 1.0) * u - b / s;
    return log_prior - 0.5 * n * u - ss / (2.0 * sigma2 * s) + u;  // + u: Jacobian ds = s du
  };
  return log_integrate(logf, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), -30.0,
                       30.0);
}

/// Log prior of a tree by recursion from the root, with the depth of every
/// node recomputed from the parent chain.
inline double tree_log_prior_recursive(const stochforest::Tree& t, int id, int depth, double alpha, double beta) {
  const double p = alpha * std::pow(1.0 + depth, -beta);
  if (t.is_leaf(id)) return std::log(1.0 - p);
  return std::log(p) + tree_log_prior_recursive(t, t.left(id), depth + 1, alpha, beta) +
         tree_log_prior_recursive(t, t.right(id), depth + 1, alpha, beta);
}

// --- statistics helpers -------------------------------------------------------

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// Type-7 sample quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Area under the ROC curve by pairwise comparison.
inline double auc(const std::vector<double>& score, const std::vector<double>& label) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (label[i] != 1.0) continue;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (label[j] != 0.0) continue;
      pairs += 1.0;
      wins += score[i] > score[j] ? 1.0 : (score[i] == score[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

inline std::vector<double> to_vector(const Eigen::MatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

// --- files and processes -------------------------------------------------------

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stochforest_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Run the CLI binary with arguments; returns its exit status.
inline int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace oracle

#endif  // STOCHFOREST_TESTS_ORACLES_HPP_
