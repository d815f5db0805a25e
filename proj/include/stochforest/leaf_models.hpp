#ifndef STOCHFOREST_LEAF_MODELS_HPP_
#define STOCHFOREST_LEAF_MODELS_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "stochforest/errors.hpp"
#include "stochforest/rng.hpp"

namespace stochforest {

enum class LeafModelType : int {
  kConstantGaussian = 0,
  kUnivariateRegression = 1,
  kMultivariateRegression = 2,
  kLogLinearVariance = 3,
};

inline LeafModelType leaf_model_from_code(int code) {
  require(code >= 0 && code <= 3, ErrorCode::kInvalidArgument,
          "leaf model type code must be in 0..3, got " + std::to_string(code));
  return static_cast<LeafModelType>(code);
}

inline int to_code(LeafModelType t) { return static_cast<int>(t); }

inline bool uses_basis(LeafModelType t) {
  return t == LeafModelType::kUnivariateRegression || t == LeafModelType::kMultivariateRegression;
}

struct LeafHyperparams {
  double tau = 1.0;        // scalar leaf prior variance (types 0 and 1)
  Eigen::MatrixXd sigma0;  // leaf prior covariance (type 2)
  double a_leaf = 3.0;     // IG shape: variance leaves, or the prior on tau
  double b_leaf = 2.0;     // IG scale
};

/// Read-only view of what a leaf model needs per observation. `precision`
/// holds w_i (reciprocal variance weights); an empty span means w_i = 1.
struct LeafObservationView {
  std::span<const double> residual;
  std::span<const double> precision;
  const Eigen::MatrixXd* basis = nullptr;

  double weight(int i) const { return precision.empty() ? 1.0 : precision[i]; }
};

/// Additive per-leaf accumulators.
///
///   type 0: precision_sum = sum w,      response_sum = sum w r
///   type 1: precision_sum = sum w b^2,  response_sum = sum w b r
///   type 2: gram = sum w psi psi',      cross = sum w psi r
///   type 3: precision_sum = sum w,      response_sum = sum w r^2
class LeafSuffStats {
 public:
  LeafSuffStats() = default;
  explicit LeafSuffStats(LeafModelType type, int dim = 1) : type_(type) {
    if (type == LeafModelType::kMultivariateRegression) {
      gram = Eigen::MatrixXd::Zero(dim, dim);
      cross = Eigen::VectorXd::Zero(dim);
    }
  }

  LeafModelType type() const { return type_; }
  bool empty() const { return count == 0; }

  void add(const LeafObservationView& obs, int i) {
    const double w = obs.weight(i);
    const double r = obs.residual[i];
    ++count;
    switch (type_) {
      case LeafModelType::kConstantGaussian:
        precision_sum += w;
        response_sum += w * r;
        break;
      case LeafModelType::kUnivariateRegression: {
        const double b = (*obs.basis)(i, 0);
        precision_sum += w * b * b;
        response_sum += w * b * r;
        break;
      }
      case LeafModelType::kMultivariateRegression: {
        const auto psi = obs.basis->row(i).transpose();
        gram.noalias() += w * psi * psi.transpose();
        cross.noalias() += (w * r) * psi;
        break;
      }
      case LeafModelType::kLogLinearVariance:
        precision_sum += w;
        response_sum += w * r * r;
        break;
    }
  }

  LeafSuffStats& operator+=(const LeafSuffStats& o) {
    count += o.count;
    precision_sum += o.precision_sum;
    response_sum += o.response_sum;
    if (type_ == LeafModelType::kMultivariateRegression) {
      gram += o.gram;
      cross += o.cross;
    }
    return *this;
  }

  LeafSuffStats& operator-=(const LeafSuffStats& o) {
    count -= o.count;
    precision_sum -= o.precision_sum;
    response_sum -= o.response_sum;
    if (type_ == LeafModelType::kMultivariateRegression) {
      gram -= o.gram;
      cross -= o.cross;
    }
    return *this;
  }

  friend LeafSuffStats operator+(LeafSuffStats a, const LeafSuffStats& b) { return a += b; }
  friend LeafSuffStats operator-(LeafSuffStats a, const LeafSuffStats& b) { return a -= b; }

  friend bool operator==(const LeafSuffStats& a, const LeafSuffStats& b) {
    return a.type_ == b.type_ && a.count == b.count && a.precision_sum == b.precision_sum &&
           a.response_sum == b.response_sum && a.gram == b.gram && a.cross == b.cross;
  }

  int count = 0;
  double precision_sum = 0.0;
  double response_sum = 0.0;
  Eigen::MatrixXd gram;
  Eigen::VectorXd cross;

 private:
  LeafModelType type_ = LeafModelType::kConstantGaussian;
};

inline void check_basis(LeafModelType type, const LeafObservationView& obs) {
  if (!uses_basis(type)) return;
  require(obs.basis != nullptr, ErrorCode::kInvalidArgument,
          "leaf model type " + std::to_string(to_code(type)) + " requires a basis");
  require(obs.basis->rows() == static_cast<Eigen::Index>(obs.residual.size()), ErrorCode::kDimension,
          "basis rows do not match residual length");
}

/// Per-leaf statistics for an assignment of rows to leaves. Every id in
/// `leaf_ids` gets an entry, empty leaves included.
inline std::map<int, LeafSuffStats> accumulate(LeafModelType type, std::span<const int> assignment,
                                               const LeafObservationView& obs,
                                               std::span<const int> leaf_ids) {
  require(assignment.size() == obs.residual.size(), ErrorCode::kDimension,
          "leaf assignment must cover every row");
  check_basis(type, obs);
  const int dim = obs.basis ? static_cast<int>(obs.basis->cols()) : 1;
  std::map<int, LeafSuffStats> stats;
  for (int id : leaf_ids) stats.emplace(id, LeafSuffStats(type, dim));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    auto it = stats.find(assignment[i]);
    if (it == stats.end()) it = stats.emplace(assignment[i], LeafSuffStats(type, dim)).first;
    it->second.add(obs, static_cast<int>(i));
  }
  return stats;
}

/// Cholesky factor of an SPD matrix; retries once with 1e-10 * trace jitter.
inline Eigen::LLT<Eigen::MatrixXd> spd_factor(Eigen::MatrixXd m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * m.trace();
  m.diagonal().array() += jitter;
  llt.compute(m);
  require(llt.info() == Eigen::Success && jitter > 0.0, ErrorCode::kNumeric,
          std::string(what) + " is not symmetric positive definite");
  return llt;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Log integrated likelihood of a leaf, dropping the factor prod_i N(r_i | 0,
/// sigma2 / w_i) that every candidate partition of the same node shares.
/// With that convention an empty leaf contributes exactly 0.
inline double log_marginal(LeafModelType type, const LeafSuffStats& s, const LeafHyperparams& hp,
                           double sigma2) {
  require(sigma2 > 0.0, ErrorCode::kInvalidArgument, "sigma2 must be positive");
  switch (type) {
    case LeafModelType::kConstantGaussian:
    case LeafModelType::kUnivariateRegression: {
      const double denom = sigma2 + hp.tau * s.precision_sum;
      return 0.5 * std::log(sigma2 / denom) +
             hp.tau * s.response_sum * s.response_sum / (2.0 * sigma2 * denom);
    }
    case LeafModelType::kMultivariateRegression: {
      if (s.empty()) return 0.0;
      const auto prior = spd_factor(hp.sigma0, "leaf prior covariance");
      const Eigen::MatrixXd prior_precision =
          prior.solve(Eigen::MatrixXd::Identity(hp.sigma0.rows(), hp.sigma0.cols()));
      const auto post = spd_factor(prior_precision + s.gram / sigma2, "leaf posterior precision");
      const Eigen::VectorXd c = s.cross / sigma2;
      return -0.5 * (log_det(prior) + log_det(post)) + 0.5 * c.dot(post.solve(c));
    }
    case LeafModelType::kLogLinearVariance: {
      const double shape = hp.a_leaf + 0.5 * s.count;
      const double rate = hp.b_leaf + 0.5 * s.response_sum / sigma2;
      return hp.a_leaf * std::log(hp.b_leaf) - std::lgamma(hp.a_leaf) + std::lgamma(shape) -
             shape * std::log(rate);
    }
  }
  return 0.0;
}

/// Draw from the conjugate posterior of a leaf parameter. Variance leaves
/// return the log of an inverse-gamma draw.
inline std::vector<double> sample_leaf_params(LeafModelType type, const LeafSuffStats& s,
                                              const LeafHyperparams& hp, double sigma2, Rng& rng) {
  require(sigma2 > 0.0, ErrorCode::kInvalidArgument, "sigma2 must be positive");
  switch (type) {
    case LeafModelType::kConstantGaussian:
    case LeafModelType::kUnivariateRegression: {
      const double denom = sigma2 + hp.tau * s.precision_sum;
      const double mean = hp.tau * s.response_sum / denom;
      const double var = sigma2 * hp.tau / denom;
      return {rng.normal(mean, std::sqrt(var))};
    }
    case LeafModelType::kMultivariateRegression: {
      const Eigen::Index d = hp.sigma0.rows();
      const auto prior = spd_factor(hp.sigma0, "leaf prior covariance");
      Eigen::MatrixXd precision = prior.solve(Eigen::MatrixXd::Identity(d, d));
      Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
      if (!s.empty()) {
        precision += s.gram / sigma2;
        c = s.cross / sigma2;
      }
      const auto post = spd_factor(precision, "leaf posterior precision");
      const Eigen::VectorXd mean = post.solve(c);
      Eigen::VectorXd z(d);
      for (Eigen::Index k = 0; k < d; ++k) z[k] = rng.normal();
      // precision = L L'  =>  L'^{-1} z has covariance precision^{-1}
      const Eigen::VectorXd draw = mean + post.matrixU().solve(z);
      return std::vector<double>(draw.data(), draw.data() + d);
    }
    case LeafModelType::kLogLinearVariance: {
      const double shape = hp.a_leaf + 0.5 * s.count;
      const double scale = hp.b_leaf + 0.5 * s.response_sum / sigma2;
      return {std::log(rng.inverse_gamma(shape, scale))};
    }
  }
  return {};
}

/// Conjugate update of the scalar leaf prior variance from all leaf values.
inline double sample_leaf_scale(std::span<const double> leaf_values, double a_leaf, double b_leaf, Rng& rng) {
  require(a_leaf > 0.0 && b_leaf > 0.0, ErrorCode::kInvalidArgument, "leaf scale prior must be positive");
  double ss = 0.0;
  for (double mu : leaf_values) ss += mu * mu;
  return rng.inverse_gamma(a_leaf + 0.5 * static_cast<double>(leaf_values.size()), b_leaf + 0.5 * ss);
}

}  // namespace stochforest

#endif  // STOCHFOREST_LEAF_MODELS_HPP_
