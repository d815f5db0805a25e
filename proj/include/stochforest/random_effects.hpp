#ifndef STOCHFOREST_RANDOM_EFFECTS_HPP_
#define STOCHFOREST_RANDOM_EFFECTS_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochforest/data.hpp"
#include "stochforest/errors.hpp"
#include "stochforest/leaf_models.hpp"
#include "stochforest/rng.hpp"

namespace stochforest {

enum class RfxModelSpec { kInterceptOnly, kInterceptPlusTreatment };

inline const char* to_string(RfxModelSpec spec) {
  return spec == RfxModelSpec::kInterceptOnly ? "intercept_only" : "intercept_plus_treatment";
}

inline RfxModelSpec rfx_model_spec_from_string(const std::string& s) {
  if (s == "intercept_only") return RfxModelSpec::kInterceptOnly;
  if (s == "intercept_plus_treatment") return RfxModelSpec::kInterceptPlusTreatment;
  throw Error(ErrorCode::kInvalidArgument, "unknown random effects model_spec '" + s + "'");
}

inline Eigen::MatrixXd build_rfx_basis(RfxModelSpec spec, int n,
                                       std::optional<std::span<const double>> treatment = std::nullopt) {
  require(n >= 1, ErrorCode::kEmptyInput, "random effects basis needs at least one row");
  if (spec == RfxModelSpec::kInterceptOnly) return Eigen::MatrixXd::Ones(n, 1);
  require(treatment.has_value(), ErrorCode::kInvalidArgument,
          "intercept_plus_treatment random effects need a treatment vector");
  require(static_cast<int>(treatment->size()) == n, ErrorCode::kDimension,
          "treatment length differs from row count");
  Eigen::MatrixXd w(n, 2);
  for (int i = 0; i < n; ++i) {
    w(i, 0) = 1.0;
    w(i, 1) = (*treatment)[i];
  }
  return w;
}

/// Group labels and the per-row random-effect basis w_i.
class RfxDataset {
 public:
  RfxDataset(std::vector<int> group_ids, Eigen::MatrixXd basis, int num_groups = -1)
      : group_ids_(std::move(group_ids)), basis_(std::move(basis)) {
    require(!group_ids_.empty(), ErrorCode::kEmptyInput, "random effects need at least one row");
    require(basis_.rows() == static_cast<Eigen::Index>(group_ids_.size()), ErrorCode::kDimension,
            "random effects basis rows differ from group id count");
    require(basis_.cols() >= 1, ErrorCode::kDimension, "random effects basis needs a column");
    int max_id = -1;
    for (int g : group_ids_) {
      require(g >= 0, ErrorCode::kRange, "group ids must be non-negative");
      max_id = std::max(max_id, g);
    }
    num_groups_ = num_groups < 0 ? max_id + 1 : num_groups;
    std::vector<int> counts(num_groups_, 0);
    for (int g : group_ids_) {
      require(g < num_groups_, ErrorCode::kRange, "group id " + std::to_string(g) + " out of range");
      ++counts[g];
    }
    for (int j = 0; j < num_groups_; ++j) {
      require(counts[j] > 0, ErrorCode::kInvalidArgument,
              "group " + std::to_string(j) + " has no observations");
    }
  }

  int num_observations() const { return static_cast<int>(group_ids_.size()); }
  int num_groups() const { return num_groups_; }
  int num_components() const { return static_cast<int>(basis_.cols()); }
  const std::vector<int>& group_ids() const { return group_ids_; }
  const Eigen::MatrixXd& basis() const { return basis_; }

 private:
  std::vector<int> group_ids_;
  Eigen::MatrixXd basis_;
  int num_groups_ = 0;
};

struct RfxPrior {
  double alpha_mean = 0.0;      // working parameter prior N(alpha_mean, alpha_variance)
  double alpha_variance = 1.0;
  double a_variance = 1.0;      // IG prior on each xi variance component
  double b_variance = 1.0;
};

/// Redundant parameterization beta_j = alpha (.) xi_j.
struct RfxModelState {
  Eigen::MatrixXd xi;                   // k x L
  Eigen::VectorXd alpha;                // k
  Eigen::VectorXd variance_components;  // k
  Eigen::MatrixXd beta;                 // k x L

  RfxModelState() = default;
  RfxModelState(int k, int num_groups)
      : xi(Eigen::MatrixXd::Zero(k, num_groups)),
        alpha(Eigen::VectorXd::Ones(k)),
        variance_components(Eigen::VectorXd::Ones(k)),
        beta(Eigen::MatrixXd::Zero(k, num_groups)) {}

  int num_components() const { return static_cast<int>(xi.rows()); }
  int num_groups() const { return static_cast<int>(xi.cols()); }
  void refresh_beta() { beta = xi.array().colwise() * alpha.array(); }
};

/// One Gibbs sweep: xi_j per group, then alpha, then the variance components.
/// `residual` must exclude the current random-effect fit.
inline void rfx_sample_one_iteration(const RfxDataset& data, std::span<const double> residual,
                                     std::span<const double> variance_weights, RfxModelState& state,
                                     Rng& rng, double sigma2, const RfxPrior& prior = {}) {
  const int n = data.num_observations();
  const int k = data.num_components();
  const int num_groups = data.num_groups();
  require(static_cast<int>(residual.size()) == n, ErrorCode::kDimension,
          "residual length differs from random effects rows");
  require(variance_weights.empty() || static_cast<int>(variance_weights.size()) == n, ErrorCode::kDimension,
          "variance weights length differs from random effects rows");
  require(state.num_components() == k && state.num_groups() == num_groups, ErrorCode::kDimension,
          "random effects state shape differs from dataset");
  require(sigma2 > 0.0, ErrorCode::kInvalidArgument, "sigma2 must be positive");
  const auto& w = data.basis();
  const auto& groups = data.group_ids();
  auto precision_of = [&](int i) {
    return variance_weights.empty() ? 1.0 / sigma2 : 1.0 / (sigma2 * variance_weights[i]);
  };

  auto draw_mvn = [&](const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear) {
    const auto llt = spd_factor(precision, "random effects posterior precision");
    Eigen::VectorXd z(precision.rows());
    for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = rng.normal();
    return Eigen::VectorXd(llt.solve(linear) + llt.matrixU().solve(z));
  };

  // xi_j | alpha: regression of r on (alpha (.) w_i) within group j.
  std::vector<Eigen::MatrixXd> gram(num_groups, Eigen::MatrixXd::Zero(k, k));
  std::vector<Eigen::VectorXd> cross(num_groups, Eigen::VectorXd::Zero(k));
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = state.alpha.cwiseProduct(w.row(i).transpose());
    const double prec = precision_of(i);
    gram[groups[i]].noalias() += prec * x * x.transpose();
    cross[groups[i]].noalias() += (prec * residual[i]) * x;
  }
  for (int j = 0; j < num_groups; ++j) {
    Eigen::MatrixXd p = gram[j];
    p.diagonal() += state.variance_components.cwiseInverse();
    state.xi.col(j) = draw_mvn(p, cross[j]);
  }

  // alpha | xi: regression of r on (xi_g(i) (.) w_i) over all rows.
  Eigen::MatrixXd a_gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd a_cross = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = state.xi.col(groups[i]).cwiseProduct(w.row(i).transpose());
    const double prec = precision_of(i);
    a_gram.noalias() += prec * x * x.transpose();
    a_cross.noalias() += (prec * residual[i]) * x;
  }
  a_gram.diagonal().array() += 1.0 / prior.alpha_variance;
  a_cross.array() += prior.alpha_mean / prior.alpha_variance;
  state.alpha = draw_mvn(a_gram, a_cross);

  for (int c = 0; c < k; ++c) {
    const double ss = state.xi.row(c).squaredNorm();
    state.variance_components[c] =
        rng.inverse_gamma(prior.a_variance + 0.5 * num_groups, prior.b_variance + 0.5 * ss);
  }
  state.refresh_beta();
}

/// Row i gets dot(beta_{g(i)}, w_i).
inline std::vector<double> rfx_predict(const Eigen::MatrixXd& beta, std::span<const int> group_ids,
                                       const Eigen::MatrixXd& basis) {
  require(basis.rows() == static_cast<Eigen::Index>(group_ids.size()), ErrorCode::kDimension,
          "random effects basis rows differ from group id count");
  require(basis.cols() == beta.rows(), ErrorCode::kDimension,
          "random effects basis has " + std::to_string(basis.cols()) + " columns, model has " +
              std::to_string(beta.rows()));
  std::vector<double> out(group_ids.size());
  for (std::size_t i = 0; i < group_ids.size(); ++i) {
    const int g = group_ids[i];
    require(g >= 0 && g < beta.cols(), ErrorCode::kRange,
            "group id " + std::to_string(g) + " was not seen in training");
    out[i] = basis.row(static_cast<Eigen::Index>(i)).dot(beta.col(g));
  }
  return out;
}

/// Retained random-effect draws. beta has shape (k, L, num_samples).
class RfxSamples {
 public:
  RfxSamples() = default;
  RfxSamples(int k, int num_groups, RfxModelSpec spec, std::vector<std::string> group_labels = {})
      : k_(k), num_groups_(num_groups), spec_(spec), group_labels_(std::move(group_labels)) {
    if (group_labels_.empty()) {
      for (int j = 0; j < num_groups; ++j) group_labels_.push_back(std::to_string(j));
    }
    require(static_cast<int>(group_labels_.size()) == num_groups, ErrorCode::kDimension,
            "group label count differs from number of groups");
  }

  int num_components() const { return k_; }
  int num_groups() const { return num_groups_; }
  int num_samples() const { return static_cast<int>(beta_.size()); }
  RfxModelSpec model_spec() const { return spec_; }
  const std::vector<std::string>& group_labels() const { return group_labels_; }

  std::array<int, 3> dims() const { return {k_, num_groups_, num_samples()}; }

  double beta(int component, int group, int sample) const { return beta_.at(sample)(component, group); }
  const Eigen::MatrixXd& beta_sample(int sample) const {
    require(sample >= 0 && sample < num_samples(), ErrorCode::kRange, "rfx sample index out of range");
    return beta_[sample];
  }
  const Eigen::MatrixXd& xi_sample(int sample) const { return xi_.at(sample); }
  const Eigen::VectorXd& alpha_sample(int sample) const { return alpha_.at(sample); }
  const Eigen::VectorXd& variance_sample(int sample) const { return variance_.at(sample); }

  void add(const RfxModelState& state) {
    require(state.num_components() == k_ && state.num_groups() == num_groups_, ErrorCode::kDimension,
            "random effects state shape differs from sample container");
    beta_.push_back(state.beta);
    xi_.push_back(state.xi);
    alpha_.push_back(state.alpha);
    variance_.push_back(state.variance_components);
  }

  RfxModelState state(int sample) const {
    require(sample >= 0 && sample < num_samples(), ErrorCode::kRange, "rfx sample index out of range");
    RfxModelState s;
    s.xi = xi_[sample];
    s.alpha = alpha_[sample];
    s.variance_components = variance_[sample];
    s.beta = beta_[sample];
    return s;
  }

  void append(const RfxSamples& other) {
    require(other.k_ == k_ && other.num_groups_ == num_groups_, ErrorCode::kDimension,
            "cannot append random effect samples of a different shape");
    for (int s = 0; s < other.num_samples(); ++s) add(other.state(s));
  }

  /// Map raw labels to group indices; unseen labels are an error.
  std::vector<int> encode_groups(std::span<const std::string> labels) const {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = std::find(group_labels_.begin(), group_labels_.end(), labels[i]);
      require(it != group_labels_.end(), ErrorCode::kRange,
              "group '" + labels[i] + "' was not seen in training");
      out[i] = static_cast<int>(it - group_labels_.begin());
    }
    return out;
  }

  /// n x num_samples matrix of random-effect predictions.
  Eigen::MatrixXd predict(std::span<const int> group_ids, const Eigen::MatrixXd& basis) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(group_ids.size()), num_samples());
    for (int s = 0; s < num_samples(); ++s) {
      const auto col = rfx_predict(beta_[s], group_ids, basis);
      out.col(s) = Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
    }
    return out;
  }

  friend bool operator==(const RfxSamples& a, const RfxSamples& b) {
    return a.k_ == b.k_ && a.num_groups_ == b.num_groups_ && a.spec_ == b.spec_ &&
           a.group_labels_ == b.group_labels_ && a.beta_ == b.beta_ && a.xi_ == b.xi_ &&
           a.alpha_ == b.alpha_ && a.variance_ == b.variance_;
  }

 private:
  int k_ = 0;
  int num_groups_ = 0;
  RfxModelSpec spec_ = RfxModelSpec::kInterceptOnly;
  std::vector<std::string> group_labels_;
  std::vector<Eigen::MatrixXd> beta_;
  std::vector<Eigen::MatrixXd> xi_;
  std::vector<Eigen::VectorXd> alpha_;
  std::vector<Eigen::VectorXd> variance_;
};

/// Integer group ids from raw labels, in first-occurrence order.
inline std::pair<std::vector<int>, std::vector<std::string>> encode_group_labels(
    std::span<const std::string> labels) {
  std::vector<std::string> levels;
  std::vector<int> ids(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(levels.begin(), levels.end(), labels[i]);
    if (it == levels.end()) {
      levels.push_back(labels[i]);
      ids[i] = static_cast<int>(levels.size() - 1);
    } else {
      ids[i] = static_cast<int>(it - levels.begin());
    }
  }
  return {std::move(ids), std::move(levels)};
}

}  // namespace stochforest

#endif  // STOCHFOREST_RANDOM_EFFECTS_HPP_
