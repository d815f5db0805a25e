#ifndef STOCHFOREST_DATA_HPP_
#define STOCHFOREST_DATA_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stochforest/errors.hpp"

namespace stochforest {

/// Integer codes 0 and 1 follow the low-level forest config convention;
/// 2 marks unordered factors, whose splits are level subsets.
enum class FeatureType : int {
  kNumeric = 0,
  kOrderedCategorical = 1,
  kUnorderedCategorical = 2,
};

inline FeatureType feature_type_from_code(int code) {
  require(code >= 0 && code <= 2, ErrorCode::kInvalidArgument,
          "feature type code must be 0, 1 or 2, got " + std::to_string(code));
  return static_cast<FeatureType>(code);
}

inline int to_code(FeatureType t) { return static_cast<int>(t); }

inline bool is_categorical(FeatureType t) { return t != FeatureType::kNumeric; }

/// Maximum number of distinct labels accepted for a categorical column.
inline constexpr std::size_t kMaxCategoricalLevels = 1024;

/// Immutable n x p design matrix plus per-column metadata.
///
/// Categorical columns hold integer level indices. `level_labels(j)` maps an
/// index back to the raw label when the column was built from text.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;

  CovariateMatrix(Eigen::MatrixXd values, std::vector<FeatureType> feature_types,
                  std::vector<std::string> column_names = {},
                  std::vector<std::vector<std::string>> level_maps = {})
      : values_(std::move(values)),
        feature_types_(std::move(feature_types)),
        column_names_(std::move(column_names)),
        level_maps_(std::move(level_maps)) {
    const auto p = values_.cols();
    require(values_.rows() >= 1 && p >= 1, ErrorCode::kEmptyInput,
            "covariate matrix must have at least one row and one column");
    require(static_cast<Eigen::Index>(feature_types_.size()) == p, ErrorCode::kDimension,
            "feature_types length " + std::to_string(feature_types_.size()) +
                " does not match column count " + std::to_string(p));
    if (column_names_.empty()) {
      for (Eigen::Index j = 0; j < p; ++j) column_names_.push_back("X" + std::to_string(j + 1));
    }
    require(static_cast<Eigen::Index>(column_names_.size()) == p, ErrorCode::kDimension,
            "column_names length does not match column count");
    if (level_maps_.empty()) level_maps_.resize(p);
    require(static_cast<Eigen::Index>(level_maps_.size()) == p, ErrorCode::kDimension,
            "level_maps length does not match column count");
    num_levels_.assign(p, 0);
    for (Eigen::Index j = 0; j < p; ++j) {
      const bool categorical = is_categorical(feature_types_[j]);
      int max_level = -1;
      for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        const double v = values_(i, j);
        require(std::isfinite(v), ErrorCode::kInvalidArgument,
                "non-finite covariate at row " + std::to_string(i) + ", column '" +
                    column_names_[j] + "'");
        if (categorical) {
          require(v >= 0.0 && v == std::floor(v), ErrorCode::kInvalidArgument,
                  "categorical column '" + column_names_[j] +
                      "' must hold non-negative integer levels");
          max_level = std::max(max_level, static_cast<int>(v));
        }
      }
      if (categorical) {
        const int declared = static_cast<int>(level_maps_[j].size());
        if (declared > 0) {
          require(max_level < declared, ErrorCode::kRange,
                  "level index out of range for column '" + column_names_[j] + "'");
          num_levels_[j] = declared;
        } else {
          num_levels_[j] = max_level + 1;
        }
      }
    }
  }

  static CovariateMatrix numeric(Eigen::MatrixXd values, std::vector<std::string> names = {}) {
    std::vector<FeatureType> types(values.cols(), FeatureType::kNumeric);
    return CovariateMatrix(std::move(values), std::move(types), std::move(names));
  }

  int num_rows() const { return static_cast<int>(values_.rows()); }
  int num_columns() const { return static_cast<int>(values_.cols()); }
  double operator()(int i, int j) const { return values_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }

  FeatureType feature_type(int j) const { return feature_types_[j]; }
  const std::vector<FeatureType>& feature_types() const { return feature_types_; }
  const std::vector<std::string>& column_names() const { return column_names_; }
  const std::vector<std::vector<std::string>>& level_maps() const { return level_maps_; }
  const std::vector<std::string>& level_labels(int j) const { return level_maps_[j]; }
  int num_levels(int j) const { return num_levels_[j]; }

  int column_index(const std::string& name) const {
    auto it = std::find(column_names_.begin(), column_names_.end(), name);
    return it == column_names_.end() ? -1 : static_cast<int>(it - column_names_.begin());
  }

  const std::string& decode_level(int j, int level) const {
    require(level >= 0 && level < static_cast<int>(level_maps_[j].size()), ErrorCode::kRange,
            "no label for level " + std::to_string(level) + " in column '" + column_names_[j] + "'");
    return level_maps_[j][level];
  }

  /// Copy with an extra numeric column (used to append propensity scores).
  CovariateMatrix with_appended_column(const std::string& name, std::span<const double> column) const {
    require(static_cast<int>(column.size()) == num_rows(), ErrorCode::kDimension,
            "appended column length mismatch");
    Eigen::MatrixXd v(values_.rows(), values_.cols() + 1);
    v.leftCols(values_.cols()) = values_;
    for (int i = 0; i < num_rows(); ++i) v(i, values_.cols()) = column[i];
    auto types = feature_types_;
    types.push_back(FeatureType::kNumeric);
    auto names = column_names_;
    names.push_back(name);
    auto maps = level_maps_;
    maps.emplace_back();
    return CovariateMatrix(std::move(v), std::move(types), std::move(names), std::move(maps));
  }

 private:
  Eigen::MatrixXd values_;
  std::vector<FeatureType> feature_types_;
  std::vector<std::string> column_names_;
  std::vector<std::vector<std::string>> level_maps_;
  std::vector<int> num_levels_;
};

/// Covariates plus the optional leaf basis and per-observation variance
/// weights. A weight v_i scales the error variance of row i to sigma^2 * v_i.
class ForestDataset {
 public:
  explicit ForestDataset(std::shared_ptr<const CovariateMatrix> covariates,
                         std::optional<Eigen::MatrixXd> basis = std::nullopt,
                         std::vector<double> variance_weights = {})
      : covariates_(std::move(covariates)) {
    require(covariates_ != nullptr, ErrorCode::kInvalidArgument, "null covariates");
    if (basis) update_basis(std::move(*basis));
    if (!variance_weights.empty()) update_variance_weights(variance_weights);
  }

  explicit ForestDataset(CovariateMatrix covariates, std::optional<Eigen::MatrixXd> basis = std::nullopt,
                         std::vector<double> variance_weights = {})
      : ForestDataset(std::make_shared<const CovariateMatrix>(std::move(covariates)), std::move(basis),
                      std::move(variance_weights)) {}

  int num_observations() const { return covariates_->num_rows(); }
  int num_covariates() const { return covariates_->num_columns(); }
  const CovariateMatrix& covariates() const { return *covariates_; }
  std::shared_ptr<const CovariateMatrix> shared_covariates() const { return covariates_; }

  bool has_basis() const { return basis_.has_value(); }
  int basis_dimension() const { return basis_ ? static_cast<int>(basis_->cols()) : 0; }
  const Eigen::MatrixXd& basis() const {
    require(basis_.has_value(), ErrorCode::kInvalidArgument, "dataset has no leaf basis");
    return *basis_;
  }

  void update_basis(Eigen::MatrixXd basis) {
    require(basis.rows() == num_observations(), ErrorCode::kDimension,
            "basis rows " + std::to_string(basis.rows()) + " != observations " +
                std::to_string(num_observations()));
    require(basis.cols() >= 1, ErrorCode::kDimension, "basis must have at least one column");
    require(basis.allFinite(), ErrorCode::kInvalidArgument, "basis contains non-finite values");
    basis_ = std::move(basis);
  }

  bool has_variance_weights() const { return !variance_weights_.empty(); }
  double variance_weight(int i) const {
    return variance_weights_.empty() ? 1.0 : variance_weights_[i];
  }
  std::span<const double> variance_weights() const { return variance_weights_; }

  void update_variance_weights(std::span<const double> weights) {
    require(static_cast<int>(weights.size()) == num_observations(), ErrorCode::kDimension,
            "variance weights length " + std::to_string(weights.size()) + " != observations " +
                std::to_string(num_observations()));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      require(std::isfinite(weights[i]) && weights[i] > 0.0, ErrorCode::kInvalidArgument,
              "variance weight at index " + std::to_string(i) + " must be positive and finite");
    }
    variance_weights_.assign(weights.begin(), weights.end());
  }

  /// Mutable access for the variance-forest sampler; materialises unit
  /// weights if none are stored yet.
  std::span<double> mutable_variance_weights() {
    if (variance_weights_.empty()) variance_weights_.assign(num_observations(), 1.0);
    return variance_weights_;
  }

 private:
  std::shared_ptr<const CovariateMatrix> covariates_;
  std::optional<Eigen::MatrixXd> basis_;
  std::vector<double> variance_weights_;
};

/// Residual vector updated in place while model terms are added and removed.
class Outcome {
 public:
  explicit Outcome(std::vector<double> values) : residual_(std::move(values)) {}

  std::size_t size() const { return residual_.size(); }
  double operator[](std::size_t i) const { return residual_[i]; }
  std::span<const double> residual() const { return residual_; }
  std::span<double> mutable_residual() { return residual_; }

  void add_vector(std::span<const double> v) {
    check_length(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) residual_[i] += v[i];
  }

  void subtract_vector(std::span<const double> v) {
    check_length(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) residual_[i] -= v[i];
  }

 private:
  void check_length(std::size_t len) const {
    require(len == residual_.size(), ErrorCode::kDimension,
            "vector length " + std::to_string(len) + " != outcome length " +
                std::to_string(residual_.size()));
  }

  std::vector<double> residual_;
};

/// Location/scale used to standardize the outcome; the scale is the sample
/// standard deviation (n - 1 denominator).
struct StandardizationInfo {
  double center = 0.0;
  double scale = 1.0;

  double to_standard(double y) const { return (y - center) / scale; }
  double to_original(double z) const { return z * scale + center; }

  std::vector<double> invert(std::span<const double> z) const {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = to_original(z[i]);
    return out;
  }
};

inline double sample_mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  const double m = sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline std::pair<std::vector<double>, StandardizationInfo> standardize_outcome(std::span<const double> y) {
  require(y.size() >= 2, ErrorCode::kEmptyInput, "standardization needs at least two observations");
  for (double v : y) require(std::isfinite(v), ErrorCode::kInvalidArgument, "outcome contains non-finite values");
  StandardizationInfo info;
  info.center = sample_mean(y);
  const double var = sample_variance(y);
  require(var > 0.0, ErrorCode::kDegenerateScale, "outcome is constant; cannot standardize");
  info.scale = std::sqrt(var);
  std::vector<double> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) z[i] = info.to_standard(y[i]);
  return {std::move(z), info};
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Header plus string cells, as read from an RFC-4180 file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }

  int require_column(const std::string& name) const {
    const int idx = column_index(name);
    require(idx >= 0, ErrorCode::kSchema, "missing column '" + name + "'");
    return idx;
  }
};

inline CsvTable parse_csv(std::string_view text) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  require(!in_quotes, ErrorCode::kParse, "unterminated quoted field in CSV");
  if (field_started || !field.empty() || !record.empty()) end_record();

  require(!records.empty(), ErrorCode::kEmptyInput, "CSV input is empty");
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    require(records[r].size() == table.header.size(), ErrorCode::kParse,
            "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                " fields, header has " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(records[r]));
  }
  require(!table.rows.empty(), ErrorCode::kEmptyInput, "CSV has a header but no data rows");
  return table;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

inline std::optional<double> try_parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::vector<double> numeric_column(const CsvTable& table, int col) {
  std::vector<double> out(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto v = try_parse_double(table.rows[r][col]);
    require(v.has_value(), ErrorCode::kParse,
            "cannot parse '" + table.rows[r][col] + "' as a number at row " + std::to_string(r + 1) +
                ", column '" + table.header[col] + "'");
    out[r] = *v;
  }
  return out;
}

enum class CategoricalKind { kOrdered, kUnordered };
using CategoricalSpec = std::map<std::string, CategoricalKind>;

/// Label order for a categorical column. Unordered factors keep
/// first-occurrence order; ordered factors sort numerically when every label
/// is a number and lexicographically otherwise.
inline std::vector<std::string> derive_levels(const CsvTable& table, int col, CategoricalKind kind) {
  std::vector<std::string> levels;
  std::unordered_map<std::string, int> seen;
  for (const auto& row : table.rows) {
    if (seen.emplace(row[col], 0).second) {
      levels.push_back(row[col]);
      require(levels.size() <= kMaxCategoricalLevels, ErrorCode::kSchema,
              "column '" + table.header[col] + "' has more than 1024 distinct levels");
    }
  }
  if (kind == CategoricalKind::kOrdered) {
    const bool all_numeric = std::all_of(levels.begin(), levels.end(),
                                         [](const std::string& s) { return try_parse_double(s).has_value(); });
    if (all_numeric) {
      std::sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
        return *try_parse_double(a) < *try_parse_double(b);
      });
    } else {
      std::sort(levels.begin(), levels.end());
    }
  }
  return levels;
}

/// Encode the named columns using a known schema (types and level maps),
/// as needed when predicting from raw labels with a stored artifact.
inline CovariateMatrix encode_with_schema(const CsvTable& table, const std::vector<std::string>& columns,
                                          const std::vector<FeatureType>& types,
                                          const std::vector<std::vector<std::string>>& level_maps) {
  require(columns.size() == types.size() && columns.size() == level_maps.size(), ErrorCode::kDimension,
          "schema vectors disagree in length");
  const int n = static_cast<int>(table.rows.size());
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const int col = table.require_column(columns[j]);
    if (is_categorical(types[j]) && !level_maps[j].empty()) {
      std::unordered_map<std::string, int> index;
      for (std::size_t l = 0; l < level_maps[j].size(); ++l) index.emplace(level_maps[j][l], static_cast<int>(l));
      for (int r = 0; r < n; ++r) {
        auto it = index.find(table.rows[r][col]);
        require(it != index.end(), ErrorCode::kRange,
                "unknown level '" + table.rows[r][col] + "' in column '" + columns[j] + "' at row " +
                    std::to_string(r + 1));
        values(r, static_cast<Eigen::Index>(j)) = it->second;
      }
    } else {
      auto col_values = numeric_column(table, col);
      for (int r = 0; r < n; ++r) values(r, static_cast<Eigen::Index>(j)) = col_values[r];
    }
  }
  return CovariateMatrix(std::move(values), types, columns, level_maps);
}

/// Encode covariates from text, deriving level maps for categorical columns.
inline CovariateMatrix encode_covariates(const CsvTable& table, const std::vector<std::string>& columns,
                                         const CategoricalSpec& categorical_spec) {
  std::vector<FeatureType> types;
  std::vector<std::vector<std::string>> maps;
  for (const auto& name : columns) {
    const int col = table.require_column(name);
    auto it = categorical_spec.find(name);
    if (it == categorical_spec.end()) {
      types.push_back(FeatureType::kNumeric);
      maps.emplace_back();
    } else {
      types.push_back(it->second == CategoricalKind::kOrdered ? FeatureType::kOrderedCategorical
                                                              : FeatureType::kUnorderedCategorical);
      maps.push_back(derive_levels(table, col, it->second));
    }
  }
  return encode_with_schema(table, columns, types, maps);
}

struct LoadedData {
  CovariateMatrix covariates;
  std::vector<double> outcome;
  std::optional<std::vector<double>> treatment;
};

/// Read a CSV file; the outcome (and treatment, when named) are removed from
/// the covariates, and all other columns are kept in file order.
inline LoadedData load_csv_table(const CsvTable& table, const std::string& outcome_col,
                                 const std::optional<std::string>& treatment_col,
                                 const CategoricalSpec& categorical_spec,
                                 const std::vector<std::string>& exclude_cols = {}) {
  const int y_col = table.require_column(outcome_col);
  int z_col = -1;
  if (treatment_col) z_col = table.require_column(*treatment_col);
  for (const auto& [name, kind] : categorical_spec) {
    (void)kind;
    table.require_column(name);
  }
  std::vector<std::string> covariate_names;
  for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
    if (c == y_col || c == z_col) continue;
    if (std::find(exclude_cols.begin(), exclude_cols.end(), table.header[c]) != exclude_cols.end()) continue;
    covariate_names.push_back(table.header[c]);
  }
  require(!covariate_names.empty(), ErrorCode::kSchema, "no covariate columns remain");
  LoadedData out{encode_covariates(table, covariate_names, categorical_spec), numeric_column(table, y_col),
                 std::nullopt};
  if (z_col >= 0) out.treatment = numeric_column(table, z_col);
  return out;
}

inline LoadedData load_csv(const std::string& path, const std::string& outcome_col,
                           const std::optional<std::string>& treatment_col = std::nullopt,
                           const CategoricalSpec& categorical_spec = {}) {
  return load_csv_table(read_csv(path), outcome_col, treatment_col, categorical_spec);
}

}  // namespace stochforest

#endif  // STOCHFOREST_DATA_HPP_
