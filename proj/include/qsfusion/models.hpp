#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "qsfusion/lexfeat.hpp"

namespace qsfusion {

enum class ModelKind { Constant, SvrLinear, GpRbf, LanguageSplit };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

class RegressionModel {
 public:
  virtual ~RegressionModel() = default;

  virtual ModelKind kind() const = 0;
  virtual double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view lang) const = 0;
  virtual nlohmann::json to_json() const = 0;

  // `langs` may be empty for models that ignore language.
  std::vector<double> predict(const Eigen::MatrixXd& X, std::span<const std::string> langs = {}) const;
};

class ConstantModel final : public RegressionModel {
 public:
  explicit ConstantModel(double value) : value_(value) {}

  ModelKind kind() const override { return ModelKind::Constant; }
  double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>&, std::string_view) const override { return value_; }
  nlohmann::json to_json() const override;

  double value() const { return value_; }

 private:
  double value_;
};

// Throws std::invalid_argument on empty y.
std::unique_ptr<ConstantModel> train_constant(std::span<const double> y);

struct SvrOptions {
  double C = 1.0;
  double epsilon = 0.1;
  double tolerance = 1e-6;  // relative duality gap
  std::size_t max_epochs = 200000;
  std::uint64_t seed = 0;   // coordinate visiting order
};

// Epsilon-insensitive linear regression. Trained on centered features and targets
// with a bias column, so weights() are in the input feature space.
class SvrLinearModel final : public RegressionModel {
 public:
  ModelKind kind() const override { return ModelKind::SvrLinear; }
  double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view lang) const override;
  nlohmann::json to_json() const override;

  const Eigen::VectorXd& weights() const { return weights_; }
  double intercept() const { return intercept_; }
  bool converged() const { return converged_; }
  double duality_gap() const { return gap_; }
  std::size_t epochs() const { return epochs_; }
  const SvrOptions& options() const { return options_; }

 private:
  friend std::unique_ptr<SvrLinearModel> train_svr_linear(const Eigen::MatrixXd&, std::span<const double>,
                                                           const SvrOptions&);
  SvrOptions options_;
  Eigen::VectorXd weights_;
  double intercept_ = 0.0;
  bool converged_ = false;
  double gap_ = 0.0;
  std::size_t epochs_ = 0;
};

// Minimizes 0.5|w|^2 + C sum max(0, |r_i| - eps) with y standardized by its sd, so C and
// eps are in sd units. Smoothed Newton warm start, then an exact active-set polish; dual
// coordinate descent is the fallback. Stops on the relative duality gap.
// Throws std::invalid_argument on shape mismatch, fewer than two rows or non-finite input.
std::unique_ptr<SvrLinearModel> train_svr_linear(const Eigen::MatrixXd& X, std::span<const double> y,
                                                 const SvrOptions& options = {});

struct GpHyperparameters {
  double length_scale = 1.0;
  double signal_var = 1.0;
  double noise_var = 0.1;
};

// length_scale 1, signal_var = var(y), noise_var = 0.1 var(y), with a small floor on var(y).
GpHyperparameters default_gp_hyperparameters(std::span<const double> y);

class GpModel final : public RegressionModel {
 public:
  ModelKind kind() const override { return ModelKind::GpRbf; }
  double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view lang) const override;
  nlohmann::json to_json() const override;

  const GpHyperparameters& hyperparameters() const { return hp_; }
  double prior_mean() const { return mean_; }
  double log_marginal_likelihood() const { return log_ml_; }

 private:
  friend std::unique_ptr<GpModel> train_gp(const Eigen::MatrixXd&, std::span<const double>, const GpHyperparameters&);
  GpHyperparameters hp_;
  Eigen::MatrixXd train_x_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd chol_l_;
  double mean_ = 0.0;
  double log_ml_ = 0.0;
};

double squared_exponential(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                           double length_scale, double signal_var);

// Exact GP regression with a squared-exponential kernel and prior mean = mean(y).
// Throws std::invalid_argument when noise_var <= 0 and ModelError("kernel not positive definite")
// when the Cholesky factorization fails.
std::unique_ptr<GpModel> train_gp(const Eigen::MatrixXd& X, std::span<const double> y, const GpHyperparameters& hp);

struct GpGrid {
  std::vector<double> length_scale_factors{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};  // times sqrt(feature count)
  std::vector<double> noise_ratios{0.01, 0.03, 0.1, 0.3, 1.0};              // times var(y)
};

// Maximizes the log marginal likelihood over the grid; signal_var = var(y).
GpHyperparameters select_gp_hyperparameters(const Eigen::MatrixXd& X, std::span<const double> y,
                                            const GpGrid& grid = {});

using Trainer = std::function<std::unique_ptr<RegressionModel>(const Eigen::MatrixXd& X, std::span<const double> y,
                                                               std::span<const std::string> langs)>;

// One model per language group with at least two users; everything else
// (small groups, unseen tags) goes to the pooled model.
class LanguageSplitModel final : public RegressionModel {
 public:
  ModelKind kind() const override { return ModelKind::LanguageSplit; }
  double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view lang) const override;
  nlohmann::json to_json() const override;

  bool has_group(const std::string& lang) const { return groups_.count(lang) != 0; }
  const RegressionModel& pooled() const { return *pooled_; }

 private:
  friend std::unique_ptr<LanguageSplitModel> language_split_fit(const Eigen::MatrixXd&, std::span<const double>,
                                                                std::span<const std::string>, const Trainer&);
  std::map<std::string, std::unique_ptr<RegressionModel>> groups_;
  std::unique_ptr<RegressionModel> pooled_;
};

std::unique_ptr<LanguageSplitModel> language_split_fit(const Eigen::MatrixXd& X, std::span<const double> y,
                                                       std::span<const std::string> langs, const Trainer& base);

struct Metrics {
  std::optional<double> r;  // unset when either side has zero variance
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
};

// Throws std::invalid_argument on a length mismatch or empty input.
Metrics compute_metrics(std::span<const double> y_true, std::span<const double> y_pred);
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

// Seeded Fisher-Yates shuffle, then k contiguous near-equal folds. Returns fold id per row.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed);

// Builds the full design matrix for one fold from that fold's training rows only.
using FoldFeatureBuilder = std::function<FeatureMatrix(std::span<const std::size_t> train_rows)>;

struct FoldResult {
  std::size_t fold = 0;
  Metrics metrics;
};

struct Prediction {
  std::string user_id;
  std::size_t fold = 0;
  double y_true = 0.0;
  double y_pred = 0.0;
};

struct MetricsReport {
  std::string model;           // row label
  std::string feature_config;  // e.g. tweet_only/without_bow
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<FoldResult> folds;
  Metrics pooled;
  std::vector<Prediction> predictions;

  nlohmann::json to_json() const;
};

struct CvProblem {
  std::vector<std::string> users;
  std::vector<std::string> langs;
  std::vector<double> y;
  FoldFeatureBuilder features;
};

// Throws std::invalid_argument when k < 2 or k > n.
MetricsReport kfold_cv(const CvProblem& problem, std::size_t k, std::uint64_t seed, const Trainer& trainer);

struct CoefficientReport {
  std::vector<std::pair<std::string, double>> positive;  // descending
  std::vector<std::pair<std::string, double>> negative;  // ascending

  nlohmann::json to_json() const;
};

// Zero weights are in neither list; ties are broken by feature name.
CoefficientReport top_features(const SvrLinearModel& model, std::span<const std::string> feature_names,
                               std::size_t k = 15);

// Unscaled lexical features plus token counts, from which per-fold designs are built.
struct ModelingDataset {
  std::vector<std::string> users;
  std::vector<std::string> langs;
  std::vector<double> y;
  FeatureMatrix lexical;  // Bio_ and Tweet_ category columns, unscaled
  std::vector<TokenCounts> tweet_tokens;
  std::vector<TokenCounts> bio_tokens;
};

struct FeatureSetOptions {
  bool include_bio = false;
  bool bow = false;
  std::int64_t bow_min_df = 2;
  std::size_t bow_max_vocab = 500;

  std::string label() const;  // tweet_only|tweet_plus_bio / with_bow|without_bow
};

// Selects columns, builds the BoW vocabulary on train_rows, and min-max scales on train_rows.
FeatureMatrix assemble_features(const ModelingDataset& data, const FeatureSetOptions& options,
                                std::span<const std::size_t> train_rows);

CvProblem make_cv_problem(const ModelingDataset& data, const FeatureSetOptions& options);

}  // namespace qsfusion
