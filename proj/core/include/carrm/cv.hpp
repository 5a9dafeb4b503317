#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carrm/dataset.hpp"
#include "carrm/gate.hpp"
#include "carrm/rules.hpp"

namespace carrm {

struct SplitPlan {
  int n_splits = 50;
  double train_fraction = 0.9;
  double inner_val_fraction = 0.2;
  std::uint64_t seed = 0;
};

void validate(const SplitPlan& plan);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> sub_train;   // inner training part of train
  std::vector<std::size_t> validation;  // inner validation part of train
};

/// Partition for split `s`, a pure function of (plan, n, s).
Split make_split(const SplitPlan& plan, std::size_t n, int s);

struct Metrics {
  double mse = 0.0;
  std::optional<double> mse_w;
};

/// Menu-level MSE and, when trial counts are given, the trial-weighted MSE.
Metrics metrics(std::span<const double> preds, std::span<const double> targets,
                std::span<const double> trials = {});

struct ModelConfig {
  Library library = full_library();
  FeatureKind features = FeatureKind::Gate;
  TrainConfig train;
};

struct FoldRecord {
  int split = 0;
  std::vector<double> val_mse;      // per lr, Pass A
  std::vector<double> test_mse;     // per lr, Pass B
  std::vector<double> test_mse_w;   // per lr, Pass B, empty without trial counts
  std::vector<double> train_w;      // responsibilities on the training menus at the selected lr
  GateParams params;                // Pass B fit at the selected lr
};

struct RunRecord {
  std::string dataset;
  SplitPlan plan;
  ModelConfig model;
  std::vector<double> lr_grid;
  std::vector<double> mean_val_mse;   // per lr
  std::vector<double> mean_test_mse;  // per lr
  std::size_t selected_index = 0;
  double selected_lr = 0.0;
  double test_mse_mean = 0.0;
  double test_mse_sd = 0.0;
  std::optional<double> test_mse_w_mean;
  std::vector<FoldRecord> folds;
  std::string started;
  std::string finished;

  /// Per-fold Pass B test MSE at the selected learning rate.
  std::vector<double> selected_fold_mse() const;
};

/// Two-pass protocol: Pass A selects the learning rate from inner
/// validation MSE over all splits; Pass B refits on each full training set
/// and scores the test set. With a one-point grid Pass A is skipped.
RunRecord run_cv(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                 const ModelConfig& model, const SplitPlan& plan, int threads = 1);

/// Trains on `rows` and returns the fitted result.
TrainResult fit_rows(const RuleMatrix& matrix, const FeatureMatrix& features,
                     std::span<const double> targets, const ModelConfig& model,
                     std::span<const std::size_t> rows, double lr);

/// Predicted left-choice probabilities for `rows`.
Eigen::VectorXd predict_rows(const GateParams& params, const RuleMatrix& matrix,
                             const FeatureMatrix& features, std::span<const std::size_t> rows);

struct LearningCurvePoint {
  double fraction = 0.0;
  double test_mse_mean = 0.0;
  double test_mse_sd = 0.0;
};

/// Trains on the leading `fraction` of each split's training set at a fixed
/// learning rate; the test set stays fixed.
std::vector<LearningCurvePoint> learning_curve(const Dataset& ds, const RuleMatrix& matrix,
                                               const FeatureMatrix& features,
                                               const ModelConfig& model, const SplitPlan& plan,
                                               double lr, std::vector<double> fractions,
                                               int threads = 1);

struct PortabilityReport {
  double mse_menu = 0.0;
  double brier_trial = 0.0;
  double logloss_trial = 0.0;
  std::size_t menus = 0;
  std::size_t trials = 0;
  double rescale_factor = 1.0;
  std::string rescale_source;
};

/// Scores frozen parameters on a target dataset using the parameters' own
/// rescale factor. Refuses parameters whose factor was derived from the
/// target itself.
PortabilityReport portability(const GateParams& params, const Dataset& target,
                              double epsilon = 0.0);

}  // namespace carrm
