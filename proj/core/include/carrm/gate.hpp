#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carrm/dataset.hpp"
#include "carrm/rules.hpp"

namespace carrm {

inline constexpr double kDefaultMMin = 1e-6;

/// Softmax gate over a rule library: score_f(z) = alpha_f + beta_f . z.
struct GateParams {
  Library rules;
  Eigen::VectorXd alpha;  // one entry per library rule
  Eigen::MatrixXd beta;   // library rules x feature dimension
  std::vector<std::string> feature_names;
  double rescale_factor = 1.0;
  /// Name of the dataset the rescale factor was derived from.
  std::string rescale_source;
  double m_min = kDefaultMMin;
  /// Set when the baseline rule's (alpha, beta) is pinned to zero.
  std::optional<RuleId> baseline;

  std::size_t n_rules() const noexcept { return rules.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(beta.cols()); }

  static GateParams zeros(Library rules, std::size_t dim);
  /// Subtracts the baseline rule's parameters from every rule.
  GateParams normalized(RuleId baseline) const;
  std::optional<std::size_t> position(RuleId r) const;
};

/// Softmax weights over the library rules at features z.
Eigen::VectorXd gate_weights(const GateParams& params, std::span<const double> z);

struct Prediction {
  double g = 0.0;
  std::vector<double> q;        // latent gate weights, per library rule
  std::vector<double> q_tilde;  // conditional-on-activity weights
  bool guard_hit = false;
};

Prediction predict(const GateParams& params, std::span<const double> z, const RuleRow& row,
                   double m_min);
Prediction predict(const GateParams& params, std::span<const double> z, const RuleRow& row);

/// Dense per-library view of a subset of menus, laid out for full-batch
/// training and evaluation.
struct GateBatch {
  Library rules;
  Eigen::MatrixXd Z;  // n x d
  Eigen::MatrixXd L;  // n x R, active and left
  Eigen::MatrixXd A;  // n x R, active
  Eigen::VectorXd y;  // targets (zeros when absent)
  std::vector<std::size_t> rows;  // source indices

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(Z.cols()); }
};

/// Builds a batch over `rows` (all menus when empty). `targets` may be empty.
GateBatch make_batch(const RuleMatrix& matrix, const FeatureMatrix& features,
                     std::span<const double> targets, const Library& library,
                     std::span<const std::size_t> rows = {});

/// Restricts an existing batch to a sub-library without re-gathering features.
GateBatch restrict_batch(const GateBatch& batch, const Library& library);

/// Copy of the batch with targets replaced.
GateBatch with_targets(const GateBatch& batch, const Eigen::VectorXd& y);

struct BatchPrediction {
  Eigen::VectorXd g;
  Eigen::MatrixXd q;        // n x R
  Eigen::MatrixXd q_tilde;  // n x R, zero rows where the guard binds
  std::vector<bool> guard_hit;
};

BatchPrediction predict_batch(const GateParams& params, const GateBatch& batch);

/// Mean squared error and, when requested, its exact gradient. The max-guard
/// contributes no derivative; clamped predictions have zero gradient.
double loss_and_gradient(const GateParams& params, const GateBatch& batch,
                         Eigen::VectorXd* grad_alpha, Eigen::MatrixXd* grad_beta);

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 1000;
  double clip_norm = 1.0;
  double m_min = kDefaultMMin;
  std::uint64_t seed = 0;
  std::vector<double> lr_grid = {0.001, 0.01, 0.1};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Standard deviation of the initial parameters; 0 gives the uniform gate.
  double init_scale = 0.0;
};

void validate(const TrainConfig& cfg);

struct TrainResult {
  GateParams params;
  std::vector<double> trace;  // training MSE at the start of each epoch
  double final_mse = 0.0;
};

/// Full-batch Adam with global-norm clipping on the training MSE.
TrainResult train(const GateBatch& batch, const TrainConfig& cfg);
/// Continues from given parameters.
TrainResult train(const GateBatch& batch, const TrainConfig& cfg, GateParams init);

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t guard_excluded = 0;
};

/// Central differences (step 1e-5) on `coordinates` random parameters,
/// after dropping menus where the guard binds at `params`.
GradientCheck gradient_check(const GateParams& params, const GateBatch& batch,
                             std::uint64_t seed, std::size_t coordinates = 20);

struct Responsibilities {
  std::vector<double> w;  // per library rule
  std::size_t guard_excluded = 0;
  std::size_t menus = 0;
};

/// Average conditional-on-activity weight of each rule.
Responsibilities responsibilities(const GateParams& params, const GateBatch& batch);

}  // namespace carrm
