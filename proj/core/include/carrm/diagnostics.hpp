#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "carrm/cv.hpp"
#include "carrm/dataset.hpp"
#include "carrm/gate.hpp"
#include "carrm/rules.hpp"

namespace carrm {

struct ConcentrationReport {
  double hhi = 0.0;
  double n_eff = 0.0;
  std::vector<double> w;
};

/// Herfindahl index of responsibility weights and its reciprocal.
ConcentrationReport concentration(std::span<const double> w);

struct AblationEntry {
  RuleId rule = RuleId::MMn;
  double phi = 0.0;
  double delta_mse = 0.0;      // mean over folds of MSE(-f) - MSE(full)
  double delta_se = 0.0;       // standard error of the per-fold differences
  double sigma_n = 0.0;
  double n_eff_reduced = 0.0;
  std::vector<double> fold_mse_reduced;
  std::vector<double> fold_delta;
};

struct AblationReport {
  double lr = 0.0;
  double full_mse = 0.0;
  double n_eff_full = 0.0;
  std::vector<double> fold_mse_full;
  std::vector<AblationEntry> entries;
};

/// Refit-and-compare ablation over the given (non-attention) rules. The full
/// model's learning rate is selected once and reused for every reduced
/// library; responsibilities come from the same refits.
AblationReport ablate(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                      const ModelConfig& model, const SplitPlan& plan,
                      std::vector<RuleId> rules = {}, int threads = 1);

/// Same, reusing an existing full-model run.
AblationReport ablate(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                      const ModelConfig& model, const SplitPlan& plan, const RunRecord& full,
                      std::vector<RuleId> rules = {}, int threads = 1);

enum class Covariate { TC, RiskAsym };

struct StaticsBin {
  int bin = 0;
  std::size_t menus = 0;
  std::size_t guard_excluded = 0;
  double covariate_min = 0.0;
  double covariate_max = 0.0;
  std::vector<double> effective;  // mean q_tilde per rule
  std::vector<double> latent;     // mean q per rule
};

struct StaticsReport {
  Covariate covariate = Covariate::TC;
  Library rules;
  std::vector<StaticsBin> bins;
  bool degenerate = false;
  std::size_t guard_excluded = 0;
};

StaticsReport comparative_statics(const Dataset& ds, const GateParams& params,
                                  const RuleMatrix& matrix, const FeatureMatrix& features,
                                  Covariate covariate, int k_bins = 10);

struct BenchmarkScores {
  std::string baseline_name = "neural_eu";
  double baseline_mse = 0.02215;  // published score
  std::string flexible_name = "mot";
  double flexible_mse = 0.01139;  // published score
};

/// (baseline - model) / (baseline - flexible).
double completeness(double model_mse, const BenchmarkScores& bench = {});

/// Fits on the training rows with the given targets and returns in-sample
/// predictions for those rows.
using Fitter = std::function<Eigen::VectorXd(const std::vector<std::size_t>& rows,
                                             const std::vector<double>& targets)>;

Fitter constant_fitter();
Fitter rule_gating_fitter(const RuleMatrix& matrix, const FeatureMatrix& features,
                          const ModelConfig& model, double lr);

struct RestrictivenessReport {
  double ratio = 0.0;
  double sd = 0.0;
  std::vector<double> runs;  // split-major, permutation-minor
  int splits = 0;
  int permutations = 0;
};

/// Mean over splits x permutations of train MSE on permuted training targets
/// divided by the constant predictor's train MSE on the same targets.
RestrictivenessReport restrictiveness(std::span<const double> targets, const Fitter& fitter,
                                      const SplitPlan& plan, int permutations, std::uint64_t seed,
                                      int threads = 1);

using FamilyMap = std::vector<std::pair<std::string, Library>>;
FamilyMap default_families();

struct TopKEntry {
  int k = 0;
  double mse = 0.0;
  double retention = 0.0;
  std::vector<double> fold_mse;
};

struct CrossfitReport {
  double lr = 0.0;
  double full_mse = 0.0;
  std::vector<double> fold_mse_full;
  std::vector<TopKEntry> rules;
  std::vector<TopKEntry> families;
  /// selection_frequency[i][f]: share of folds selecting rule f at rules[i].k
  std::vector<std::vector<double>> rule_frequency;
  std::vector<std::vector<double>> family_frequency;
  std::vector<std::string> family_names;
};

/// Cross-fitted top-k selection: per fold, rank rules (or families) by
/// training responsibilities of the full fit, refit the restricted gate and
/// score the test set.
CrossfitReport crossfit_topk(const Dataset& ds, const RuleMatrix& matrix,
                             const FeatureMatrix& features, const ModelConfig& model,
                             const SplitPlan& plan, double lr, std::vector<int> rule_ks,
                             std::vector<int> family_ks, const FamilyMap& families,
                             int threads = 1);

}  // namespace carrm
