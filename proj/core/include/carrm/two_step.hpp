#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "carrm/dataset.hpp"
#include "carrm/gate.hpp"
#include "carrm/identification.hpp"
#include "carrm/linalg.hpp"
#include "carrm/rules.hpp"

namespace carrm {

struct QpOptions {
  double floor = 1e-8;
  /// Stop once the largest coordinate move falls below this.
  double tol = 1e-10;
  int max_iter = 500;
};

struct CellWeights {
  int cell_id = 0;
  Eigen::VectorXd omega;  // per library rule, baseline entry exactly 1
  double residual_norm = 0.0;
  std::vector<RuleId> at_floor;
  bool converged = false;
  int iterations = 0;
};

/// min ||H w||^2 subject to w[base] = 1 and w >= floor, by projected Newton
/// steps on the free coordinates with a projected-gradient fallback.
CellWeights solve_cell_qp(const Eigen::MatrixXd& H, std::size_t base, const QpOptions& opt = {});

CellWeights cell_weights(const CellSystem& cell, const Library& library, RuleId baseline,
                         const QpOptions& opt = {});

/// Unconstrained least-squares solution via the normal equations.
Eigen::VectorXd closed_form_weights(const Eigen::MatrixXd& H, std::size_t base);

/// Second-stage regressors expressed in an orthonormal basis of the affine
/// feature subspace, so rank-deficient [1, z] designs stay solvable.
struct EffectiveDesign {
  Eigen::MatrixXd V;  // (1 + d) x r
  Eigen::MatrixXd X;  // K x r, [1, centroid] V
  int d_eff = 0;
};

EffectiveDesign make_design(const AffineBasis& basis, const Eigen::MatrixXd& centroids);

/// Weighted least squares; `weights` empty means identity.
Eigen::VectorXd weighted_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights = {});

struct JTest {
  double stat = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool defined = false;
  bool ridge_applied = false;
};

/// Minimum-distance overidentification test for one rule: efficient-weighted
/// second stage using `var` (per-cell variance of y) and a chi-square tail.
JTest j_test(const EffectiveDesign& design, const Eigen::VectorXd& y, const Eigen::VectorXd& var);

enum class BootstrapScheme {
  Menu,   // redraw menus with replacement within each cell
  Trial,  // redraw each menu's choice count from Binomial(n, p_hat)
};

struct BootstrapConfig {
  int resamples = 100;
  std::uint64_t seed = 0;
  BootstrapScheme scheme = BootstrapScheme::Menu;
};

struct TwoStepConfig {
  Library library = full_library();
  RuleId baseline = RuleId::A1;
  double trim = kDefaultTrim;
  QpOptions qp;
  /// Cells need at least this many two-sided rows; 0 means |F| - 1.
  std::size_t min_rows = 0;
  bool efficient_weights = false;
  bool bootstrap = true;
  BootstrapConfig boot;
  int threads = 1;
};

struct TwoStepFit {
  Library rules;
  RuleId baseline = RuleId::A1;
  int d_eff = 0;
  std::size_t dim = 0;
  std::vector<CellWeights> cells;
  Eigen::MatrixXd centroids;  // K x d
  Eigen::MatrixXd y;          // K x |F|, log weights (baseline column 0)
  EffectiveDesign design;
  /// |F| x (1 + d): minimum-norm (alpha, beta) per rule, baseline row zero.
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd gamma_se;  // same shape, empty without bootstrap
  Eigen::MatrixXd y_var;     // K x |F| bootstrap variance of y
  std::vector<JTest> j;      // per rule; baseline entry undefined
  std::vector<double> w;
  std::vector<double> w_se;
  int resamples = 0;
  std::size_t degenerate_resample_cells = 0;

  GateParams params() const;
};

TwoStepFit fit_two_step(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                        const CellAssignment& cells, const TwoStepConfig& cfg);

/// Average conditional-on-activity weights implied by the fitted gate.
std::vector<double> two_step_responsibilities(const TwoStepFit& fit, const RuleMatrix& matrix,
                                              const FeatureMatrix& features);

}  // namespace carrm
