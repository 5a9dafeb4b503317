#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "carrm/dataset.hpp"
#include "carrm/gate.hpp"
#include "carrm/linalg.hpp"
#include "carrm/rules.hpp"

namespace carrm {

inline constexpr double kDefaultTrim = 1e-4;

/// h_f = kL_f - r kR_f with r the trimmed observed odds of choosing left.
struct RestrictionRow {
  std::string menu_id;
  double r = 1.0;
  std::vector<double> h;  // per library rule
};

RestrictionRow restriction_row(const Menu& menu, const RuleRow& row, const Library& library,
                               double trim = kDefaultTrim);

/// Some active rule recommends left and some active rule recommends right.
bool is_two_sided(const RuleRow& row, const Library& library);

struct KMeansInfo {
  int iterations = 0;
  bool converged = true;
  int max_iterations = 100;
  double tolerance = 1e-6;
  std::size_t clustered_menus = 0;
  int clusters = 0;
};

struct CellAssignment {
  std::vector<int> cell_of;  // per menu
  int n_cells = 0;
  std::vector<bool> exact;   // per cell: formed by exact feature equality
  KMeansInfo kmeans;

  std::vector<std::vector<std::size_t>> members() const;
};

/// Menus sharing an identical feature vector form a cell when the group has
/// at least `min_exact` members; the rest are clustered into k cells by
/// k-means++ / Lloyd on standardized features.
CellAssignment build_cells(const FeatureMatrix& features, int k, std::uint64_t seed,
                           std::size_t min_exact = kNumRules - 1);

struct CellSystem {
  int cell_id = 0;
  std::vector<std::size_t> members;  // all menus in the cell
  std::vector<std::size_t> rows;     // two-sided members, one per H row
  Eigen::VectorXd centroid;          // mean features of all members
  Eigen::MatrixXd H;                 // rows x library rules
};

/// Stacks restriction rows of the cell's two-sided menus. `members` may
/// contain repeats (bootstrap draws).
CellSystem make_cell_system(int cell_id, std::span<const std::size_t> members,
                            const std::vector<Menu>& menus, const RuleMatrix& matrix,
                            const FeatureMatrix& features, const Library& library,
                            double trim = kDefaultTrim);

struct CellRank {
  int rank = 0;
  Eigen::VectorXd singular_values;
  /// sigma_{F-1} / sigma_F, infinite when sigma_F vanishes or is absent.
  double gap = 0.0;
};

CellRank cell_rank(const CellSystem& cell, std::size_t n_rules, double rel_tol = kRankTolerance);

struct RuleCoverage {
  RuleId rule = RuleId::MMn;
  std::size_t n_active = 0;
  double pr_active = 0.0;
  double pr_left_given_active = 0.0;
  double pr_right_given_active = 0.0;
  bool switches = false;  // recommends each side somewhere
};

struct CellDiagnostic {
  int cell_id = 0;
  bool exact = false;
  std::size_t menus = 0;
  std::size_t two_sided_rows = 0;
  int rank = 0;
  double gap = 0.0;
  bool qualifies = false;  // enough two-sided rows
  bool passes = false;     // qualifies and rank >= |F| - 1
};

struct IdentConfig {
  int k = 50;
  double trim = kDefaultTrim;
  std::uint64_t seed = 0;
  Library library = full_library();
};

struct IdentReport {
  std::size_t menus = 0;
  std::size_t two_sided = 0;
  double two_sided_fraction = 0.0;
  std::vector<RuleCoverage> coverage;
  std::vector<CellDiagnostic> cells;
  int g1_pass_count = 0;
  int g1_needed = 0;
  int g2_rank = 0;
  int d_eff = 0;
  bool verdict = false;
  std::size_t n_rules = 0;
  KMeansInfo kmeans;
};

IdentReport ident_report(const Dataset& ds, const RuleMatrix& matrix,
                         const FeatureMatrix& features, const IdentConfig& cfg);
IdentReport ident_report(const Dataset& ds, const RuleMatrix& matrix,
                         const FeatureMatrix& features, const CellAssignment& cells,
                         const IdentConfig& cfg);

std::string format_ident_report(const IdentReport& report);

/// Log-odds of choosing left, log(sum_L exp u) - log(sum_R exp u).
double log_odds(const GateParams& params, std::span<const double> z, const RuleRow& row);

/// Gradient of log_odds with respect to the non-baseline (alpha_f, beta_f),
/// laid out rule-major: [alpha_f, beta_f(1..d)] for each non-baseline rule.
Eigen::VectorXd log_odds_gradient(const GateParams& params, RuleId baseline,
                                  std::span<const double> z, const RuleRow& row);

struct JacobianRank {
  int rank = 0;
  std::size_t columns = 0;            // (|F| - 1)(1 + d)
  std::size_t effective_columns = 0;  // (|F| - 1)(1 + d_eff)
  std::size_t rows = 0;               // two-sided menus
  Eigen::VectorXd singular_values;
};

JacobianRank jacobian_local_rank(const GateParams& params, RuleId baseline,
                                 const RuleMatrix& matrix, const FeatureMatrix& features);

}  // namespace carrm
