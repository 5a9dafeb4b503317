#pragma once

#include <Eigen/Dense>

namespace carrm {

/// Relative singular-value tolerance used for every rank decision.
inline constexpr double kRankTolerance = 1e-8;

struct RankInfo {
  int rank = 0;
  Eigen::VectorXd singular_values;  // non-increasing
  double threshold = 0.0;           // rel_tol * sigma_1
};

/// Count of singular values strictly above rel_tol * sigma_1.
RankInfo numerical_rank(const Eigen::MatrixXd& m, double rel_tol = kRankTolerance);

/// [1, Z].
Eigen::MatrixXd augment_ones(const Eigen::MatrixXd& z);

/// Orthonormal basis (columns) of the row space of [1, Z].
struct AffineBasis {
  Eigen::MatrixXd V;  // (1 + d) x r
  int d_eff = 0;      // r - 1
};

AffineBasis affine_basis(const Eigen::MatrixXd& z, double rel_tol = kRankTolerance);

}  // namespace carrm
