#include "carrm/linalg.hpp"

namespace carrm {

RankInfo numerical_rank(const Eigen::MatrixXd& m, double rel_tol) {
  RankInfo info;
  if (m.size() == 0) return info;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  info.singular_values = svd.singularValues();
  const double s1 = info.singular_values.size() > 0 ? info.singular_values(0) : 0.0;
  info.threshold = rel_tol * s1;
  if (s1 <= 0.0) return info;
  for (Eigen::Index i = 0; i < info.singular_values.size(); ++i)
    if (info.singular_values(i) > info.threshold) ++info.rank;
  return info;
}

Eigen::MatrixXd augment_ones(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd x(z.rows(), z.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(z.cols()) = z;
  return x;
}

AffineBasis affine_basis(const Eigen::MatrixXd& z, double rel_tol) {
  const Eigen::MatrixXd x = augment_ones(z);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  int r = 0;
  const double thr = s.size() > 0 ? rel_tol * s(0) : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > thr) ++r;
  AffineBasis out;
  out.V = svd.matrixV().leftCols(r);
  out.d_eff = r - 1;
  return out;
}

}  // namespace carrm
