#include "carrm/two_step.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "carrm/error.hpp"
#include "carrm/parallel.hpp"
#include "carrm/random.hpp"

namespace carrm {

namespace {

Eigen::MatrixXd drop_column(const Eigen::MatrixXd& H, std::size_t base) {
  const auto b = static_cast<Eigen::Index>(base);
  Eigen::MatrixXd out(H.rows(), H.cols() - 1);
  out.leftCols(b) = H.leftCols(b);
  out.rightCols(H.cols() - b - 1) = H.rightCols(H.cols() - b - 1);
  return out;
}

}  // namespace

CellWeights solve_cell_qp(const Eigen::MatrixXd& H, std::size_t base, const QpOptions& opt) {
  if (base >= static_cast<std::size_t>(H.cols()))
    throw Error(ErrorKind::InvalidArgument, "baseline index out of range");
  if (!(opt.floor > 0.0)) throw Error(ErrorKind::InvalidArgument, "floor must be positive");

  const auto b = static_cast<Eigen::Index>(base);
  const Eigen::VectorXd h0 = H.col(b);
  const Eigen::MatrixXd Hm = drop_column(H, base);
  const Eigen::Index n = Hm.cols();
  const double lipschitz = 2.0 * std::max(Hm.squaredNorm(), 1e-300);

  auto objective = [&](const Eigen::VectorXd& eta) { return (h0 + Hm * eta).squaredNorm(); };
  auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(opt.floor); };

  Eigen::VectorXd eta = Eigen::VectorXd::Ones(n);
  CellWeights out;
  double f = objective(eta);
  for (int it = 0; it < opt.max_iter; ++it) {
    out.iterations = it + 1;
    const Eigen::VectorXd r = h0 + Hm * eta;
    const Eigen::VectorXd grad = 2.0 * Hm.transpose() * r;
    const double stationarity = (eta - project(eta - grad)).cwiseAbs().maxCoeff();
    const double band = std::min(1e-3, stationarity);

    std::vector<Eigen::Index> free_idx;
    std::vector<bool> bound(static_cast<std::size_t>(n), false);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (eta(j) <= opt.floor + band && grad(j) > 0.0) {
        bound[static_cast<std::size_t>(j)] = true;
      } else {
        free_idx.push_back(j);
      }
    }

    // Newton step on free coordinates: least squares on their columns.
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
    if (!free_idx.empty()) {
      Eigen::MatrixXd Hf(Hm.rows(), static_cast<Eigen::Index>(free_idx.size()));
      for (std::size_t k = 0; k < free_idx.size(); ++k)
        Hf.col(static_cast<Eigen::Index>(k)) = Hm.col(free_idx[k]);
      const Eigen::VectorXd df = Hf.completeOrthogonalDecomposition().solve(-r);
      for (std::size_t k = 0; k < free_idx.size(); ++k) dir(free_idx[k]) = df(static_cast<Eigen::Index>(k));
    }
    for (Eigen::Index j = 0; j < n; ++j)
      if (bound[static_cast<std::size_t>(j)]) dir(j) = -grad(j);

    Eigen::VectorXd next = eta;
    double f_next = f;
    bool accepted = false;
    for (double t = 1.0; t > 1e-12; t *= 0.5) {
      const Eigen::VectorXd trial = project(eta + t * dir);
      const double ft = objective(trial);
      double decrease = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        decrease += bound[static_cast<std::size_t>(j)] ? grad(j) * (eta(j) - trial(j))
                                                        : -t * grad(j) * dir(j);
      }
      if (f - ft >= 1e-4 * decrease && ft <= f) {
        next = trial;
        f_next = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      next = project(eta - grad / lipschitz);
      f_next = objective(next);
      if (f_next > f) {
        next = eta;
        f_next = f;
      }
    }
    const double move = n > 0 ? (next - eta).cwiseAbs().maxCoeff() : 0.0;
    eta = next;
    f = f_next;
    if (move < opt.tol) {
      out.converged = true;
      break;
    }
  }

  out.omega.resize(H.cols());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < H.cols(); ++j) out.omega(j) = j == b ? 1.0 : eta(k++);
  out.residual_norm = (H * out.omega).norm();
  return out;
}

CellWeights cell_weights(const CellSystem& cell, const Library& library, RuleId baseline,
                         const QpOptions& opt) {
  if (cell.H.rows() == 0) throw Error(ErrorKind::InvalidArgument, "cell has no restriction rows");
  if (static_cast<std::size_t>(cell.H.cols()) != library.size())
    throw Error(ErrorKind::DimensionMismatch, "H columns do not match library");
  const auto it = std::find(library.begin(), library.end(), baseline);
  if (it == library.end()) throw Error(ErrorKind::InvalidArgument, "baseline rule not in library");
  auto out = solve_cell_qp(cell.H, static_cast<std::size_t>(it - library.begin()), opt);
  out.cell_id = cell.cell_id;
  for (std::size_t f = 0; f < library.size(); ++f) {
    if (library[f] != baseline && out.omega(static_cast<Eigen::Index>(f)) <= opt.floor * (1.0 + 1e-9))
      out.at_floor.push_back(library[f]);
  }
  return out;
}

Eigen::VectorXd closed_form_weights(const Eigen::MatrixXd& H, std::size_t base) {
  const auto b = static_cast<Eigen::Index>(base);
  const Eigen::MatrixXd Hm = drop_column(H, base);
  const Eigen::VectorXd eta = -(Hm.transpose() * Hm).ldlt().solve(Hm.transpose() * H.col(b));
  Eigen::VectorXd omega(H.cols());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < H.cols(); ++j) omega(j) = j == b ? 1.0 : eta(k++);
  return omega;
}

EffectiveDesign make_design(const AffineBasis& basis, const Eigen::MatrixXd& centroids) {
  EffectiveDesign d;
  d.V = basis.V;
  d.d_eff = basis.d_eff;
  d.X = augment_ones(centroids) * basis.V;
  if (d.X.rows() < d.X.cols() || numerical_rank(d.X).rank < d.X.cols())
    throw Error(ErrorKind::RankDeficientDesign,
                "cell centroids do not span the effective feature space (" +
                    std::to_string(d.X.rows()) + " cells, " + std::to_string(d.X.cols()) +
                    " coefficients)");
  return d;
}

Eigen::VectorXd weighted_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights) {
  if (weights.size() == 0) return X.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd s = weights.cwiseSqrt();
  return (s.asDiagonal() * X).colPivHouseholderQr().solve(s.asDiagonal() * y);
}

JTest j_test(const EffectiveDesign& design, const Eigen::VectorXd& y, const Eigen::VectorXd& var) {
  JTest out;
  const auto K = design.X.rows();
  out.dof = static_cast<int>(K - design.X.cols());
  if (out.dof < 1) return out;
  if (var.size() != K) throw Error(ErrorKind::DimensionMismatch, "variance length differs from cells");
  Eigen::VectorXd v = var;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(v(k) > 0.0) || !std::isfinite(v(k))) {
      out.ridge_applied = true;
      break;
    }
  }
  if (out.ridge_applied) {
    for (Eigen::Index k = 0; k < K; ++k) {
      if (!std::isfinite(v(k))) throw Error(ErrorKind::SingularVariance, "non-finite variance");
      v(k) = std::max(v(k), 0.0) + 1e-10;
    }
  }
  const Eigen::VectorXd w = v.cwiseInverse();
  const Eigen::VectorXd coef = weighted_ls(design.X, y, w);
  const Eigen::VectorXd u = y - design.X * coef;
  out.stat = u.dot(w.asDiagonal() * u);
  if (!std::isfinite(out.stat)) throw Error(ErrorKind::SingularVariance, "J statistic not finite");
  boost::math::chi_squared dist(out.dof);
  out.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, out.stat)), 0.0, 1.0);
  out.defined = true;
  return out;
}

GateParams TwoStepFit::params() const {
  GateParams p = GateParams::zeros(rules, dim);
  p.alpha = gamma.col(0);
  p.beta = gamma.rightCols(static_cast<Eigen::Index>(dim));
  p.baseline = baseline;
  return p;
}

namespace {

struct StageOutput {
  std::vector<CellWeights> cells;
  Eigen::MatrixXd y;      // K x F
  Eigen::MatrixXd gamma;  // F x (1 + d)
  std::size_t degenerate = 0;
};

// First and second stage for fixed cells. `draws[k]` lists the menus of
// cell k (with repeats for bootstrap draws); `menus` carries the choice
// rates in use.
StageOutput run_stages(const std::vector<std::vector<std::size_t>>& draws,
                       const std::vector<int>& cell_ids, const std::vector<Menu>& menus,
                       const RuleMatrix& matrix, const FeatureMatrix& features,
                       const EffectiveDesign& design, const TwoStepConfig& cfg,
                       std::size_t base, const Eigen::MatrixXd* efficient_var) {
  const std::size_t F = cfg.library.size();
  const auto K = static_cast<Eigen::Index>(draws.size());
  StageOutput out;
  out.y.resize(K, static_cast<Eigen::Index>(F));
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& mem = draws[static_cast<std::size_t>(k)];
    const auto sys = make_cell_system(cell_ids[static_cast<std::size_t>(k)], mem, menus, matrix,
                                      features, cfg.library, cfg.trim);
    if (sys.H.rows() == 0) {
      CellWeights cw;
      cw.cell_id = sys.cell_id;
      cw.omega = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(F));
      out.cells.push_back(cw);
      ++out.degenerate;
    } else {
      if (numerical_rank(sys.H).rank < static_cast<int>(F) - 1) ++out.degenerate;
      out.cells.push_back(cell_weights(sys, cfg.library, cfg.library[base], cfg.qp));
    }
    out.y.row(k) = out.cells.back().omega.array().log().matrix().transpose();
  }
  const auto cols = design.V.rows();
  out.gamma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(F), cols);
  for (std::size_t f = 0; f < F; ++f) {
    if (f == base) continue;
    const auto fi = static_cast<Eigen::Index>(f);
    Eigen::VectorXd w;
    if (efficient_var) {
      w = efficient_var->col(fi).cwiseMax(1e-10).cwiseInverse();
    }
    const Eigen::VectorXd c = weighted_ls(design.X, out.y.col(fi), w);
    out.gamma.row(fi) = (design.V * c).transpose();
  }
  return out;
}

}  // namespace

TwoStepFit fit_two_step(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                        const CellAssignment& assignment, const TwoStepConfig& cfg) {
  validate(ds, true);
  if (matrix.size() != ds.size() || static_cast<std::size_t>(features.rows()) != ds.size())
    throw Error(ErrorKind::LengthMismatch, "dataset, rule matrix and features differ in length");
  const std::size_t F = cfg.library.size();
  const auto bit = std::find(cfg.library.begin(), cfg.library.end(), cfg.baseline);
  if (bit == cfg.library.end()) throw Error(ErrorKind::InvalidArgument, "baseline rule not in library");
  const std::size_t base = static_cast<std::size_t>(bit - cfg.library.begin());
  const std::size_t min_rows = cfg.min_rows > 0 ? cfg.min_rows : F - 1;

  // Cells with enough two-sided menus enter the estimator.
  const auto all_members = assignment.members();
  std::vector<std::vector<std::size_t>> members;
  std::vector<int> cell_ids;
  for (int k = 0; k < assignment.n_cells; ++k) {
    const auto& mem = all_members[static_cast<std::size_t>(k)];
    std::size_t rows = 0;
    for (std::size_t t : mem) rows += is_two_sided(matrix.row(t), cfg.library) ? 1 : 0;
    if (rows >= min_rows) {
      members.push_back(mem);
      cell_ids.push_back(k);
    }
  }

  TwoStepFit fit;
  fit.rules = cfg.library;
  fit.baseline = cfg.baseline;
  fit.dim = static_cast<std::size_t>(features.cols());
  const auto K = static_cast<Eigen::Index>(members.size());
  fit.centroids.resize(K, features.cols());
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(features.cols());
    for (std::size_t t : members[static_cast<std::size_t>(k)]) c += features.row(static_cast<Eigen::Index>(t));
    fit.centroids.row(k) = c / static_cast<double>(members[static_cast<std::size_t>(k)].size());
  }
  const auto basis = affine_basis(features);
  fit.d_eff = basis.d_eff;
  fit.design = make_design(basis, fit.centroids);

  auto point = run_stages(members, cell_ids, ds.menus, matrix, features, fit.design, cfg, base, nullptr);
  fit.cells = point.cells;
  fit.y = point.y;
  fit.gamma = point.gamma;
  fit.j.assign(F, JTest{});

  auto responsibilities_of = [&](const Eigen::MatrixXd& gamma) {
    TwoStepFit tmp;
    tmp.rules = fit.rules;
    tmp.baseline = fit.baseline;
    tmp.dim = fit.dim;
    tmp.gamma = gamma;
    return two_step_responsibilities(tmp, matrix, features);
  };

  if (cfg.bootstrap) {
    if (cfg.boot.resamples < 2) throw Error(ErrorKind::InvalidArgument, "resamples must be >= 2");
    if (cfg.boot.scheme == BootstrapScheme::Trial) {
      for (const auto& m : ds.menus)
        if (!m.n_trials) throw Error(ErrorKind::MissingTrials, "trial bootstrap needs n_trials on every menu");
    }
    const auto B = static_cast<std::size_t>(cfg.boot.resamples);
    std::vector<StageOutput> reps(B);
    parallel_for(B, cfg.threads, [&](std::size_t b) {
      Rng rng(derive_seed(cfg.boot.seed, b));
      if (cfg.boot.scheme == BootstrapScheme::Menu) {
        std::vector<std::vector<std::size_t>> draws(members.size());
        for (std::size_t k = 0; k < members.size(); ++k) {
          const auto& mem = members[k];
          draws[k].resize(mem.size());
          for (auto& t : draws[k]) t = mem[uniform_index(rng, mem.size())];
        }
        reps[b] = run_stages(draws, cell_ids, ds.menus, matrix, features, fit.design, cfg, base, nullptr);
      } else {
        std::vector<Menu> menus = ds.menus;
        for (auto& m : menus) {
          std::binomial_distribution<int> bin(*m.n_trials, *m.choice_rate);
          m.choice_rate = static_cast<double>(bin(rng)) / *m.n_trials;
        }
        reps[b] = run_stages(members, cell_ids, menus, matrix, features, fit.design, cfg, base, nullptr);
      }
    });

    const double Bd = static_cast<double>(B);
    Eigen::MatrixXd g_mean = Eigen::MatrixXd::Zero(fit.gamma.rows(), fit.gamma.cols());
    Eigen::MatrixXd g_sq = g_mean;
    Eigen::MatrixXd y_mean = Eigen::MatrixXd::Zero(fit.y.rows(), fit.y.cols());
    Eigen::MatrixXd y_sq = y_mean;
    std::vector<std::vector<double>> w_reps;
    for (const auto& r : reps) {
      g_mean += r.gamma;
      g_sq += r.gamma.cwiseAbs2();
      y_mean += r.y;
      y_sq += r.y.cwiseAbs2();
      fit.degenerate_resample_cells += r.degenerate;
      w_reps.push_back(responsibilities_of(r.gamma));
    }
    g_mean /= Bd;
    y_mean /= Bd;
    fit.gamma_se = ((g_sq / Bd - g_mean.cwiseAbs2()) * (Bd / (Bd - 1.0))).cwiseMax(0.0).cwiseSqrt();
    fit.y_var = ((y_sq / Bd - y_mean.cwiseAbs2()) * (Bd / (Bd - 1.0))).cwiseMax(0.0);
    fit.w_se.assign(F, 0.0);
    for (std::size_t f = 0; f < F; ++f) {
      double mean = 0.0, sq = 0.0;
      for (const auto& w : w_reps) {
        mean += w[f];
        sq += w[f] * w[f];
      }
      mean /= Bd;
      fit.w_se[f] = std::sqrt(std::max(0.0, (sq / Bd - mean * mean) * Bd / (Bd - 1.0)));
    }
    fit.resamples = static_cast<int>(B);

    for (std::size_t f = 0; f < F; ++f) {
      if (f == base) continue;
      const auto fi = static_cast<Eigen::Index>(f);
      fit.j[f] = j_test(fit.design, fit.y.col(fi), fit.y_var.col(fi));
    }
    if (cfg.efficient_weights) {
      const Eigen::MatrixXd var = fit.y_var;
      auto eff = run_stages(members, cell_ids, ds.menus, matrix, features, fit.design, cfg, base, &var);
      fit.gamma = eff.gamma;
    }
  }
  fit.w = responsibilities_of(fit.gamma);
  return fit;
}

std::vector<double> two_step_responsibilities(const TwoStepFit& fit, const RuleMatrix& matrix,
                                              const FeatureMatrix& features) {
  const GateBatch batch = make_batch(matrix, features, {}, fit.rules);
  return responsibilities(fit.params(), batch).w;
}

}  // namespace carrm
