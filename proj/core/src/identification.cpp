#include "carrm/identification.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "carrm/error.hpp"
#include "carrm/random.hpp"

namespace carrm {

RestrictionRow restriction_row(const Menu& menu, const RuleRow& row, const Library& library,
                               double trim) {
  if (!menu.choice_rate)
    throw Error(ErrorKind::MissingChoiceRate, "menu " + menu.id + " has no choice rate");
  if (!(trim > 0.0 && trim < 0.5)) throw Error(ErrorKind::InvalidArgument, "trim outside (0, 0.5)");
  const double p = std::clamp(*menu.choice_rate, trim, 1.0 - trim);
  RestrictionRow out;
  out.menu_id = menu.id;
  out.r = p / (1.0 - p);
  out.h.resize(library.size());
  for (std::size_t f = 0; f < library.size(); ++f) {
    const auto& o = row[index_of(library[f])];
    const double kl = (o.active && o.left) ? 1.0 : 0.0;
    const double kr = (o.active && !o.left) ? 1.0 : 0.0;
    out.h[f] = kl - out.r * kr;
  }
  return out;
}

bool is_two_sided(const RuleRow& row, const Library& library) {
  bool left = false;
  bool right = false;
  for (RuleId r : library) {
    const auto& o = row[index_of(r)];
    if (!o.active) continue;
    (o.left ? left : right) = true;
  }
  return left && right;
}

std::vector<std::vector<std::size_t>> CellAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(n_cells));
  for (std::size_t t = 0; t < cell_of.size(); ++t)
    if (cell_of[t] >= 0) out[static_cast<std::size_t>(cell_of[t])].push_back(t);
  return out;
}

namespace {

struct RowLess {
  const FeatureMatrix* z;
  bool operator()(std::size_t a, std::size_t b) const {
    for (Eigen::Index j = 0; j < z->cols(); ++j) {
      const double x = (*z)(static_cast<Eigen::Index>(a), j);
      const double y = (*z)(static_cast<Eigen::Index>(b), j);
      if (x < y) return true;
      if (y < x) return false;
    }
    return false;
  }
};

// Lloyd's algorithm with k-means++ seeding. Returns labels in [0, k).
std::vector<int> kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, KMeansInfo& info) {
  const Eigen::Index n = x.rows();
  Rng rng(seed);
  Eigen::MatrixXd centers(k, x.cols());
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
  centers.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (x.row(i) - centers.row(c - 1)).squaredNorm());
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2(pick);
        if (u < 0.0) break;
      }
      while (d2(pick) == 0.0 && pick > 0) --pick;
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    }
    centers.row(c) = x.row(pick);
  }

  std::vector<int> label(static_cast<std::size_t>(n), 0);
  info.converged = false;
  info.iterations = 0;
  for (int it = 0; it < info.max_iterations; ++it) {
    ++info.iterations;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      label[static_cast<std::size_t>(i)] = best;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(label[static_cast<std::size_t>(i)]) += x.row(i);
      ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= count[static_cast<std::size_t>(c)];
      } else {
        // Re-seed an empty cluster at the point farthest from its center.
        Eigen::Index far = 0;
        double fd = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (x.row(i) - centers.row(label[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        next.row(c) = x.row(far);
      }
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - centers.row(c)).norm());
    centers = next;
    if (shift < info.tolerance) {
      info.converged = true;
      break;
    }
  }
  // Final assignment against the last centers.
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (x.row(i) - centers.row(c)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    label[static_cast<std::size_t>(i)] = best;
  }
  return label;
}

}  // namespace

CellAssignment build_cells(const FeatureMatrix& features, int k, std::uint64_t seed,
                           std::size_t min_exact) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "build_cells needs k >= 2");
  const std::size_t n = static_cast<std::size_t>(features.rows());
  if (n < 2) throw Error(ErrorKind::TooFewMenus, "need at least two menus to form cells");

  std::map<std::size_t, std::vector<std::size_t>, RowLess> groups(RowLess{&features});
  for (std::size_t t = 0; t < n; ++t) groups[t].push_back(t);

  // Exact cells in order of their first member.
  std::vector<std::vector<std::size_t>> exact_groups;
  std::vector<std::size_t> rest;
  for (auto& [key, members] : groups) {
    if (members.size() >= min_exact) {
      exact_groups.push_back(members);
    } else {
      rest.insert(rest.end(), members.begin(), members.end());
    }
  }
  std::sort(exact_groups.begin(), exact_groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  std::sort(rest.begin(), rest.end());

  CellAssignment out;
  out.cell_of.assign(n, -1);
  for (const auto& g : exact_groups) {
    for (std::size_t t : g) out.cell_of[t] = out.n_cells;
    out.exact.push_back(true);
    ++out.n_cells;
  }
  out.kmeans.clustered_menus = rest.size();
  if (rest.empty()) return out;

  // Distinct points bound the number of non-empty clusters.
  std::size_t distinct = 0;
  {
    std::vector<std::size_t> sorted = rest;
    RowLess less{&features};
    std::sort(sorted.begin(), sorted.end(), less);
    for (std::size_t i = 0; i < sorted.size(); ++i)
      if (i == 0 || less(sorted[i - 1], sorted[i])) ++distinct;
  }
  const int kk = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), distinct));
  out.kmeans.clusters = kk;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rest.size()), features.cols());
  for (std::size_t i = 0; i < rest.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rest[i]));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 0.0) x.col(j) /= sd;
  }

  std::vector<int> label;
  if (kk <= 1) {
    label.assign(rest.size(), 0);
  } else {
    label = kmeans(x, kk, seed, out.kmeans);
  }

  // Relabel clusters by first member so numbering is stable.
  std::vector<int> remap(static_cast<std::size_t>(std::max(kk, 1)), -1);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    int& m = remap[static_cast<std::size_t>(label[i])];
    if (m < 0) {
      m = out.n_cells++;
      out.exact.push_back(false);
    }
    out.cell_of[rest[i]] = m;
  }
  return out;
}

CellSystem make_cell_system(int cell_id, std::span<const std::size_t> members,
                            const std::vector<Menu>& menus, const RuleMatrix& matrix,
                            const FeatureMatrix& features, const Library& library, double trim) {
  CellSystem c;
  c.cell_id = cell_id;
  c.members.assign(members.begin(), members.end());
  c.centroid = Eigen::VectorXd::Zero(features.cols());
  for (std::size_t t : members) {
    c.centroid += features.row(static_cast<Eigen::Index>(t)).transpose();
    if (is_two_sided(matrix.row(t), library)) c.rows.push_back(t);
  }
  if (!members.empty()) c.centroid /= static_cast<double>(members.size());
  c.H.resize(static_cast<Eigen::Index>(c.rows.size()), static_cast<Eigen::Index>(library.size()));
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    const auto rr = restriction_row(menus[c.rows[i]], matrix.row(c.rows[i]), library, trim);
    for (std::size_t f = 0; f < library.size(); ++f)
      c.H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = rr.h[f];
  }
  return c;
}

CellRank cell_rank(const CellSystem& cell, std::size_t n_rules, double rel_tol) {
  CellRank out;
  const auto info = numerical_rank(cell.H, rel_tol);
  out.rank = info.rank;
  out.singular_values = info.singular_values;
  const auto& s = info.singular_values;
  const auto need = static_cast<Eigen::Index>(n_rules) - 1;
  if (need >= 1 && s.size() >= need) {
    const double num = s(need - 1);
    const double den = s.size() > need ? s(need) : 0.0;
    out.gap = den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  }
  return out;
}

IdentReport ident_report(const Dataset& ds, const RuleMatrix& matrix,
                         const FeatureMatrix& features, const IdentConfig& cfg) {
  const auto cells = build_cells(features, cfg.k, cfg.seed, cfg.library.size() - 1);
  return ident_report(ds, matrix, features, cells, cfg);
}

IdentReport ident_report(const Dataset& ds, const RuleMatrix& matrix,
                         const FeatureMatrix& features, const CellAssignment& cells,
                         const IdentConfig& cfg) {
  validate(ds, true);
  if (matrix.size() != ds.size() || static_cast<std::size_t>(features.rows()) != ds.size())
    throw Error(ErrorKind::LengthMismatch, "dataset, rule matrix and features differ in length");

  const Library& lib = cfg.library;
  const std::size_t F = lib.size();
  IdentReport rep;
  rep.menus = ds.size();
  rep.n_rules = F;
  rep.kmeans = cells.kmeans;

  for (std::size_t t = 0; t < ds.size(); ++t)
    if (is_two_sided(matrix.row(t), lib)) ++rep.two_sided;
  rep.two_sided_fraction = static_cast<double>(rep.two_sided) / static_cast<double>(ds.size());

  for (RuleId r : lib) {
    RuleCoverage c;
    c.rule = r;
    std::size_t left = 0;
    for (std::size_t t = 0; t < ds.size(); ++t) {
      const auto& o = matrix.at(t, r);
      if (!o.active) continue;
      ++c.n_active;
      if (o.left) ++left;
    }
    c.pr_active = static_cast<double>(c.n_active) / static_cast<double>(ds.size());
    if (c.n_active > 0) {
      c.pr_left_given_active = static_cast<double>(left) / static_cast<double>(c.n_active);
      c.pr_right_given_active = 1.0 - c.pr_left_given_active;
    }
    c.switches = left > 0 && left < c.n_active;
    rep.coverage.push_back(c);
  }

  const auto members = cells.members();
  std::vector<Eigen::VectorXd> passing_centroids;
  for (int k = 0; k < cells.n_cells; ++k) {
    const auto& mem = members[static_cast<std::size_t>(k)];
    const auto sys = make_cell_system(k, mem, ds.menus, matrix, features, lib, cfg.trim);
    CellDiagnostic d;
    d.cell_id = k;
    d.exact = cells.exact[static_cast<std::size_t>(k)];
    d.menus = mem.size();
    d.two_sided_rows = sys.rows.size();
    d.qualifies = sys.rows.size() >= F - 1;
    if (!sys.rows.empty()) {
      const auto cr = cell_rank(sys, F);
      d.rank = cr.rank;
      d.gap = cr.gap;
    }
    d.passes = d.qualifies && d.rank >= static_cast<int>(F) - 1;
    if (d.passes) {
      ++rep.g1_pass_count;
      passing_centroids.push_back(sys.centroid);
    }
    rep.cells.push_back(d);
  }

  rep.d_eff = affine_basis(features).d_eff;
  rep.g1_needed = rep.d_eff + 1;
  if (!passing_centroids.empty()) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(passing_centroids.size()), features.cols());
    for (std::size_t i = 0; i < passing_centroids.size(); ++i)
      c.row(static_cast<Eigen::Index>(i)) = passing_centroids[i].transpose();
    rep.g2_rank = numerical_rank(augment_ones(c)).rank;
  }
  rep.verdict = rep.g1_pass_count >= rep.g1_needed && rep.g2_rank == rep.d_eff + 1;
  return rep;
}

std::string format_ident_report(const IdentReport& r) {
  std::ostringstream out;
  out << std::fixed;
  out << "Rule coverage and side variation (" << r.menus << " menus)\n";
  out << std::left << std::setw(8) << "rule" << std::right << std::setw(10) << "Pr(act)"
      << std::setw(14) << "Pr(L|act)" << std::setw(14) << "Pr(R|act)" << std::setw(10)
      << "switch" << '\n';
  for (const auto& c : r.coverage) {
    out << std::left << std::setw(8) << rule_name(c.rule) << std::right << std::setprecision(3)
        << std::setw(10) << c.pr_active << std::setw(14) << c.pr_left_given_active
        << std::setw(14) << c.pr_right_given_active << std::setw(10)
        << (c.switches ? "yes" : "no") << '\n';
  }
  out << '\n' << "Identification diagnostics\n";
  out << std::setprecision(1);
  out << "  (D1) two-sided menus      " << r.two_sided << " / " << r.menus << " ("
      << 100.0 * r.two_sided_fraction << "%)\n";
  out << "  (G1) cells with rank " << (r.n_rules - 1) << "   " << r.g1_pass_count << " / "
      << r.g1_needed << " needed (" << r.cells.size() << " cells)\n";
  out << "  (G2) rank([1, centroid])  " << r.g2_rank << " / " << (r.d_eff + 1) << " needed\n";
  out << "  d_eff                     " << r.d_eff << '\n';
  out << "  k-means                   " << r.kmeans.clusters << " clusters, "
      << r.kmeans.iterations << " iterations (cap " << r.kmeans.max_iterations << ", tol "
      << std::scientific << std::setprecision(0) << r.kmeans.tolerance << std::fixed << "), "
      << (r.kmeans.converged ? "converged" : "not converged") << '\n';
  out << "  verdict                   " << (r.verdict ? "identified" : "not identified") << '\n';
  return out.str();
}

namespace {

// Softmax shares of the scores within one side's active set.
void side_shares(const Eigen::VectorXd& u, const GateParams& p, const RuleRow& row, bool left,
                 Eigen::VectorXd& share, double& log_sum) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < p.n_rules(); ++f) {
    const auto& o = row[index_of(p.rules[f])];
    if (o.active && o.left == left) mx = std::max(mx, u(static_cast<Eigen::Index>(f)));
  }
  share = Eigen::VectorXd::Zero(u.size());
  if (!std::isfinite(mx)) {
    log_sum = -std::numeric_limits<double>::infinity();
    return;
  }
  double total = 0.0;
  for (std::size_t f = 0; f < p.n_rules(); ++f) {
    const auto& o = row[index_of(p.rules[f])];
    if (o.active && o.left == left) {
      share(static_cast<Eigen::Index>(f)) = std::exp(u(static_cast<Eigen::Index>(f)) - mx);
      total += share(static_cast<Eigen::Index>(f));
    }
  }
  share /= total;
  log_sum = mx + std::log(total);
}

}  // namespace

double log_odds(const GateParams& params, std::span<const double> z, const RuleRow& row) {
  Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  const Eigen::VectorXd u = params.alpha + params.beta * zv;
  Eigen::VectorXd sl, sr;
  double ll, lr;
  side_shares(u, params, row, true, sl, ll);
  side_shares(u, params, row, false, sr, lr);
  return ll - lr;
}

Eigen::VectorXd log_odds_gradient(const GateParams& params, RuleId baseline,
                                  std::span<const double> z, const RuleRow& row) {
  if (params.dim() != z.size())
    throw Error(ErrorKind::DimensionMismatch, "feature length does not match parameters");
  const auto base = params.position(baseline);
  if (!base) throw Error(ErrorKind::InvalidArgument, "baseline rule not in library");
  Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  const Eigen::VectorXd u = params.alpha + params.beta * zv;
  Eigen::VectorXd sl, sr;
  double ll, lr;
  side_shares(u, params, row, true, sl, ll);
  side_shares(u, params, row, false, sr, lr);
  const auto d = static_cast<Eigen::Index>(params.dim());
  Eigen::VectorXd grad(static_cast<Eigen::Index>(params.n_rules() - 1) * (1 + d));
  Eigen::Index k = 0;
  for (std::size_t f = 0; f < params.n_rules(); ++f) {
    if (f == *base) continue;
    const double s = sl(static_cast<Eigen::Index>(f)) - sr(static_cast<Eigen::Index>(f));
    grad(k * (1 + d)) = s;
    grad.segment(k * (1 + d) + 1, d) = s * zv;
    ++k;
  }
  return grad;
}

JacobianRank jacobian_local_rank(const GateParams& params, RuleId baseline,
                                 const RuleMatrix& matrix, const FeatureMatrix& features) {
  if (static_cast<std::size_t>(features.rows()) != matrix.size())
    throw Error(ErrorKind::LengthMismatch, "features and rule matrix differ in length");
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < matrix.size(); ++t)
    if (is_two_sided(matrix.row(t), params.rules)) rows.push_back(t);
  if (rows.empty()) throw Error(ErrorKind::NoTwoSidedMenus, "no two-sided menus");

  const std::size_t d = params.dim();
  JacobianRank out;
  out.rows = rows.size();
  out.columns = (params.n_rules() - 1) * (1 + d);
  out.effective_columns =
      (params.n_rules() - 1) * static_cast<std::size_t>(1 + affine_basis(features).d_eff);
  Eigen::MatrixXd J(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.columns));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto zr = features.row(static_cast<Eigen::Index>(rows[i]));
    std::vector<double> z(zr.data(), zr.data() + zr.size());
    J.row(static_cast<Eigen::Index>(i)) =
        log_odds_gradient(params, baseline, z, matrix.row(rows[i])).transpose();
  }
  const auto info = numerical_rank(J);
  out.rank = info.rank;
  out.singular_values = info.singular_values;
  return out;
}

}  // namespace carrm
