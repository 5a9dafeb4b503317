#include "carrm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carrm/error.hpp"
#include "carrm/linalg.hpp"
#include "carrm/random.hpp"

namespace carrm {

Lottery random_lottery(Rng& rng, int max_support, int payoff_min, int payoff_max) {
  const int range = payoff_max - payoff_min + 1;
  const int n = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(std::min(max_support, range))));
  std::vector<double> xs;
  while (static_cast<int>(xs.size()) < n) {
    const double x = payoff_min + static_cast<double>(uniform_index(rng, static_cast<std::size_t>(range)));
    if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
  }
  // Uniform simplex via normalized exponentials.
  std::vector<double> ps(xs.size());
  double total = 0.0;
  for (double& p : ps) {
    p = -std::log(1.0 - uniform01(rng));
    total += p;
  }
  for (double& p : ps) p /= total;
  return Lottery::canonicalize(xs, ps);
}

GateParams random_truth(const Library& library, std::size_t dim, RuleId baseline,
                        double alpha_scale, double beta_scale, std::uint64_t seed) {
  GateParams p = GateParams::zeros(library, dim);
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index f = 0; f < p.alpha.size(); ++f) {
    p.alpha(f) = alpha_scale * nd(rng);
    for (Eigen::Index j = 0; j < p.beta.cols(); ++j) p.beta(f, j) = beta_scale * nd(rng);
  }
  return p.normalized(baseline);
}

double synthetic_probability(const GateParams& truth, std::span<const double> z,
                             const RuleRow& row, double quadratic) {
  if (quadratic == 0.0) return predict(truth, z, row).g;
  GateParams shifted = truth;
  double sq = 0.0;
  for (double x : z) sq += x * x;
  sq /= static_cast<double>(z.size());
  std::size_t k = 0;
  for (std::size_t f = 0; f < truth.n_rules(); ++f) {
    if (truth.baseline && truth.rules[f] == *truth.baseline) continue;
    shifted.alpha(static_cast<Eigen::Index>(f)) += quadratic * (k++ % 2 == 0 ? 1.0 : -1.0) * sq;
  }
  return predict(shifted, z, row).g;
}

namespace {

std::string menu_id(int cell, int j) {
  return "s" + std::to_string(cell) + "_" + std::to_string(j);
}

double draw_rate(Rng& rng, double p, int n_trials) {
  if (n_trials <= 0) return p;
  std::binomial_distribution<int> bin(n_trials, p);
  return static_cast<double>(bin(rng)) / n_trials;
}

}  // namespace

SyntheticData generate_synthetic(const GateParams& truth, const SynthConfig& cfg) {
  if (cfg.cells < 1 || cfg.menus_per_cell < 1)
    throw Error(ErrorKind::InvalidArgument, "cells and menus_per_cell must be positive");
  if (cfg.max_support < 1 || cfg.payoff_max < cfg.payoff_min)
    throw Error(ErrorKind::InvalidArgument, "invalid lottery sampler bounds");
  if (cfg.oracle_features && truth.dim() != kGateFeatureDim)
    throw Error(ErrorKind::DimensionMismatch, "oracle mode uses 12 gate features");

  Rng rng(cfg.seed);
  const double big_M = 10.0 * std::max(std::abs(cfg.payoff_min), std::abs(cfg.payoff_max)) + 1.0;
  const std::size_t F = truth.n_rules();
  const std::size_t d = truth.dim();
  const auto total = static_cast<std::size_t>(cfg.cells) * static_cast<std::size_t>(cfg.menus_per_cell);

  SyntheticData out;
  out.dataset.name = "synthetic";
  out.dataset.provenance["generator"] = cfg.oracle_features ? "oracle" : "lotteries";
  out.dataset.provenance["seed"] = std::to_string(cfg.seed);
  out.dataset.provenance["n_trials"] = std::to_string(cfg.n_trials);
  out.cells.cell_of.assign(total, -1);
  FeatureMatrix z(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d));

  if (!cfg.oracle_features) {
    for (std::size_t t = 0; t < total; ++t) {
      Lottery a = random_lottery(rng, cfg.max_support, cfg.payoff_min, cfg.payoff_max);
      Lottery b = random_lottery(rng, cfg.max_support, cfg.payoff_min, cfg.payoff_max);
      out.dataset.menus.push_back(make_menu("m" + std::to_string(t), std::move(a), std::move(b)));
    }
    derive_rescale_factor(out.dataset);
    const FeatureKind kind = d == kRawDim ? FeatureKind::Raw : FeatureKind::Gate;
    z = feature_matrix(out.dataset, kind);
    const RuleMatrix matrix = build_rule_matrix(out.dataset.menus);
    for (std::size_t t = 0; t < total; ++t) {
      const auto zr = z.row(static_cast<Eigen::Index>(t));
      const std::vector<double> zv(zr.data(), zr.data() + zr.size());
      const double p = synthetic_probability(truth, zv, matrix.row(t), cfg.quadratic);
      out.true_p.push_back(p);
      out.dataset.menus[t].choice_rate = draw_rate(rng, p, cfg.n_trials);
      if (cfg.n_trials > 0) out.dataset.menus[t].n_trials = cfg.n_trials;
    }
    return out;
  }

  std::normal_distribution<double> nd(0.0, cfg.feature_scale);
  out.cells.n_cells = cfg.cells;
  out.cells.exact.assign(static_cast<std::size_t>(cfg.cells), true);
  std::size_t t = 0;
  for (int k = 0; k < cfg.cells; ++k) {
    std::vector<double> x(d);
    for (double& v : x) v = nd(rng);
    if (cfg.ev_redundancy) x[0] = x[6] - x[7];

    // Draw a pool of two-sided candidates, then pick menus greedily by the
    // leverage of their normalized restriction rows against the rows chosen
    // so far. This keeps the cell's H well conditioned, not merely full rank.
    struct Candidate {
      Menu menu;
      RuleRow row;
      Eigen::VectorXd h;
    };
    const auto pool_size = static_cast<std::size_t>(cfg.pool_factor) * static_cast<std::size_t>(cfg.menus_per_cell);
    std::vector<Candidate> pool;
    int tries = 0;
    while (pool.size() < pool_size) {
      if (++tries > cfg.max_candidates) break;
      Menu m = make_menu("", random_lottery(rng, cfg.max_support, cfg.payoff_min, cfg.payoff_max),
                         random_lottery(rng, cfg.max_support, cfg.payoff_min, cfg.payoff_max));
      const RuleRow row = evaluate_rules(m, 0.0, big_M);
      if (!is_two_sided(row, truth.rules)) continue;
      m.choice_rate = synthetic_probability(truth, x, row, cfg.quadratic);
      const auto rr = restriction_row(m, row, truth.rules);
      Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(rr.h.data(), static_cast<Eigen::Index>(F));
      const double norm = h.norm();
      if (norm == 0.0) continue;
      pool.push_back({std::move(m), row, h / norm});
    }
    if (pool.size() < static_cast<std::size_t>(cfg.menus_per_cell))
      throw Error(ErrorKind::InfeasibleCell, "cell " + std::to_string(k) + ": only " + std::to_string(pool.size()) +
                                                 " two-sided candidates");

    std::vector<std::pair<Menu, RuleRow>> chosen;
    std::vector<bool> used(pool.size(), false);
    Eigen::MatrixXd info = 1e-6 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(F));
    Eigen::MatrixXd H(0, static_cast<Eigen::Index>(F));
    while (static_cast<int>(chosen.size()) < cfg.menus_per_cell) {
      const Eigen::LDLT<Eigen::MatrixXd> solver(info);
      std::size_t best = pool.size();
      double best_score = -1.0;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (used[i]) continue;
        const double score = pool[i].h.dot(solver.solve(pool[i].h));
        if (score > best_score) {
          best_score = score;
          best = i;
        }
      }
      used[best] = true;
      info += pool[best].h * pool[best].h.transpose();
      H.conservativeResize(H.rows() + 1, Eigen::NoChange);
      H.row(H.rows() - 1) = pool[best].h.transpose();
      chosen.emplace_back(std::move(pool[best].menu), pool[best].row);
    }
    const int rank = numerical_rank(H, 1e-3).rank;
    if (rank < static_cast<int>(F) - 1)
      throw Error(ErrorKind::InfeasibleCell, "cell " + std::to_string(k) + " reached rank " +
                                                 std::to_string(rank) + " of " + std::to_string(F - 1));
    for (int j = 0; j < cfg.menus_per_cell; ++j) {
      auto& [m, row] = chosen[static_cast<std::size_t>(j)];
      m.id = menu_id(k, j);
      const double p = synthetic_probability(truth, x, row, cfg.quadratic);
      out.true_p.push_back(p);
      m.choice_rate = draw_rate(rng, p, cfg.n_trials);
      if (cfg.n_trials > 0) m.n_trials = cfg.n_trials;
      for (std::size_t c = 0; c < d; ++c) z(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = x[c];
      out.cells.cell_of[t] = k;
      out.dataset.menus.push_back(std::move(m));
      ++t;
    }
  }
  derive_rescale_factor(out.dataset);
  out.dataset.feature_override = std::move(z);
  return out;
}

void resample_targets(SyntheticData& data, int n_trials, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t t = 0; t < data.dataset.size(); ++t) {
    auto& m = data.dataset.menus[t];
    m.choice_rate = draw_rate(rng, data.true_p[t], n_trials);
    if (n_trials > 0) {
      m.n_trials = n_trials;
    } else {
      m.n_trials.reset();
    }
  }
}

}  // namespace carrm
