#include "carrm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carrm/error.hpp"
#include "carrm/features.hpp"
#include "carrm/parallel.hpp"
#include "carrm/random.hpp"

namespace carrm {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<double> mean_weights(const RunRecord& rec) {
  std::vector<double> w;
  for (const auto& f : rec.folds) {
    if (w.empty()) w.assign(f.train_w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += f.train_w[i];
  }
  for (double& x : w) x /= static_cast<double>(rec.folds.size());
  return w;
}

Library without(const Library& lib, RuleId r) {
  Library out;
  for (RuleId x : lib)
    if (x != r) out.push_back(x);
  return out;
}

}  // namespace

ConcentrationReport concentration(std::span<const double> w) {
  double total = 0.0;
  for (double x : w) {
    if (x < -1e-12 || !std::isfinite(x)) throw Error(ErrorKind::NotSimplex, "negative or non-finite weight");
    total += x;
  }
  if (w.empty() || std::abs(total - 1.0) > 1e-6)
    throw Error(ErrorKind::NotSimplex, "weights sum to " + std::to_string(total));
  ConcentrationReport r;
  r.w.assign(w.begin(), w.end());
  for (double x : w) r.hhi += x * x;
  r.n_eff = 1.0 / r.hhi;
  return r;
}

AblationReport ablate(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                      const ModelConfig& model, const SplitPlan& plan, std::vector<RuleId> rules,
                      int threads) {
  const RunRecord full = run_cv(ds, matrix, features, model, plan, threads);
  return ablate(ds, matrix, features, model, plan, full, std::move(rules), threads);
}

AblationReport ablate(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                      const ModelConfig& model, const SplitPlan& plan, const RunRecord& full,
                      std::vector<RuleId> rules, int threads) {
  if (rules.empty()) {
    for (RuleId r : model.library)
      if (!is_attention(r)) rules.push_back(r);
  }
  AblationReport rep;
  rep.lr = full.selected_lr;
  rep.fold_mse_full = full.selected_fold_mse();
  rep.full_mse = mean_of(rep.fold_mse_full);
  rep.n_eff_full = concentration(mean_weights(full)).n_eff;

  for (RuleId r : rules) {
    if (is_attention(r)) throw Error(ErrorKind::InvalidArgument, "attention rules are not ablated");
    if (std::find(model.library.begin(), model.library.end(), r) == model.library.end())
      throw Error(ErrorKind::InvalidArgument, "rule not in library");
    ModelConfig reduced = model;
    reduced.library = without(model.library, r);
    reduced.train.lr_grid = {rep.lr};
    const RunRecord rec = run_cv(ds, matrix, features, reduced, plan, threads);
    AblationEntry e;
    e.rule = r;
    e.fold_mse_reduced = rec.selected_fold_mse();
    for (std::size_t s = 0; s < e.fold_mse_reduced.size(); ++s)
      e.fold_delta.push_back(e.fold_mse_reduced[s] - rep.fold_mse_full[s]);
    e.delta_mse = mean_of(e.fold_delta);
    e.delta_se = sd_of(e.fold_delta) / std::sqrt(static_cast<double>(e.fold_delta.size()));
    e.phi = e.delta_mse / rep.full_mse;
    e.n_eff_reduced = concentration(mean_weights(rec)).n_eff;
    e.sigma_n = (e.n_eff_reduced - rep.n_eff_full) / rep.n_eff_full;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

StaticsReport comparative_statics(const Dataset& ds, const GateParams& params,
                                  const RuleMatrix& matrix, const FeatureMatrix& features,
                                  Covariate covariate, int k_bins) {
  if (matrix.size() != ds.size() || static_cast<std::size_t>(features.rows()) != ds.size())
    throw Error(ErrorKind::LengthMismatch, "dataset, rule matrix and features differ in length");
  std::vector<double> cov(ds.size());
  for (std::size_t t = 0; t < ds.size(); ++t) {
    const auto c = menu_covariates(ds.menus[t]);
    cov[t] = covariate == Covariate::TC ? c.tc : c.risk_asym;
  }
  const auto bins = decile_bins(cov, k_bins);
  const GateBatch batch = make_batch(matrix, features, {}, params.rules);
  const auto pred = predict_batch(params, batch);

  StaticsReport rep;
  rep.covariate = covariate;
  rep.rules = params.rules;
  rep.degenerate = bins.degenerate;
  const std::size_t R = params.n_rules();
  rep.bins.resize(static_cast<std::size_t>(bins.n_bins));
  std::vector<std::size_t> used(rep.bins.size(), 0);
  for (std::size_t b = 0; b < rep.bins.size(); ++b) {
    rep.bins[b].bin = static_cast<int>(b);
    rep.bins[b].effective.assign(R, 0.0);
    rep.bins[b].latent.assign(R, 0.0);
    rep.bins[b].covariate_min = std::numeric_limits<double>::infinity();
    rep.bins[b].covariate_max = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t t = 0; t < ds.size(); ++t) {
    auto& bin = rep.bins[static_cast<std::size_t>(bins.bin[t])];
    ++bin.menus;
    bin.covariate_min = std::min(bin.covariate_min, cov[t]);
    bin.covariate_max = std::max(bin.covariate_max, cov[t]);
    for (std::size_t f = 0; f < R; ++f) bin.latent[f] += pred.q(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f));
    if (pred.guard_hit[t]) {
      ++bin.guard_excluded;
      ++rep.guard_excluded;
      continue;
    }
    ++used[static_cast<std::size_t>(bins.bin[t])];
    for (std::size_t f = 0; f < R; ++f)
      bin.effective[f] += pred.q_tilde(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f));
  }
  for (std::size_t b = 0; b < rep.bins.size(); ++b) {
    auto& bin = rep.bins[b];
    for (std::size_t f = 0; f < R; ++f) {
      if (bin.menus > 0) bin.latent[f] /= static_cast<double>(bin.menus);
      if (used[b] > 0) bin.effective[f] /= static_cast<double>(used[b]);
    }
  }
  return rep;
}

double completeness(double model_mse, const BenchmarkScores& bench) {
  const double den = bench.baseline_mse - bench.flexible_mse;
  if (!(den > 0.0))
    throw Error(ErrorKind::DegenerateDenominator, "baseline MSE must exceed flexible benchmark MSE");
  return (bench.baseline_mse - model_mse) / den;
}

Fitter constant_fitter() {
  return [](const std::vector<std::size_t>& rows, const std::vector<double>& targets) {
    const double m = mean_of(targets);
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows.size()), m);
  };
}

Fitter rule_gating_fitter(const RuleMatrix& matrix, const FeatureMatrix& features,
                          const ModelConfig& model, double lr) {
  return [&matrix, &features, model, lr](const std::vector<std::size_t>& rows,
                                         const std::vector<double>& targets) {
    GateBatch batch = make_batch(matrix, features, {}, model.library, rows);
    batch.y = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
    TrainConfig cfg = model.train;
    cfg.learning_rate = lr;
    const auto fit = train(batch, cfg);
    return Eigen::VectorXd(predict_batch(fit.params, batch).g);
  };
}

RestrictivenessReport restrictiveness(std::span<const double> targets, const Fitter& fitter,
                                      const SplitPlan& plan, int permutations, std::uint64_t seed,
                                      int threads) {
  if (permutations < 1) throw Error(ErrorKind::InvalidArgument, "permutations must be >= 1");
  validate(plan);
  const std::size_t S = static_cast<std::size_t>(plan.n_splits);
  const std::size_t P = static_cast<std::size_t>(permutations);
  RestrictivenessReport rep;
  rep.splits = plan.n_splits;
  rep.permutations = permutations;
  rep.runs.assign(S * P, 0.0);
  const Fitter constant = constant_fitter();
  parallel_for(S * P, threads, [&](std::size_t job) {
    const std::size_t s = job / P;
    const auto sp = make_split(plan, targets.size(), static_cast<int>(s));
    std::vector<double> y(sp.train.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = targets[sp.train[i]];
    Rng rng(derive_seed(seed, job));
    shuffle_in_place(y, rng);
    auto train_mse = [&](const Eigen::VectorXd& pred) {
      return metrics({pred.data(), static_cast<std::size_t>(pred.size())}, y).mse;
    };
    const double base = train_mse(constant(sp.train, y));
    if (!(base > 0.0))
      throw Error(ErrorKind::DegenerateDenominator, "permuted targets have zero variance");
    rep.runs[job] = train_mse(fitter(sp.train, y)) / base;
  });
  rep.ratio = mean_of(rep.runs);
  rep.sd = sd_of(rep.runs);
  return rep;
}

FamilyMap default_families() {
  using R = RuleId;
  return {{"extremum", {R::MMn, R::MMa, R::MMx, R::MAP}},
          {"salience", {R::SAL, R::SAL2}},
          {"regret", {R::REG, R::REGmed}},
          {"disappointment", {R::DIS, R::DISmed}},
          {"attention", {R::A1, R::A2}}};
}

CrossfitReport crossfit_topk(const Dataset& ds, const RuleMatrix& matrix,
                             const FeatureMatrix& features, const ModelConfig& model,
                             const SplitPlan& plan, double lr, std::vector<int> rule_ks,
                             std::vector<int> family_ks, const FamilyMap& families, int threads) {
  validate(ds, true);
  const std::size_t R = model.library.size();
  for (int k : rule_ks)
    if (k < 1 || static_cast<std::size_t>(k) > R) throw Error(ErrorKind::InvalidArgument, "top-k outside library size");
  for (int k : family_ks)
    if (k < 1 || static_cast<std::size_t>(k) > families.size())
      throw Error(ErrorKind::InvalidArgument, "family k outside family count");

  const std::vector<double> y = ds.targets();
  const std::size_t S = static_cast<std::size_t>(plan.n_splits);
  CrossfitReport rep;
  rep.lr = lr;
  rep.fold_mse_full.assign(S, 0.0);
  for (const auto& f : families) rep.family_names.push_back(f.first);
  std::vector<std::vector<double>> rule_mse(rule_ks.size(), std::vector<double>(S));
  std::vector<std::vector<double>> fam_mse(family_ks.size(), std::vector<double>(S));
  std::vector<std::vector<std::vector<int>>> rule_sel(rule_ks.size(), std::vector<std::vector<int>>(S));
  std::vector<std::vector<std::vector<int>>> fam_sel(family_ks.size(), std::vector<std::vector<int>>(S));

  auto canonical = [](Library lib) {
    std::sort(lib.begin(), lib.end(), [](RuleId a, RuleId b) { return index_of(a) < index_of(b); });
    return lib;
  };
  auto test_mse = [&](const Split& sp, const Library& lib) {
    ModelConfig m = model;
    m.library = lib;
    const auto fit = fit_rows(matrix, features, y, m, sp.train, lr);
    const Eigen::VectorXd pred = predict_rows(fit.params, matrix, features, sp.test);
    std::vector<double> target(sp.test.size());
    for (std::size_t i = 0; i < sp.test.size(); ++i) target[i] = y[sp.test[i]];
    return metrics({pred.data(), static_cast<std::size_t>(pred.size())}, target).mse;
  };

  parallel_for(S, threads, [&](std::size_t s) {
    const auto sp = make_split(plan, ds.size(), static_cast<int>(s));
    ModelConfig m = model;
    const auto fit = fit_rows(matrix, features, y, m, sp.train, lr);
    const Eigen::VectorXd pred = predict_rows(fit.params, matrix, features, sp.test);
    std::vector<double> target(sp.test.size());
    for (std::size_t i = 0; i < sp.test.size(); ++i) target[i] = y[sp.test[i]];
    rep.fold_mse_full[s] = metrics({pred.data(), static_cast<std::size_t>(pred.size())}, target).mse;
    const GateBatch batch = make_batch(matrix, features, y, model.library, sp.train);
    const auto w = responsibilities(fit.params, batch).w;

    std::vector<std::size_t> order(R);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    for (std::size_t i = 0; i < rule_ks.size(); ++i) {
      Library lib;
      for (int j = 0; j < rule_ks[i]; ++j) {
        lib.push_back(model.library[order[static_cast<std::size_t>(j)]]);
        rule_sel[i][s].push_back(static_cast<int>(order[static_cast<std::size_t>(j)]));
      }
      lib = canonical(lib);
      rule_mse[i][s] = lib == canonical(model.library) && lib == model.library
                           ? rep.fold_mse_full[s]
                           : test_mse(sp, lib);
    }

    std::vector<double> fw(families.size(), 0.0);
    for (std::size_t fi = 0; fi < families.size(); ++fi)
      for (RuleId r : families[fi].second)
        for (std::size_t j = 0; j < R; ++j)
          if (model.library[j] == r) fw[fi] += w[j];
    std::vector<std::size_t> forder(families.size());
    std::iota(forder.begin(), forder.end(), 0);
    std::stable_sort(forder.begin(), forder.end(), [&](std::size_t a, std::size_t b) { return fw[a] > fw[b]; });
    for (std::size_t i = 0; i < family_ks.size(); ++i) {
      Library lib;
      for (int j = 0; j < family_ks[i]; ++j) {
        const std::size_t fi = forder[static_cast<std::size_t>(j)];
        fam_sel[i][s].push_back(static_cast<int>(fi));
        for (RuleId r : families[fi].second)
          if (std::find(model.library.begin(), model.library.end(), r) != model.library.end()) lib.push_back(r);
      }
      lib = canonical(lib);
      fam_mse[i][s] = lib == model.library ? rep.fold_mse_full[s] : test_mse(sp, lib);
    }
  });

  rep.full_mse = mean_of(rep.fold_mse_full);
  auto entry = [&](int k, const std::vector<double>& fold) {
    TopKEntry e;
    e.k = k;
    e.fold_mse = fold;
    e.mse = mean_of(fold);
    e.retention = 100.0 * (1.0 - (e.mse - rep.full_mse) / rep.full_mse);
    return e;
  };
  for (std::size_t i = 0; i < rule_ks.size(); ++i) {
    rep.rules.push_back(entry(rule_ks[i], rule_mse[i]));
    std::vector<double> freq(R, 0.0);
    for (const auto& sel : rule_sel[i])
      for (int j : sel) freq[static_cast<std::size_t>(j)] += 1.0;
    for (double& x : freq) x /= static_cast<double>(S);
    rep.rule_frequency.push_back(freq);
  }
  for (std::size_t i = 0; i < family_ks.size(); ++i) {
    rep.families.push_back(entry(family_ks[i], fam_mse[i]));
    std::vector<double> freq(families.size(), 0.0);
    for (const auto& sel : fam_sel[i])
      for (int j : sel) freq[static_cast<std::size_t>(j)] += 1.0;
    for (double& x : freq) x /= static_cast<double>(S);
    rep.family_frequency.push_back(freq);
  }
  return rep;
}

}  // namespace carrm
