#include "carrm/cv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

#include "carrm/error.hpp"
#include "carrm/parallel.hpp"
#include "carrm/random.hpp"

namespace carrm {

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

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

std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> rows) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[rows[i]];
  return out;
}

}  // namespace

void validate(const SplitPlan& plan) {
  if (plan.n_splits < 1) throw Error(ErrorKind::InvalidArgument, "n_splits must be >= 1");
  if (!(plan.train_fraction > 0.0 && plan.train_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "train_fraction outside (0,1)");
  if (!(plan.inner_val_fraction > 0.0 && plan.inner_val_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "inner_val_fraction outside (0,1)");
}

Split make_split(const SplitPlan& plan, std::size_t n, int s) {
  validate(plan);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(plan.seed, static_cast<std::uint64_t>(s)));
  shuffle_in_place(idx, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(plan.train_fraction * static_cast<double>(n)));
  Split sp;
  sp.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  sp.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::vector<std::size_t> inner = sp.train;
  shuffle_in_place(inner, rng);
  const auto n_val = static_cast<std::size_t>(std::llround(plan.inner_val_fraction * static_cast<double>(inner.size())));
  sp.validation.assign(inner.begin(), inner.begin() + static_cast<std::ptrdiff_t>(n_val));
  sp.sub_train.assign(inner.begin() + static_cast<std::ptrdiff_t>(n_val), inner.end());
  if (sp.train.empty() || sp.test.empty() || sp.sub_train.empty() || sp.validation.empty())
    throw Error(ErrorKind::TooFewMenus, "split leaves an empty partition");
  return sp;
}

Metrics metrics(std::span<const double> preds, std::span<const double> targets,
                std::span<const double> trials) {
  if (preds.size() != targets.size())
    throw Error(ErrorKind::LengthMismatch, "predictions and targets differ in length");
  if (!trials.empty() && trials.size() != preds.size())
    throw Error(ErrorKind::LengthMismatch, "trial counts differ in length");
  if (preds.empty()) throw Error(ErrorKind::EmptyDataset, "no predictions to score");
  Metrics m;
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  m.mse = s / static_cast<double>(preds.size());
  if (!trials.empty()) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      num += trials[i] * (preds[i] - targets[i]) * (preds[i] - targets[i]);
      den += trials[i];
    }
    if (den <= 0.0) throw Error(ErrorKind::ZeroMass, "trial counts sum to zero");
    // Equal counts reduce exactly to the unweighted mean.
    const bool equal = std::all_of(trials.begin(), trials.end(), [&](double t) { return t == trials[0]; });
    m.mse_w = equal ? m.mse : num / den;
  }
  return m;
}

TrainResult fit_rows(const RuleMatrix& matrix, const FeatureMatrix& features,
                     std::span<const double> targets, const ModelConfig& model,
                     std::span<const std::size_t> rows, double lr) {
  const GateBatch batch = make_batch(matrix, features, targets, model.library, rows);
  TrainConfig cfg = model.train;
  cfg.learning_rate = lr;
  return train(batch, cfg);
}

Eigen::VectorXd predict_rows(const GateParams& params, const RuleMatrix& matrix,
                             const FeatureMatrix& features, std::span<const std::size_t> rows) {
  const GateBatch batch = make_batch(matrix, features, {}, params.rules, rows);
  return predict_batch(params, batch).g;
}

std::vector<double> RunRecord::selected_fold_mse() const {
  std::vector<double> out;
  for (const auto& f : folds) out.push_back(f.test_mse[selected_index]);
  return out;
}

RunRecord run_cv(const Dataset& ds, const RuleMatrix& matrix, const FeatureMatrix& features,
                 const ModelConfig& model, const SplitPlan& plan, int threads) {
  validate(ds, true);
  validate(plan);
  validate(model.train);
  if (model.train.lr_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty lr_grid");

  RunRecord rec;
  rec.started = now_utc();
  rec.dataset = ds.name;
  rec.plan = plan;
  rec.model = model;
  rec.lr_grid = model.train.lr_grid;
  const std::vector<double> y = ds.targets();
  std::vector<double> trials;
  bool have_trials = std::all_of(ds.menus.begin(), ds.menus.end(), [](const Menu& m) { return m.n_trials.has_value(); });
  if (have_trials) trials = ds.trial_counts();

  const std::size_t S = static_cast<std::size_t>(plan.n_splits);
  const std::size_t G = rec.lr_grid.size();
  std::vector<Split> splits(S);
  for (std::size_t s = 0; s < S; ++s) splits[s] = make_split(plan, ds.size(), static_cast<int>(s));
  rec.folds.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    rec.folds[s].split = static_cast<int>(s);
    rec.folds[s].val_mse.assign(G, 0.0);
    rec.folds[s].test_mse.assign(G, 0.0);
    if (have_trials) rec.folds[s].test_mse_w.assign(G, 0.0);
  }

  // Pass A: inner validation only.
  if (G > 1) {
    parallel_for(S * G, threads, [&](std::size_t job) {
      const std::size_t s = job / G;
      const std::size_t g = job % G;
      const auto& sp = splits[s];
      const auto fit = fit_rows(matrix, features, y, model, sp.sub_train, rec.lr_grid[g]);
      const Eigen::VectorXd pred = predict_rows(fit.params, matrix, features, sp.validation);
      const auto target = gather(y, sp.validation);
      rec.folds[s].val_mse[g] = metrics({pred.data(), static_cast<std::size_t>(pred.size())}, target).mse;
    });
  }
  rec.mean_val_mse.assign(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    for (const auto& f : rec.folds) rec.mean_val_mse[g] += f.val_mse[g];
    rec.mean_val_mse[g] /= static_cast<double>(S);
  }
  // Selection is fixed here, before any test-set score exists.
  rec.selected_index = static_cast<std::size_t>(
      std::min_element(rec.mean_val_mse.begin(), rec.mean_val_mse.end()) - rec.mean_val_mse.begin());
  rec.selected_lr = rec.lr_grid[rec.selected_index];

  // Pass B: refit on the full training set at every candidate rate.
  parallel_for(S * G, threads, [&](std::size_t job) {
    const std::size_t s = job / G;
    const std::size_t g = job % G;
    const auto& sp = splits[s];
    const auto fit = fit_rows(matrix, features, y, model, sp.train, rec.lr_grid[g]);
    const Eigen::VectorXd pred = predict_rows(fit.params, matrix, features, sp.test);
    const auto target = gather(y, sp.test);
    std::vector<double> tr;
    if (have_trials) tr = gather(trials, sp.test);
    const auto m = metrics({pred.data(), static_cast<std::size_t>(pred.size())}, target, tr);
    rec.folds[s].test_mse[g] = m.mse;
    if (have_trials) rec.folds[s].test_mse_w[g] = *m.mse_w;
    if (g == rec.selected_index) {
      const GateBatch batch = make_batch(matrix, features, y, model.library, sp.train);
      rec.folds[s].train_w = responsibilities(fit.params, batch).w;
      rec.folds[s].params = fit.params;
    }
  });

  rec.mean_test_mse.assign(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    for (const auto& f : rec.folds) rec.mean_test_mse[g] += f.test_mse[g];
    rec.mean_test_mse[g] /= static_cast<double>(S);
  }
  const auto sel = rec.selected_fold_mse();
  rec.test_mse_mean = mean_of(sel);
  rec.test_mse_sd = sd_of(sel);
  if (have_trials) {
    std::vector<double> w;
    for (const auto& f : rec.folds) w.push_back(f.test_mse_w[rec.selected_index]);
    rec.test_mse_w_mean = mean_of(w);
  }
  rec.finished = now_utc();
  return rec;
}

std::vector<LearningCurvePoint> learning_curve(const Dataset& ds, const RuleMatrix& matrix,
                                               const FeatureMatrix& features,
                                               const ModelConfig& model, const SplitPlan& plan,
                                               double lr, std::vector<double> fractions,
                                               int threads) {
  validate(ds, true);
  if (fractions.empty()) fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fraction outside (0,1]");
  const std::vector<double> y = ds.targets();
  const std::size_t S = static_cast<std::size_t>(plan.n_splits);
  const std::size_t P = fractions.size();
  std::vector<std::vector<double>> mse(P, std::vector<double>(S, 0.0));
  parallel_for(S * P, threads, [&](std::size_t job) {
    const std::size_t s = job / P;
    const std::size_t p = job % P;
    const auto sp = make_split(plan, ds.size(), static_cast<int>(s));
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fractions[p] * static_cast<double>(sp.train.size()))));
    const std::vector<std::size_t> rows(sp.train.begin(), sp.train.begin() + static_cast<std::ptrdiff_t>(n));
    const auto fit = fit_rows(matrix, features, y, model, rows, lr);
    const Eigen::VectorXd pred = predict_rows(fit.params, matrix, features, sp.test);
    mse[p][s] = metrics({pred.data(), static_cast<std::size_t>(pred.size())}, gather(y, sp.test)).mse;
  });
  std::vector<LearningCurvePoint> out;
  for (std::size_t p = 0; p < P; ++p) out.push_back({fractions[p], mean_of(mse[p]), sd_of(mse[p])});
  return out;
}

PortabilityReport portability(const GateParams& params, const Dataset& target, double epsilon) {
  validate(target, true);
  if (params.rescale_source.empty())
    throw Error(ErrorKind::InvalidArgument, "parameters carry no rescale-factor provenance");
  if (params.rescale_source == target.name)
    throw Error(ErrorKind::InvalidArgument,
                "rescale factor was derived from the target dataset '" + target.name + "'");
  const FeatureKind kind = params.dim() == kRawDim && params.feature_names.size() == kRawDim &&
                                   params.feature_names.front() == "left_x1"
                               ? FeatureKind::Raw
                               : FeatureKind::Gate;
  Dataset plain = target;
  plain.feature_override.reset();
  const FeatureMatrix z = feature_matrix(plain, kind, params.rescale_factor);
  const RuleMatrix matrix = build_rule_matrix(target.menus, epsilon);
  const GateBatch batch = make_batch(matrix, z, {}, params.rules);
  const Eigen::VectorXd g = predict_batch(params, batch).g;

  PortabilityReport rep;
  rep.menus = target.size();
  rep.rescale_factor = params.rescale_factor;
  rep.rescale_source = params.rescale_source;
  const auto y = target.targets();
  rep.mse_menu = metrics({g.data(), static_cast<std::size_t>(g.size())}, y).mse;
  if (target.trials.empty()) throw Error(ErrorKind::MissingTrials, "target dataset has no trial records");
  double brier = 0.0;
  double ll = 0.0;
  for (const auto& tr : target.trials) {
    if (tr.menu >= target.size()) throw Error(ErrorKind::SchemaViolation, "trial references unknown menu");
    const double p = g(static_cast<Eigen::Index>(tr.menu));
    const double yy = tr.chose_left ? 1.0 : 0.0;
    brier += (p - yy) * (p - yy);
    const double pc = std::clamp(p, 1e-9, 1.0 - 1e-9);
    ll -= yy * std::log(pc) + (1.0 - yy) * std::log(1.0 - pc);
  }
  rep.trials = target.trials.size();
  rep.brier_trial = brier / static_cast<double>(rep.trials);
  rep.logloss_trial = ll / static_cast<double>(rep.trials);
  return rep;
}

}  // namespace carrm
