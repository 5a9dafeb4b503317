#include <carrm/cv.hpp>
#include <carrm/dataset.hpp>
#include <carrm/error.hpp>
#include <carrm/synth.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace carrm;

namespace {

Dataset synthetic(std::uint64_t seed, int menus = 200, int n_trials = 40) {
  SynthConfig sc;
  sc.oracle_features = false;
  sc.cells = menus / 20;
  sc.menus_per_cell = 20;
  sc.n_trials = n_trials;
  sc.seed = seed;
  const auto truth = random_truth(full_library(), kGateFeatureDim, RuleId::A1, 1.0, 0.5, seed + 1);
  auto ds = generate_synthetic(truth, sc).dataset;
  ds.name = "synthetic_" + std::to_string(seed);
  return ds;
}

ModelConfig quick_model() {
  ModelConfig m;
  m.train.epochs = 100;
  m.train.lr_grid = {0.01, 0.05};
  return m;
}

// Expands menu-level counts into trial records.
void add_trials(Dataset& ds) {
  for (std::size_t t = 0; t < ds.size(); ++t) {
    const int n = *ds.menus[t].n_trials;
    const int left = static_cast<int>(std::lround(*ds.menus[t].choice_rate * n));
    for (int i = 0; i < n; ++i) ds.trials.push_back({t, i < left});
  }
}

}  // namespace

TEST(Metrics, Examples) {
  const std::vector<double> y = {0.0, 1.0};
  EXPECT_EQ(metrics(y, y).mse, 0.0);
  EXPECT_EQ(metrics(std::vector<double>{0.5, 0.5}, y).mse, 0.25);
  const auto m = metrics(std::vector<double>{0.2, 0.9}, y, std::vector<double>{7, 7});
  ASSERT_TRUE(m.mse_w.has_value());
  EXPECT_NEAR(*m.mse_w, m.mse, 1e-15);
  const auto w = metrics(std::vector<double>{0.0, 0.5}, y, std::vector<double>{1, 3});
  EXPECT_NEAR(*w.mse_w, 0.75 * 0.25, 1e-15);
  EXPECT_THROW(metrics(std::vector<double>{0.5}, y), Error);
}

TEST(Splits, PartitionAndDeterminism) {
  const SplitPlan plan{5, 0.9, 0.2, 11};
  for (int s = 0; s < 5; ++s) {
    const auto a = make_split(plan, 100, s);
    EXPECT_EQ(a.train.size(), 90u);
    EXPECT_EQ(a.test.size(), 10u);
    EXPECT_EQ(a.validation.size(), 18u);
    EXPECT_EQ(a.sub_train.size() + a.validation.size(), a.train.size());
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    all.insert(a.test.begin(), a.test.end());
    EXPECT_EQ(all.size(), 100u);
    std::set<std::size_t> inner(a.sub_train.begin(), a.sub_train.end());
    inner.insert(a.validation.begin(), a.validation.end());
    EXPECT_EQ(inner, std::set<std::size_t>(a.train.begin(), a.train.end()));
    const auto b = make_split(plan, 100, s);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.validation, b.validation);
  }
  EXPECT_NE(make_split(plan, 100, 0).test, make_split(plan, 100, 1).test);
}

TEST(Splits, RejectsBadPlans) {
  EXPECT_THROW(validate(SplitPlan{0, 0.9, 0.2, 0}), Error);
  EXPECT_THROW(validate(SplitPlan{5, 1.0, 0.2, 0}), Error);
  EXPECT_THROW(validate(SplitPlan{5, 0.9, 0.0, 0}), Error);
}

TEST(RunCv, SelectsFromGridAndIsDeterministic) {
  const auto ds = synthetic(1);
  const auto matrix = build_rule_matrix(ds.menus);
  const auto z = feature_matrix(ds);
  const SplitPlan plan{3, 0.8, 0.2, 2};
  const auto a = run_cv(ds, matrix, z, quick_model(), plan);
  const auto b = run_cv(ds, matrix, z, quick_model(), plan, 3);
  EXPECT_EQ(a.mean_val_mse.size(), 2u);
  EXPECT_EQ(a.folds.size(), 3u);
  const auto best = static_cast<std::size_t>(
      std::min_element(a.mean_val_mse.begin(), a.mean_val_mse.end()) - a.mean_val_mse.begin());
  EXPECT_EQ(a.selected_index, best);
  EXPECT_EQ(a.selected_lr, quick_model().train.lr_grid[best]);
  EXPECT_EQ(a.selected_fold_mse(), b.selected_fold_mse());
  EXPECT_TRUE(a.test_mse_w_mean.has_value());
  double mean = 0;
  for (double v : a.selected_fold_mse()) mean += v / 3.0;
  EXPECT_NEAR(a.test_mse_mean, mean, 1e-15);
  for (const auto& f : a.folds) {
    double sum = 0;
    for (double w : f.train_w) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(RunCv, SinglePointGridSkipsSelection) {
  const auto ds = synthetic(2);
  const auto matrix = build_rule_matrix(ds.menus);
  const auto z = feature_matrix(ds);
  auto model = quick_model();
  model.train.lr_grid = {0.02};
  const auto rec = run_cv(ds, matrix, z, model, SplitPlan{2, 0.8, 0.2, 2});
  EXPECT_EQ(rec.selected_lr, 0.02);
  EXPECT_TRUE(rec.mean_val_mse.empty() || rec.mean_val_mse.size() == 1u);
}

TEST(RunCv, RequiresTargets) {
  auto ds = synthetic(3);
  ds.menus[4].choice_rate.reset();
  const auto matrix = build_rule_matrix(ds.menus);
  EXPECT_THROW(run_cv(ds, matrix, feature_matrix(ds), quick_model(), SplitPlan{2, 0.8, 0.2, 0}), Error);
}

TEST(LearningCurve, FullFractionMatchesPassB) {
  const auto ds = synthetic(4);
  const auto matrix = build_rule_matrix(ds.menus);
  const auto z = feature_matrix(ds);
  auto model = quick_model();
  model.train.lr_grid = {0.05};
  const SplitPlan plan{2, 0.8, 0.2, 6};
  const auto curve = learning_curve(ds, matrix, z, model, plan, 0.05, {0.25, 1.0});
  ASSERT_EQ(curve.size(), 2u);
  const auto rec = run_cv(ds, matrix, z, model, plan);
  EXPECT_NEAR(curve[1].test_mse_mean, rec.test_mse_mean, 1e-12);
  EXPECT_THROW(learning_curve(ds, matrix, z, model, plan, 0.05, {0.0}), Error);
}

TEST(Portability, EmpiricalRatesGiveBernoulliVariance) {
  auto target = synthetic(5, 60, 20);
  add_trials(target);
  // Within-menu Bernoulli variance, averaged over trials.
  double bernoulli = 0.0;
  for (const auto& m : target.menus) bernoulli += *m.choice_rate * (1 - *m.choice_rate) * *m.n_trials;
  bernoulli /= static_cast<double>(target.trials.size());

  auto params = GateParams::zeros(Library{RuleId::A1, RuleId::A2}, kGateFeatureDim);
  params.rescale_factor = 50;
  params.rescale_source = "other";
  const auto rep = portability(params, target);
  EXPECT_EQ(rep.menus, target.size());
  EXPECT_EQ(rep.trials, target.trials.size());
  // Uniform over {A1, A2} predicts 0.5 everywhere.
  EXPECT_NEAR(rep.brier_trial, 0.25, 1e-12);
  EXPECT_NEAR(rep.logloss_trial, std::log(2.0), 1e-12);
  double mse = 0;
  for (const auto& m : target.menus) mse += std::pow(*m.choice_rate - 0.5, 2);
  EXPECT_NEAR(rep.mse_menu, mse / static_cast<double>(target.size()), 1e-12);
  // Brier decomposes into menu error plus within-menu variance.
  double decomposed = 0;
  for (const auto& m : target.menus) decomposed += std::pow(*m.choice_rate - 0.5, 2) * *m.n_trials;
  decomposed = decomposed / static_cast<double>(target.trials.size()) + bernoulli;
  EXPECT_NEAR(rep.brier_trial, decomposed, 1e-12);
}

TEST(Portability, RefusesSelfDerivedScaling) {
  auto target = synthetic(6, 40, 10);
  add_trials(target);
  auto params = GateParams::zeros(full_library(), kGateFeatureDim);
  params.rescale_source = target.name;
  EXPECT_THROW(portability(params, target), Error);
  params.rescale_source = "";
  EXPECT_THROW(portability(params, target), Error);
  auto no_trials = synthetic(6, 40, 10);
  params.rescale_source = "other";
  EXPECT_THROW(portability(params, no_trials), Error);
}
