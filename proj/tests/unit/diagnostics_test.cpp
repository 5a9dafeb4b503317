#include <carrm/cv.hpp>
#include <carrm/dataset.hpp>
#include <carrm/diagnostics.hpp>
#include <carrm/error.hpp>
#include <carrm/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "corpus.hpp"

using namespace carrm;

namespace {

struct Problem {
  Dataset ds;
  RuleMatrix matrix;
  FeatureMatrix z;
};

Problem synthetic(std::uint64_t seed, int menus = 200) {
  SynthConfig sc;
  sc.oracle_features = false;
  sc.cells = menus / 20;
  sc.menus_per_cell = 20;
  sc.n_trials = 50;
  sc.seed = seed;
  const auto truth = random_truth(full_library(), kGateFeatureDim, RuleId::A1, 1.0, 0.5, seed + 1);
  Problem p;
  p.ds = generate_synthetic(truth, sc).dataset;
  p.matrix = build_rule_matrix(p.ds.menus);
  p.z = feature_matrix(p.ds);
  return p;
}

ModelConfig quick_model(double lr = 0.05) {
  ModelConfig m;
  m.train.epochs = 150;
  m.train.lr_grid = {lr};
  return m;
}

SplitPlan quick_plan() { return SplitPlan{3, 0.8, 0.2, 4}; }

}  // namespace

TEST(Concentration, UniformAndPointMass) {
  const auto u = concentration(std::vector<double>(12, 1.0 / 12));
  EXPECT_NEAR(u.hhi, 1.0 / 12, 1e-15);
  EXPECT_NEAR(u.n_eff, 12, 1e-12);
  std::vector<double> point(12, 0.0);
  point[3] = 1.0;
  const auto p = concentration(point);
  EXPECT_EQ(p.hhi, 1.0);
  EXPECT_EQ(p.n_eff, 1.0);
}

TEST(Concentration, RejectsNonSimplex) {
  EXPECT_THROW(concentration(std::vector<double>{0.5, 0.2}), Error);
  EXPECT_THROW(concentration(std::vector<double>{1.5, -0.5}), Error);
}

TEST(Completeness, Endpoints) {
  EXPECT_EQ(completeness(0.02215), 0.0);
  EXPECT_NEAR(completeness(0.01139), 1.0, 1e-12);
  EXPECT_NEAR(completeness(0.01168), 0.973, 1e-3);
  EXPECT_THROW(completeness(0.1, BenchmarkScores{"a", 0.1, "b", 0.1}), Error);
}

TEST(Restrictiveness, ConstantPredictorIsExactlyOne) {
  const auto p = synthetic(1);
  const auto rep = restrictiveness(p.ds.targets(), constant_fitter(), quick_plan(), 3, 9);
  EXPECT_EQ(rep.ratio, 1.0);
  EXPECT_EQ(rep.runs.size(), 9u);
  for (double r : rep.runs) EXPECT_EQ(r, 1.0);
}

TEST(Restrictiveness, InterpolatingModelNearZero) {
  const auto p = synthetic(2);
  // Lookup table: predicts each training target exactly.
  const Fitter lookup = [](const std::vector<std::size_t>&, const std::vector<double>& y) {
    return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())).eval();
  };
  const auto rep = restrictiveness(p.ds.targets(), lookup, quick_plan(), 2, 9);
  EXPECT_LT(rep.ratio, 1e-12);
}

TEST(Restrictiveness, RuleGatingDeterministic) {
  const auto p = synthetic(3);
  const auto f = rule_gating_fitter(p.matrix, p.z, quick_model(), 0.05);
  const auto a = restrictiveness(p.ds.targets(), f, quick_plan(), 1, 5);
  const auto b = restrictiveness(p.ds.targets(), f, quick_plan(), 1, 5, 2);
  EXPECT_EQ(a.runs, b.runs);
  EXPECT_GT(a.ratio, 0.0);
  EXPECT_LE(a.ratio, 1.0 + 1e-12);
}

TEST(Ablation, InactiveRuleHasZeroImpact) {
  // Menus with equal minima keep MMn inactive everywhere.
  Dataset ds;
  ds.name = "eqmin";
  Rng rng(4);
  for (const auto& m : corpus::menus(2000, 40)) {
    if (m.left.min() != m.right.min()) continue;
    ds.menus.push_back(make_menu("m" + std::to_string(ds.menus.size()), m.left, m.right, 0.2 + 0.6 * uniform01(rng)));
    if (ds.menus.size() == 60) break;
  }
  ASSERT_EQ(ds.menus.size(), 60u);
  derive_rescale_factor(ds);
  const auto matrix = build_rule_matrix(ds.menus);
  ASSERT_EQ(matrix.activity_counts()[index_of(RuleId::MMn)], 0u);
  const auto z = feature_matrix(ds);
  const auto rep = ablate(ds, matrix, z, quick_model(), quick_plan(), {RuleId::MMn});
  ASSERT_EQ(rep.entries.size(), 1u);
  EXPECT_NEAR(rep.entries[0].phi, 0.0, 1e-12);
  EXPECT_NEAR(rep.entries[0].delta_mse, 0.0, 1e-15);
}

TEST(Ablation, EntryPerNonAttentionRule) {
  const auto p = synthetic(5);
  const auto rep = ablate(p.ds, p.matrix, p.z, quick_model(), SplitPlan{2, 0.8, 0.2, 1});
  EXPECT_EQ(rep.entries.size(), 10u);
  for (const auto& e : rep.entries) {
    EXPECT_FALSE(is_attention(e.rule));
    EXPECT_EQ(e.fold_delta.size(), 2u);
    EXPECT_NEAR(e.phi, e.delta_mse / rep.full_mse, 1e-15);
  }
  EXPECT_THROW(ablate(p.ds, p.matrix, p.z, quick_model(), SplitPlan{2, 0.8, 0.2, 1}, {RuleId::A1}), Error);
}

TEST(Statics, ConstantGateFlatLatent) {
  const auto p = synthetic(6);
  auto params = GateParams::zeros(full_library(), kGateFeatureDim);
  params.alpha(2) = 1.5;
  const auto rep = comparative_statics(p.ds, params, p.matrix, p.z, Covariate::TC, 5);
  ASSERT_FALSE(rep.bins.empty());
  for (const auto& b : rep.bins)
    for (std::size_t f = 0; f < kNumRules; ++f) EXPECT_NEAR(b.latent[f], rep.bins[0].latent[f], 1e-12);
  std::size_t menus = 0;
  for (const auto& b : rep.bins) menus += b.menus;
  EXPECT_EQ(menus, p.ds.size());
}

TEST(Statics, RiskAsymBinsOrdered) {
  const auto p = synthetic(7);
  const auto rep = comparative_statics(p.ds, GateParams::zeros(full_library(), kGateFeatureDim), p.matrix, p.z,
                                       Covariate::RiskAsym, 4);
  for (std::size_t b = 1; b < rep.bins.size(); ++b)
    EXPECT_LE(rep.bins[b - 1].covariate_max, rep.bins[b].covariate_min);
}

TEST(Crossfit, FullLibraryMatchesFullModel) {
  const auto p = synthetic(8);
  const auto plan = SplitPlan{2, 0.8, 0.2, 3};
  const auto rep = crossfit_topk(p.ds, p.matrix, p.z, quick_model(), plan, 0.05, {12, 4}, {5}, default_families());
  ASSERT_EQ(rep.rules.size(), 2u);
  for (std::size_t s = 0; s < rep.fold_mse_full.size(); ++s)
    EXPECT_NEAR(rep.rules[0].fold_mse[s], rep.fold_mse_full[s], 1e-12);
  EXPECT_NEAR(rep.rules[0].retention, 100.0, 1e-9);
  double share = 0;
  for (double f : rep.rule_frequency[1]) share += f;
  EXPECT_NEAR(share, 4.0, 1e-12);
}

TEST(Families, CoverLibrary) {
  std::map<RuleId, int> seen;
  for (const auto& [name, rules] : default_families())
    for (RuleId r : rules) ++seen[r];
  EXPECT_EQ(seen.size(), kNumRules);
  for (const auto& [r, n] : seen) EXPECT_EQ(n, 1) << rule_name(r);
}
