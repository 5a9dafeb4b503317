#include <carrm/dataset.hpp>
#include <carrm/error.hpp>
#include <carrm/identification.hpp>
#include <carrm/synth.hpp>
#include <carrm/two_step.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace carrm;

namespace {

Lottery lot(std::vector<double> x, std::vector<double> p) { return Lottery::canonicalize(x, p); }

GateParams truth(std::uint64_t seed = 7) {
  return random_truth(full_library(), kGateFeatureDim, RuleId::A1, 0.5, 0.15, seed);
}

SyntheticData oracle_data(int cells, std::uint64_t seed) {
  SynthConfig sc;
  sc.cells = cells;
  sc.menus_per_cell = 20;
  sc.seed = seed;
  return generate_synthetic(truth(), sc);
}

}  // namespace

TEST(RestrictionRow, UnitOdds) {
  const auto m = make_menu("a", lot({0, 10}, {0.5, 0.5}), Lottery::degenerate(1), 0.5);
  const auto row = evaluate_rules(m, 0.0, 101);
  const auto rr = restriction_row(m, row, full_library());
  EXPECT_DOUBLE_EQ(rr.r, 1.0);
  for (std::size_t f = 0; f < kNumRules; ++f) {
    const double expect = row[f].active ? (row[f].left ? 1.0 : -1.0) : 0.0;
    EXPECT_DOUBLE_EQ(rr.h[f], expect);
  }
}

TEST(RestrictionRow, DecisiveRightScalesByOdds) {
  const auto m = make_menu("a", Lottery::degenerate(0), Lottery::degenerate(1), 2.0 / 3.0);
  const auto row = evaluate_rules(m, 0.0, 11);
  const auto rr = restriction_row(m, row, full_library());
  EXPECT_NEAR(rr.h[index_of(RuleId::MMn)], -2.0, 1e-12);
  EXPECT_NEAR(rr.h[index_of(RuleId::A1)], 1.0, 1e-12);
}

TEST(RestrictionRow, TrimsExtremeRates) {
  const auto m = make_menu("a", Lottery::degenerate(0), Lottery::degenerate(1), 1.0);
  const auto rr = restriction_row(m, evaluate_rules(m, 0.0, 11), full_library(), 1e-4);
  EXPECT_TRUE(std::isfinite(rr.r));
  EXPECT_NEAR(rr.r, (1 - 1e-4) / 1e-4, 1e-6);
}

TEST(RestrictionRow, AnnihilatesTrueOdds) {
  const auto data = oracle_data(5, 3);
  const auto p = truth();
  const auto matrix = build_rule_matrix(data.dataset.menus);
  const auto z = feature_matrix(data.dataset);
  for (std::size_t t = 0; t < data.dataset.size(); ++t) {
    const auto zr = z.row(static_cast<Eigen::Index>(t));
    const std::vector<double> zv(zr.data(), zr.data() + zr.size());
    const auto w = gate_weights(p, zv);
    const auto rr = restriction_row(data.dataset.menus[t], matrix.row(t), full_library());
    double dot = 0;
    for (std::size_t f = 0; f < kNumRules; ++f) dot += rr.h[f] * w(static_cast<Eigen::Index>(f));
    EXPECT_LT(std::abs(dot) / w(static_cast<Eigen::Index>(index_of(RuleId::A1))), 1e-9);
  }
}

TEST(TwoSided, AttentionPairAlwaysTwoSided) {
  const auto m = make_menu("a", Lottery::degenerate(0), Lottery::degenerate(0));
  EXPECT_TRUE(is_two_sided(evaluate_rules(m, 0.0, 1), full_library()));
  EXPECT_FALSE(is_two_sided(evaluate_rules(m, 0.0, 1), Library{RuleId::A1, RuleId::MMn}));
}

TEST(BuildCells, ExactGroups) {
  FeatureMatrix z(100, 3);
  for (int i = 0; i < 100; ++i) z.row(i) << i % 5, 2.0 * (i % 5), 1.0;
  const auto cells = build_cells(z, 50, 1);
  EXPECT_EQ(cells.n_cells, 5);
  EXPECT_EQ(cells.kmeans.clustered_menus, 0u);
  for (bool e : cells.exact) EXPECT_TRUE(e);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(cells.cell_of[static_cast<std::size_t>(i)], cells.cell_of[static_cast<std::size_t>(i % 5)]);
}

TEST(BuildCells, KMeansDeterministic) {
  FeatureMatrix z(200, 4);
  Rng rng(2);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = nd(rng);
  const auto a = build_cells(z, 10, 5);
  const auto b = build_cells(z, 10, 5);
  EXPECT_EQ(a.cell_of, b.cell_of);
  EXPECT_EQ(a.n_cells, 10);
  EXPECT_EQ(a.kmeans.clustered_menus, 200u);
  const auto members = a.members();
  for (const auto& m : members) EXPECT_FALSE(m.empty());
}

TEST(CellRank, SingleAndProportionalRows) {
  CellSystem one;
  one.H = Eigen::MatrixXd::Zero(1, 4);
  one.H << 1, -2, 0, 3;
  EXPECT_EQ(cell_rank(one, 4).rank, 1);
  CellSystem prop;
  prop.H.resize(3, 4);
  prop.H << 1, -2, 0, 3, 2, -4, 0, 6, -0.5, 1, 0, -1.5;
  EXPECT_EQ(cell_rank(prop, 4).rank, 1);
}

TEST(CellRank, ElevenIndependentPatterns) {
  // Rows e_f - r_f e_A1 for f != A1: eleven independent switching patterns.
  CellSystem c;
  c.H = Eigen::MatrixXd::Zero(11, 12);
  int row = 0;
  for (std::size_t f = 0; f < kNumRules; ++f) {
    if (f == index_of(RuleId::A1)) continue;
    c.H(row, static_cast<Eigen::Index>(f)) = 1.0;
    c.H(row, static_cast<Eigen::Index>(index_of(RuleId::A1))) = -(1.0 + row);
    ++row;
  }
  const auto r = cell_rank(c, kNumRules);
  EXPECT_EQ(r.rank, 11);
  EXPECT_TRUE(std::isinf(r.gap));
}

TEST(IdentReport, SyntheticIdentified) {
  const auto data = oracle_data(13, 11);
  const auto matrix = build_rule_matrix(data.dataset.menus);
  const auto z = feature_matrix(data.dataset);
  IdentConfig cfg;
  cfg.k = 13;
  const auto rep = ident_report(data.dataset, matrix, z, cfg);
  EXPECT_TRUE(rep.verdict);
  EXPECT_EQ(rep.two_sided, rep.menus);
  EXPECT_EQ(rep.g1_needed, 12);
  EXPECT_GE(rep.g1_pass_count, 12);
  EXPECT_EQ(rep.d_eff, 11);
  EXPECT_EQ(rep.g2_rank, 12);
  EXPECT_EQ(rep.coverage.size(), kNumRules);
  EXPECT_FALSE(format_ident_report(rep).empty());
}

TEST(IdentReport, InactiveRuleFailsRankCondition) {
  // Equal minima keep MMn inactive everywhere, so its H column is zero, and a
  // constant choice rate makes every remaining row identical.
  Dataset ds;
  ds.name = "deg";
  for (int i = 0; i < 30; ++i) {
    const double hi = 2 + i % 7;
    ds.menus.push_back(make_menu("m" + std::to_string(i), lot({0, hi}, {0.5, 0.5}), lot({0, 1 + hi}, {0.6, 0.4}),
                                 0.3));
  }
  const auto matrix = build_rule_matrix(ds.menus);
  FeatureMatrix z = FeatureMatrix::Zero(30, 2);
  IdentConfig cfg;
  cfg.library = {RuleId::A1, RuleId::A2, RuleId::MMn};
  const auto rep = ident_report(ds, matrix, z, cfg);
  EXPECT_EQ(rep.two_sided, 30u);
  EXPECT_EQ(rep.g1_pass_count, 0);
  EXPECT_FALSE(rep.verdict);
}

TEST(IdentReport, RequiresTargets) {
  Dataset ds;
  ds.menus.push_back(make_menu("a", Lottery::degenerate(0), Lottery::degenerate(1)));
  const auto matrix = build_rule_matrix(ds.menus);
  EXPECT_THROW(ident_report(ds, matrix, FeatureMatrix::Zero(1, 12), IdentConfig{}), Error);
}

TEST(LogOdds, MatchesPrediction) {
  const auto p = truth(3);
  const auto data = oracle_data(2, 4);
  const auto matrix = build_rule_matrix(data.dataset.menus);
  const auto z = feature_matrix(data.dataset);
  for (std::size_t t = 0; t < data.dataset.size(); ++t) {
    const auto zr = z.row(static_cast<Eigen::Index>(t));
    const std::vector<double> zv(zr.data(), zr.data() + zr.size());
    const double g = predict(p, zv, matrix.row(t)).g;
    EXPECT_NEAR(log_odds(p, zv, matrix.row(t)), std::log(g / (1 - g)), 1e-9);
  }
}

TEST(LogOddsGradient, FiniteDifferencesAndInactiveZero) {
  const auto p = truth(5);
  const auto data = oracle_data(2, 6);
  const auto matrix = build_rule_matrix(data.dataset.menus);
  const auto z = feature_matrix(data.dataset);
  const std::size_t d = kGateFeatureDim;
  for (std::size_t t = 0; t < 10; ++t) {
    const auto zr = z.row(static_cast<Eigen::Index>(t));
    const std::vector<double> zv(zr.data(), zr.data() + zr.size());
    const auto& row = matrix.row(t);
    const auto grad = log_odds_gradient(p, RuleId::A1, zv, row);
    ASSERT_EQ(grad.size(), static_cast<Eigen::Index>(11 * (1 + d)));
    Eigen::Index block = 0;
    for (std::size_t f = 0; f < kNumRules; ++f) {
      if (f == index_of(RuleId::A1)) continue;
      const auto fi = static_cast<Eigen::Index>(f);
      auto hi = p, lo = p;
      hi.alpha(fi) += 1e-6;
      lo.alpha(fi) -= 1e-6;
      const double fd = (log_odds(hi, zv, row) - log_odds(lo, zv, row)) / 2e-6;
      EXPECT_NEAR(grad(block), fd, 1e-6);
      if (!row[f].active) {
        EXPECT_EQ(grad.segment(block, 1 + static_cast<Eigen::Index>(d)).cwiseAbs().maxCoeff(), 0.0);
      }
      block += 1 + static_cast<Eigen::Index>(d);
    }
  }
}

TEST(JacobianRank, FullOnEffectiveColumns) {
  const auto data = oracle_data(13, 12);
  const auto matrix = build_rule_matrix(data.dataset.menus);
  const auto z = feature_matrix(data.dataset);
  const auto jr = jacobian_local_rank(truth(), RuleId::A1, matrix, z);
  EXPECT_EQ(jr.columns, 11u * 13u);
  EXPECT_EQ(jr.effective_columns, 11u * 12u);
  EXPECT_EQ(jr.rank, static_cast<int>(jr.effective_columns));
}
