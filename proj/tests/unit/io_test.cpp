#include <carrm/error.hpp>
#include <carrm/io.hpp>
#include <carrm/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>

using namespace carrm;

namespace {

const std::filesystem::path kData = CARRM_TEST_DATA;

Lottery lot(std::vector<double> x, std::vector<double> p) { return Lottery::canonicalize(x, p); }

::testing::AssertionResult same(const Lottery& a, const Lottery& b) {
  if (a.outcomes() != b.outcomes()) return ::testing::AssertionFailure() << "outcomes differ";
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a.probs()[i] - b.probs()[i]) > 1e-12) return ::testing::AssertionFailure() << "probs differ at " << i;
  return ::testing::AssertionSuccess();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no carrm::Error thrown";
  return ErrorKind::Io;
}

}  // namespace

TEST(Schema, Names) {
  EXPECT_EQ(parse_schema("canonical"), Schema::Canonical);
  EXPECT_EQ(parse_schema("choices13k"), Schema::Choices13k);
  EXPECT_EQ(parse_schema("cpc18"), Schema::Cpc18);
  EXPECT_FALSE(parse_schema("xlsx").has_value());
}

TEST(Canonical, ParsesFixture) {
  const auto ds = load_csv(kData / "canonical.csv", Schema::Canonical);
  ASSERT_EQ(ds.size(), 4u);
  const auto& m1 = ds.menus[0];
  EXPECT_EQ(m1.id, "m1");
  EXPECT_EQ(m1.left, lot({0, 10}, {0.5, 0.5}));
  EXPECT_EQ(m1.right, Lottery::degenerate(1));
  EXPECT_EQ(*m1.choice_rate, 0.64);
  EXPECT_EQ(*m1.n_trials, 25);
  EXPECT_FALSE(ds.menus[2].n_trials.has_value());
  EXPECT_FALSE(ds.menus[3].choice_rate.has_value());
  EXPECT_EQ(ds.rescale_factor, 10);
}

TEST(Canonical, RoundTrip) {
  SynthConfig sc;
  sc.oracle_features = false;
  sc.cells = 2;
  sc.menus_per_cell = 10;
  sc.n_trials = 30;
  const auto truth = random_truth(full_library(), kGateFeatureDim, RuleId::A1, 1, 1, 3);
  const auto ds = generate_synthetic(truth, sc).dataset;
  const auto back = parse_canonical_csv(to_canonical_csv(ds), "back");
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t t = 0; t < ds.size(); ++t) {
    EXPECT_EQ(back.menus[t].id, ds.menus[t].id);
    EXPECT_EQ(back.menus[t].left, ds.menus[t].left);
    EXPECT_EQ(back.menus[t].right, ds.menus[t].right);
    EXPECT_EQ(back.menus[t].choice_rate, ds.menus[t].choice_rate);
    EXPECT_EQ(back.menus[t].n_trials, ds.menus[t].n_trials);
  }
}

TEST(Canonical, QuotedFieldsAndBom) {
  const auto ds = parse_canonical_csv(
      "\xEF\xBB\xBFmenu_id,left_outcomes,left_probs,right_outcomes,right_probs\n\"a,1\",\"1;2\",0.5;0.5,0,1\n", "q");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.menus[0].id, "a,1");
}

TEST(Canonical, Errors) {
  const std::string head = "menu_id,left_outcomes,left_probs,right_outcomes,right_probs,left_choice_rate\n";
  EXPECT_EQ(kind_of([&] { parse_canonical_csv(head + "a,1;2,0.5,0,1,0.5\n", "x"); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([&] { parse_canonical_csv(head + "a,1;2,0.5;0.6,0,1,0.5\n", "x"); }),
            ErrorKind::ProbabilityNotNormalized);
  EXPECT_EQ(kind_of([&] { parse_canonical_csv(head + "a,1,1,0,1,abc\n", "x"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([&] { parse_canonical_csv("menu_id,left_outcomes\na,1\n", "x"); }), ErrorKind::SchemaViolation);
  EXPECT_EQ(kind_of([&] { parse_canonical_csv(head + "a,1,1,0,1,0.5\na,2,1,0,1,0.5\n", "x"); }),
            ErrorKind::SchemaViolation);
  try {
    parse_canonical_csv(head + "a,1,1,0,1,0.5\nb,1,1,0,1,zz\n", "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(kind_of([] { load_csv("/nonexistent/file.csv", Schema::Canonical); }), ErrorKind::Io);
}

TEST(Canonical, TrialFile) {
  const auto dir = std::filesystem::temp_directory_path() / "carrm_io_test";
  write_text(dir / "trials.csv", "menu_id,chose_left\nm1,1\nm1,0\nm2,true\n");
  LoadOptions opt;
  opt.trials_csv = dir / "trials.csv";
  const auto ds = load_csv(kData / "canonical.csv", Schema::Canonical, opt);
  ASSERT_EQ(ds.trials.size(), 3u);
  EXPECT_EQ(ds.trials[0].menu, 0u);
  EXPECT_TRUE(ds.trials[2].chose_left);
  const auto text = trials_to_csv(ds);
  EXPECT_EQ(text.substr(0, text.find('\n')), "menu_id,chose_left");
  std::filesystem::remove_all(dir);
}

TEST(Choices13k, FiltersAndMapsColumns) {
  const auto ds = load_csv(kData / "c13k_selections.csv", Schema::Choices13k);
  ASSERT_EQ(ds.size(), 3u);  // problem 3 lacks feedback, problem 4 is ambiguous
  EXPECT_EQ(ds.menus[0].id, "c13k_1");
  EXPECT_EQ(ds.menus[0].left, Lottery::degenerate(3));
  EXPECT_EQ(ds.menus[0].right, lot({0, 4}, {0.2, 0.8}));
  EXPECT_DOUBLE_EQ(*ds.menus[0].choice_rate, 0.6);
  EXPECT_EQ(*ds.menus[0].n_trials, 15);
  EXPECT_EQ(ds.menus[2].id, "c13k_5");
  EXPECT_DOUBLE_EQ(*ds.menus[2].choice_rate, 0.75);
  EXPECT_EQ(ds.rescale_factor, 20);
  EXPECT_EQ(ds.name, "choices13k");
}

TEST(Choices13k, MissingProblemsFile) {
  LoadOptions opt;
  opt.problems_json = kData / "absent.json";
  EXPECT_EQ(kind_of([&] { load_csv(kData / "c13k_selections.csv", Schema::Choices13k, opt); }), ErrorKind::Io);
}

TEST(Cpc18, AggregatesTrials) {
  const auto ds = load_csv(kData / "cpc18.csv", Schema::Cpc18);
  ASSERT_EQ(ds.size(), 2u);  // game 3 is ambiguous
  EXPECT_EQ(ds.trials.size(), 6u);
  EXPECT_EQ(ds.menus[0].id, "cpc18_1");
  EXPECT_EQ(*ds.menus[0].n_trials, 4);
  EXPECT_DOUBLE_EQ(*ds.menus[0].choice_rate, 0.25);
  EXPECT_TRUE(same(ds.menus[0].right, lot({0, 4}, {0.2, 0.8})));
  EXPECT_EQ(ds.menus[1].right, lot({7, 8, 9}, {0.25, 0.5, 0.25}));
  EXPECT_DOUBLE_EQ(*ds.menus[1].choice_rate, 0.5);
}

TEST(CpcLottery, Shapes) {
  EXPECT_EQ(cpc_lottery(5, 1.0, 5, "-", 1), Lottery::degenerate(5));
  EXPECT_TRUE(same(cpc_lottery(5, 0.3, 1, "", 1), lot({1, 5}, {0.7, 0.3})));
  EXPECT_EQ(cpc_lottery(8, 1.0, 8, "Symm", 3), lot({7, 8, 9}, {0.25, 0.5, 0.25}));
  // R-skew with 2 outcomes: H - 3 + 2, H - 3 + 4 with probs 1/2, 1/2.
  EXPECT_EQ(cpc_lottery(10, 1.0, 10, "R-skew", 2), lot({9, 11}, {0.5, 0.5}));
  EXPECT_EQ(cpc_lottery(10, 1.0, 10, "L-skew", 2), lot({9, 11}, {0.5, 0.5}));
  EXPECT_EQ(cpc_lottery(10, 1.0, 10, "L-skew", 3), lot({6, 10, 12}, {0.25, 0.25, 0.5}));
}

TEST(Params, JsonRoundTripIsExact) {
  auto p = random_truth(full_library(), kGateFeatureDim, RuleId::A1, 1.0, 0.5, 17);
  p.rescale_factor = 123.456789;
  p.rescale_source = "choices13k";
  p.feature_names = feature_names(FeatureKind::Gate);
  const auto back = params_from_json(params_to_json(p));
  EXPECT_EQ(back.rules, p.rules);
  EXPECT_EQ(back.alpha, p.alpha);
  EXPECT_EQ(back.beta, p.beta);
  EXPECT_EQ(back.rescale_factor, p.rescale_factor);
  EXPECT_EQ(back.rescale_source, p.rescale_source);
  EXPECT_EQ(back.baseline, p.baseline);
  EXPECT_EQ(back.feature_names, p.feature_names);
}

TEST(Params, RejectsWrongVersion) {
  auto text = params_to_json(GateParams::zeros(full_library(), 2));
  const auto pos = text.find("\"version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 12, "\"version\": 9");
  EXPECT_EQ(kind_of([&] { params_from_json(text); }), ErrorKind::SchemaViolation);
  EXPECT_EQ(kind_of([] { params_from_json("{not json"); }), ErrorKind::ParseError);
}

TEST(Features, CsvColumns) {
  const auto ds = load_csv(kData / "canonical.csv", Schema::Canonical);
  const auto text = features_to_csv(ds, feature_matrix(ds));
  const auto head = text.substr(0, text.find('\n'));
  EXPECT_EQ(head.substr(0, 12), "menu_id,z_1,");
  EXPECT_EQ(head.substr(head.size() - 13), ",tc,risk_asym");
}
