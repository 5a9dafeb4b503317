#include <carrm/error.hpp>
#include <carrm/lottery.hpp>

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "corpus.hpp"
#include "fsd_oracle.hpp"

using namespace carrm;

namespace {

Lottery lot(std::vector<double> x, std::vector<double> p) { return Lottery::canonicalize(x, p); }

}  // namespace

TEST(Canonicalize, MergesEqualPayoffs) {
  const auto l = lot({1, 1, 2}, {0.25, 0.25, 0.5});
  EXPECT_EQ(l.outcomes(), (std::vector<double>{1, 2}));
  EXPECT_EQ(l.probs(), (std::vector<double>{0.5, 0.5}));
}

TEST(Canonicalize, DegenerateUnchanged) {
  const auto l = lot({5}, {1.0});
  EXPECT_EQ(l, Lottery::degenerate(5));
}

TEST(Canonicalize, SortsOutcomes) {
  const auto l = lot({3, 1}, {0.4, 0.6});
  EXPECT_EQ(l.outcomes(), (std::vector<double>{1, 3}));
  EXPECT_DOUBLE_EQ(l.probs()[0], 0.6);
  EXPECT_DOUBLE_EQ(l.probs()[1], 0.4);
}

TEST(Canonicalize, DropsZeroProbability) {
  const auto l = lot({0, 4, 9}, {0.5, 0.0, 0.5});
  EXPECT_EQ(l.size(), 2u);
}

TEST(Canonicalize, RejectsBadInput) {
  EXPECT_THROW(lot({1, 2}, {0.5, 0.6}), Error);
  EXPECT_THROW(lot({1, 2}, {0.5}), Error);
  EXPECT_THROW(lot({}, {}), Error);
  EXPECT_THROW(lot({1, 2}, {-0.1, 1.1}), Error);
}

TEST(Canonicalize, Idempotent) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto l = corpus::lottery_draw(rng, 6, i % 2 == 0);
    EXPECT_EQ(Lottery::canonicalize(l.outcomes(), l.probs()), l);
  }
}

TEST(Moments, DegenerateAndTwoPoint) {
  const auto d = Lottery::degenerate(3);
  EXPECT_DOUBLE_EQ(d.expected_value(), 3);
  EXPECT_DOUBLE_EQ(d.variance(), 0);
  EXPECT_DOUBLE_EQ(d.skewness(), 0);
  const auto l = lot({0, 10}, {0.5, 0.5});
  EXPECT_DOUBLE_EQ(l.expected_value(), 5);
  EXPECT_DOUBLE_EQ(l.variance(), 25);
  EXPECT_NEAR(l.skewness(), 0, 1e-12);
}

TEST(Fsd, DegenerateDominance) {
  EXPECT_EQ(fsd_compare(Lottery::degenerate(1), Lottery::degenerate(0)), Dominance::LeftStrict);
  EXPECT_EQ(fsd_compare(Lottery::degenerate(0), Lottery::degenerate(1)), Dominance::RightStrict);
  EXPECT_EQ(fsd_compare(Lottery::degenerate(2), Lottery::degenerate(2)), Dominance::Equivalent);
}

TEST(Fsd, CrossingSurvivalIsIncomparable) {
  EXPECT_EQ(fsd_compare(lot({0, 2}, {0.5, 0.5}), Lottery::degenerate(1)), Dominance::Incomparable);
}

TEST(Fsd, WeakDominanceWithStrictPoint) {
  EXPECT_EQ(fsd_compare(lot({0, 2}, {0.5, 0.5}), lot({0, 1}, {0.5, 0.5})), Dominance::LeftStrict);
}

TEST(Fsd, Antisymmetric) {
  const auto menus = corpus::menus(300, 8);
  for (const auto& m : menus) {
    const auto ab = fsd_compare(m.left, m.right);
    const auto ba = fsd_compare(m.right, m.left);
    if (ab == Dominance::LeftStrict) {
      EXPECT_EQ(ba, Dominance::RightStrict);
    }
    if (ab == Dominance::Incomparable) {
      EXPECT_EQ(ba, Dominance::Incomparable);
    }
    if (ab == Dominance::Equivalent) {
      EXPECT_EQ(ba, Dominance::Equivalent);
    }
  }
}

TEST(Fsd, EpsilonShrinksStrictOrder) {
  const auto menus = corpus::menus(300, 9);
  for (const auto& m : menus) {
    if (!is_strict(fsd_compare(m.left, m.right, 0.0))) {
      EXPECT_FALSE(is_strict(fsd_compare(m.left, m.right, 0.05)));
    }
  }
}

TEST(Fsd, EpsilonMarginRequiredAboveLowestPoint) {
  // Survival gap at z = 1 is 0.05.
  const auto a = lot({0, 1}, {0.9, 0.1});
  const auto b = lot({0, 1}, {0.95, 0.05});
  EXPECT_EQ(fsd_compare(a, b, 0.0), Dominance::LeftStrict);
  EXPECT_EQ(fsd_compare(a, b, 0.04), Dominance::LeftStrict);
  EXPECT_EQ(fsd_compare(a, b, 0.06), Dominance::Incomparable);
}

TEST(Fsd, MatchesBruteForceOracle) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 2000; ++i) {
    const auto a = corpus::raw_draw(rng, 5, i % 2 == 0);
    const auto b = corpus::raw_draw(rng, 5, i % 2 == 0);
    for (double eps : {0.0, 0.1}) {
      EXPECT_EQ(fsd_compare(lot(a.x, a.p), lot(b.x, b.p), eps), oracle::brute_force_fsd(a, b, eps));
    }
  }
}

TEST(Contrast, Values) {
  EXPECT_DOUBLE_EQ(contrast(3, 1), 0.4);
  EXPECT_DOUBLE_EQ(contrast(7, 7), 0.0);
  EXPECT_DOUBLE_EQ(contrast(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(contrast(-2, 2), contrast(2, -2));
}

TEST(ProductStateSpace, Degenerate) {
  const auto s = product_state_space(Lottery::degenerate(1), Lottery::degenerate(2));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].a, 1);
  EXPECT_EQ(s[0].b, 2);
  EXPECT_EQ(s[0].prob, 1.0);
}

TEST(ProductStateSpace, MultiplicationTable) {
  const auto s = product_state_space(lot({0, 1}, {0.3, 0.7}), lot({2, 3}, {0.5, 0.5}));
  ASSERT_EQ(s.size(), 4u);
  const std::vector<double> expect = {0.15, 0.15, 0.35, 0.35};
  double total = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(s[i].prob, expect[i], 1e-15);
    total += s[i].prob;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_EQ(s[1].a, 0);
  EXPECT_EQ(s[1].b, 3);
}

TEST(WeightedMedian, Conventions) {
  EXPECT_EQ(weighted_median(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}), 2);
  EXPECT_EQ(weighted_median(std::vector<double>{0, 10}, std::vector<double>{0.9, 0.1}), 0);
  EXPECT_EQ(weighted_median(std::vector<double>{1, 2}, std::vector<double>{0.5, 0.5}), 1);
  EXPECT_EQ(weighted_median(std::vector<double>{3, 1, 2}, std::vector<double>{1, 1, 1}), 2);
}

TEST(Mode, TiesGoUpward) {
  EXPECT_EQ(mode(lot({0, 5}, {0.3, 0.7})), 5);
  EXPECT_EQ(mode(lot({1, 2}, {0.5, 0.5})), 2);
  EXPECT_EQ(mode(Lottery::degenerate(-4)), -4);
}

TEST(Menu, ValidatesOptionalFields) {
  EXPECT_NO_THROW(make_menu("a", Lottery::degenerate(0), Lottery::degenerate(1), 0.3, 10));
  EXPECT_THROW(make_menu("a", Lottery::degenerate(0), Lottery::degenerate(1), 1.2), Error);
  EXPECT_THROW(make_menu("a", Lottery::degenerate(0), Lottery::degenerate(1), 0.5, 0), Error);
}
