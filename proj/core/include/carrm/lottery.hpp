#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace carrm {

/// Finite-support lottery in canonical form: strictly increasing outcomes
/// with strictly positive probabilities summing to one.
class Lottery {
 public:
  /// Sorts, merges equal payoffs, drops zero-probability outcomes and
  /// renormalizes. Probabilities must sum to one within 1e-6.
  static Lottery canonicalize(std::span<const double> outcomes, std::span<const double> probs);
  static Lottery degenerate(double outcome);

  const std::vector<double>& outcomes() const noexcept { return outcomes_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return outcomes_.size(); }
  double min() const noexcept { return outcomes_.front(); }
  double max() const noexcept { return outcomes_.back(); }

  double expected_value() const noexcept;
  double variance() const noexcept;
  double stddev() const noexcept;
  /// Standardized third central moment; 0 for degenerate lotteries.
  double skewness() const noexcept;

  friend bool operator==(const Lottery&, const Lottery&) = default;

 private:
  Lottery(std::vector<double> outcomes, std::vector<double> probs)
      : outcomes_(std::move(outcomes)), probs_(std::move(probs)) {}

  std::vector<double> outcomes_;
  std::vector<double> probs_;
};

enum class Dominance { LeftStrict, RightStrict, Equivalent, Incomparable };

inline bool is_strict(Dominance d) noexcept {
  return d == Dominance::LeftStrict || d == Dominance::RightStrict;
}

/// Absolute tolerance applied to survival-value comparisons.
inline constexpr double kSurvivalTolerance = 1e-12;

/// First-order stochastic dominance on the merged support grid using
/// right-tail sums S_i = P(X >= z_i). With epsilon > 0 the margin is required
/// at every grid point above the lowest one, where both tails equal 1.
Dominance fsd_compare(const Lottery& a, const Lottery& b, double epsilon = 0.0);

/// |x - y| / (|x| + |y| + 1).
double contrast(double x, double y) noexcept;

struct JointOutcome {
  double a;
  double b;
  double prob;
};

/// Independent product of two lotteries, ordered by a's outcome then b's.
std::vector<JointOutcome> product_state_space(const Lottery& a, const Lottery& b);

/// Lower weighted median: smallest value whose cumulative weight reaches half
/// the total.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// Most likely payoff; ties go to the larger payoff.
double mode(const Lottery& a);

struct Menu {
  std::string id;
  Lottery left;
  Lottery right;
  std::optional<double> choice_rate;
  std::optional<int> n_trials;
};

/// Validates the optional fields and returns the menu.
Menu make_menu(std::string id, Lottery left, Lottery right,
               std::optional<double> choice_rate = std::nullopt,
               std::optional<int> n_trials = std::nullopt);

}  // namespace carrm
