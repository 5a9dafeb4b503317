#include "carrm/lottery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "carrm/error.hpp"

namespace carrm {

Lottery Lottery::canonicalize(std::span<const double> outcomes, std::span<const double> probs) {
  if (outcomes.size() != probs.size())
    throw Error(ErrorKind::LengthMismatch, "outcomes and probs differ in length");
  if (outcomes.empty()) throw Error(ErrorKind::ZeroMass, "empty lottery");

  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(probs[i]))
      throw Error(ErrorKind::NegativeProbability, "probability " + std::to_string(probs[i]));
    if (!std::isfinite(outcomes[i]))
      throw Error(ErrorKind::InvalidArgument, "non-finite outcome");
    total += probs[i];
  }
  if (total <= 0.0) throw Error(ErrorKind::ZeroMass, "all probabilities are zero");
  if (std::abs(total - 1.0) > 1e-6)
    throw Error(ErrorKind::ProbabilityNotNormalized,
                "probabilities sum to " + std::to_string(total));

  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return outcomes[i] < outcomes[j]; });

  std::vector<double> xs;
  std::vector<double> ps;
  for (std::size_t i : order) {
    if (probs[i] == 0.0) continue;
    if (!xs.empty() && xs.back() == outcomes[i]) {
      ps.back() += probs[i];
    } else {
      xs.push_back(outcomes[i]);
      ps.push_back(probs[i]);
    }
  }

  // Renormalize only when needed so that canonical input passes through
  // bit-for-bit.
  double merged = std::accumulate(ps.begin(), ps.end(), 0.0);
  if (std::abs(merged - 1.0) > 1e-12) {
    for (double& p : ps) p /= merged;
  }
  return Lottery(std::move(xs), std::move(ps));
}

Lottery Lottery::degenerate(double outcome) { return Lottery({outcome}, {1.0}); }

double Lottery::expected_value() const noexcept {
  double ev = 0.0;
  for (std::size_t i = 0; i < outcomes_.size(); ++i) ev += probs_[i] * outcomes_[i];
  return ev;
}

double Lottery::variance() const noexcept {
  const double mu = expected_value();
  double v = 0.0;
  for (std::size_t i = 0; i < outcomes_.size(); ++i) {
    const double d = outcomes_[i] - mu;
    v += probs_[i] * d * d;
  }
  return v;
}

double Lottery::stddev() const noexcept { return std::sqrt(variance()); }

double Lottery::skewness() const noexcept {
  if (outcomes_.size() < 2) return 0.0;
  const double mu = expected_value();
  const double var = variance();
  if (var <= 0.0) return 0.0;
  double m3 = 0.0;
  for (std::size_t i = 0; i < outcomes_.size(); ++i) {
    const double d = outcomes_[i] - mu;
    m3 += probs_[i] * d * d * d;
  }
  return m3 / (var * std::sqrt(var));
}

Dominance fsd_compare(const Lottery& a, const Lottery& b, double epsilon) {
  const auto& xa = a.outcomes();
  const auto& pa = a.probs();
  const auto& xb = b.outcomes();
  const auto& pb = b.probs();

  // Walk the merged grid from the top, accumulating right-tail mass.
  std::size_t ia = xa.size();
  std::size_t ib = xb.size();
  double sa = 0.0;
  double sb = 0.0;
  bool all_equal = true;
  bool a_weak = true;
  bool b_weak = true;
  bool a_strict = false;
  bool b_strict = false;
  while (ia > 0 || ib > 0) {
    double z;
    if (ib == 0 || (ia > 0 && xa[ia - 1] >= xb[ib - 1])) {
      z = xa[ia - 1];
    } else {
      z = xb[ib - 1];
    }
    if (ia > 0 && xa[ia - 1] == z) sa += pa[--ia];
    if (ib > 0 && xb[ib - 1] == z) sb += pb[--ib];

    const double diff = sa - sb;
    if (std::abs(diff) > kSurvivalTolerance) all_equal = false;
    const bool lowest = (ia == 0 && ib == 0);
    if (lowest) break;  // both tails are 1 at the bottom of the grid
    if (diff < epsilon - kSurvivalTolerance) a_weak = false;
    if (-diff < epsilon - kSurvivalTolerance) b_weak = false;
    if (diff > kSurvivalTolerance) a_strict = true;
    if (-diff > kSurvivalTolerance) b_strict = true;
  }

  if (all_equal) return Dominance::Equivalent;
  if (a_weak && a_strict) return Dominance::LeftStrict;
  if (b_weak && b_strict) return Dominance::RightStrict;
  return Dominance::Incomparable;
}

double contrast(double x, double y) noexcept {
  return std::abs(x - y) / (std::abs(x) + std::abs(y) + 1.0);
}

std::vector<JointOutcome> product_state_space(const Lottery& a, const Lottery& b) {
  std::vector<JointOutcome> out;
  out.reserve(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out.push_back({a.outcomes()[i], b.outcomes()[j], a.probs()[i] * b.probs()[j]});
  return out;
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size())
    throw Error(ErrorKind::LengthMismatch, "values and weights differ in length");
  if (values.empty()) throw Error(ErrorKind::ZeroMass, "empty input");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw Error(ErrorKind::NegativeProbability, "negative weight");
    total += w;
  }
  if (total <= 0.0) throw Error(ErrorKind::ZeroMass, "weights sum to zero");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  // Relative slack keeps an exact half (e.g. 0.15 + 0.35) from missing the
  // threshold through rounding.
  const double half = 0.5 * total * (1.0 - 1e-12);
  double cum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cum += weights[order[k]];
    // Equal values share one cumulative mass.
    if (k + 1 < order.size() && values[order[k + 1]] == values[order[k]]) continue;
    if (cum >= half) return values[order[k]];
  }
  return values[order.back()];
}

double mode(const Lottery& a) {
  double best_p = -1.0;
  double best_x = a.min();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a.probs()[i];
    if (p > best_p + 1e-12 || std::abs(p - best_p) <= 1e-12) {
      best_p = std::max(p, best_p);
      best_x = a.outcomes()[i];
    }
  }
  return best_x;
}

Menu make_menu(std::string id, Lottery left, Lottery right, std::optional<double> choice_rate,
               std::optional<int> n_trials) {
  if (choice_rate && !(*choice_rate >= 0.0 && *choice_rate <= 1.0))
    throw Error(ErrorKind::InvalidArgument,
                "choice rate outside [0,1] for menu " + id);
  if (n_trials && *n_trials < 1)
    throw Error(ErrorKind::InvalidArgument, "n_trials < 1 for menu " + id);
  return Menu{std::move(id), std::move(left), std::move(right), choice_rate, n_trials};
}

}  // namespace carrm
