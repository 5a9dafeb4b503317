#pragma once

// Brute-force dominance check used as an oracle for fsd_compare. Works on
// raw (possibly unsorted, unmerged) outcome/probability lists and evaluates
// every survival value by direct summation.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <carrm/lottery.hpp>

namespace oracle {

struct RawLottery {
  std::vector<double> x;
  std::vector<double> p;
};

inline double survival(const RawLottery& l, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.x.size(); ++i)
    if (l.x[i] >= t) s += l.p[i];
  return s;
}

inline carrm::Dominance brute_force_fsd(const RawLottery& a, const RawLottery& b, double epsilon = 0.0,
                                        double tol = 1e-12) {
  std::set<double> grid(a.x.begin(), a.x.end());
  grid.insert(b.x.begin(), b.x.end());
  const double lowest = *grid.begin();
  bool same = true, a_weak = true, b_weak = true, a_strict = false, b_strict = false;
  for (double t : grid) {
    const double d = survival(a, t) - survival(b, t);
    if (std::abs(d) > tol) same = false;
    if (t == lowest) continue;
    if (d < epsilon - tol) a_weak = false;
    if (-d < epsilon - tol) b_weak = false;
    if (d > tol) a_strict = true;
    if (-d > tol) b_strict = true;
  }
  if (same) return carrm::Dominance::Equivalent;
  if (a_weak && a_strict) return carrm::Dominance::LeftStrict;
  if (b_weak && b_strict) return carrm::Dominance::RightStrict;
  return carrm::Dominance::Incomparable;
}

inline RawLottery raw(const carrm::Lottery& l) { return {l.outcomes(), l.probs()}; }

inline RawLottery point(double v) { return {{v}, {1.0}}; }

}  // namespace oracle
