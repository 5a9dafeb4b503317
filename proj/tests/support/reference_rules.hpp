#pragma once

// Straight transcription of the twelve rule definitions, kept independent of
// the library's rules.cpp: own contrast, mode, weighted median and pairing
// enumeration, and the brute-force dominance oracle for every comparison.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <carrm/rules.hpp>

#include "fsd_oracle.hpp"

namespace oracle {

struct RefOutcome {
  bool active = false;
  bool left = false;
};

inline double contr(double x, double y) { return std::abs(x - y) / (std::abs(x) + std::abs(y) + 1.0); }

// Highest-probability payoff, ties to the larger payoff.
inline double modal(const RawLottery& l) {
  double best_x = l.x[0], best_p = l.p[0];
  for (std::size_t i = 1; i < l.x.size(); ++i) {
    if (l.p[i] > best_p + 1e-12 || (std::abs(l.p[i] - best_p) <= 1e-12 && l.x[i] > best_x)) {
      best_x = l.x[i];
      best_p = std::max(best_p, l.p[i]);
    }
  }
  return best_x;
}

inline double lower_wmed(std::vector<double> v, std::vector<double> w) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double cum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    cum += w[idx[k]];
    // include every entry with the same value before testing
    if (k + 1 < idx.size() && v[idx[k + 1]] == v[idx[k]]) continue;
    if (cum >= 0.5 * total - 1e-12 * total) return v[idx[k]];
  }
  return v[idx.back()];
}

inline double min_of(const RawLottery& l) { return *std::min_element(l.x.begin(), l.x.end()); }
inline double max_of(const RawLottery& l) { return *std::max_element(l.x.begin(), l.x.end()); }

inline double downside(const RawLottery& l, bool second) {
  const double m = modal(l);
  std::vector<double> s;
  for (double z : l.x)
    if (z < m) s.push_back(contr(m, z));
  if (s.empty()) return 0.0;
  std::sort(s.rbegin(), s.rend());
  if (second && s.size() >= 2) return s[1];
  return s[0];
}

inline RefOutcome decide(const RawLottery& left, const RawLottery& right, double epsilon) {
  if (epsilon < 0.0) {
    return {true, brute_force_fsd(left, right, 0.0) == carrm::Dominance::LeftStrict};
  }
  const auto d = brute_force_fsd(left, right, epsilon);
  const bool strict = d == carrm::Dominance::LeftStrict || d == carrm::Dominance::RightStrict;
  return {strict, d == carrm::Dominance::LeftStrict};
}

inline RefOutcome reference_rule(carrm::RuleId rule, const carrm::Menu& menu, double epsilon, double big_M) {
  using carrm::RuleId;
  const RawLottery L1 = raw(menu.left);
  const RawLottery L2 = raw(menu.right);
  switch (rule) {
    case RuleId::MMn:
      return decide(point(min_of(L1)), point(min_of(L2)), epsilon);
    case RuleId::MMx:
      return decide(point(max_of(L1)), point(max_of(L2)), epsilon);
    case RuleId::MMa:
      return decide(point(0.5 * (min_of(L1) + max_of(L1))), point(0.5 * (min_of(L2) + max_of(L2))), epsilon);
    case RuleId::MAP:
      return decide(point(modal(L1)), point(modal(L2)), epsilon);
    case RuleId::SAL:
    case RuleId::SAL2: {
      // min1-min2, min1-max2, max1-min2, max1-max2
      const std::array<std::pair<double, double>, 4> pairs = {
          std::pair{min_of(L1), min_of(L2)}, std::pair{min_of(L1), max_of(L2)},
          std::pair{max_of(L1), min_of(L2)}, std::pair{max_of(L1), max_of(L2)}};
      std::array<double, 4> c{};
      for (int k = 0; k < 4; ++k) c[k] = contr(pairs[k].first, pairs[k].second);
      int k1 = 0;
      for (int k = 1; k < 4; ++k)
        if (c[k] > c[k1]) k1 = k;
      if (rule == RuleId::SAL) return decide(point(pairs[k1].first), point(pairs[k1].second), epsilon);
      int k2 = -1;
      for (int k = 0; k < 4; ++k) {
        if (k == k1) continue;
        if (k2 < 0 || c[k] > c[k2]) k2 = k;
      }
      if (c[k2] == c[k1]) return {epsilon < 0.0, false};
      return decide(point(pairs[k2].first), point(pairs[k2].second), epsilon);
    }
    case RuleId::REG:
    case RuleId::REGmed: {
      std::vector<double> dl, dr, w;
      for (std::size_t i = 0; i < L1.x.size(); ++i) {
        for (std::size_t j = 0; j < L2.x.size(); ++j) {
          dl.push_back(std::max(L2.x[j] - L1.x[i], 0.0));
          dr.push_back(std::max(L1.x[i] - L2.x[j], 0.0));
          w.push_back(L1.p[i] * L2.p[j]);
        }
      }
      if (rule == RuleId::REGmed) return decide(point(-lower_wmed(dl, w)), point(-lower_wmed(dr, w)), epsilon);
      RawLottery nl{{}, w}, nr{{}, w};
      for (double v : dl) nl.x.push_back(-v);
      for (double v : dr) nr.x.push_back(-v);
      return decide(nl, nr, epsilon);
    }
    case RuleId::DIS:
      return decide(point(-downside(L1, false)), point(-downside(L2, false)), epsilon);
    case RuleId::DISmed:
      return decide(point(-downside(L1, true)), point(-downside(L2, true)), epsilon);
    case RuleId::A1:
      return decide(L1, point(-big_M), epsilon);
    case RuleId::A2:
      return decide(point(-big_M), L2, epsilon);
  }
  return {};
}

}  // namespace oracle
