#include "carrm/rules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "carrm/error.hpp"
#include "carrm/features.hpp"
#include "carrm/parallel.hpp"
#include "carrm/random.hpp"

namespace carrm {

namespace {

constexpr std::array<std::string_view, kNumRules> kNames = {
    "MMn", "MMa", "MMx", "MAP", "SAL", "SAL2", "REG", "REGmed", "DIS", "DISmed", "A1", "A2"};

RuleOutcome from_dominance(Dominance d) {
  return RuleOutcome{is_strict(d), d == Dominance::LeftStrict};
}

RuleOutcome compare(const Lottery& a, const Lottery& b, double epsilon) {
  if (epsilon < 0.0) {
    return RuleOutcome{true, fsd_compare(a, b, 0.0) == Dominance::LeftStrict};
  }
  return from_dominance(fsd_compare(a, b, epsilon));
}

RuleOutcome compare_points(double x, double y, double epsilon) {
  return compare(Lottery::degenerate(x), Lottery::degenerate(y), epsilon);
}

// Salience scores over (min1,min2), (min1,max2), (max1,min2), (max1,max2).
struct SaliencePairs {
  std::array<double, 4> a;
  std::array<double, 4> b;
  std::array<double, 4> score;
};

SaliencePairs salience_pairs(const Menu& m) {
  SaliencePairs s;
  const double l[2] = {m.left.min(), m.left.max()};
  const double r[2] = {m.right.min(), m.right.max()};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const int k = 2 * i + j;
      s.a[k] = l[i];
      s.b[k] = r[j];
      s.score[k] = contrast(l[i], r[j]);
    }
  }
  return s;
}

Lottery negated_regret(const std::vector<JointOutcome>& states, bool left_side) {
  std::vector<double> xs;
  std::vector<double> ps;
  xs.reserve(states.size());
  ps.reserve(states.size());
  for (const auto& s : states) {
    const double d = left_side ? std::max(s.b - s.a, 0.0) : std::max(s.a - s.b, 0.0);
    xs.push_back(-d);
    ps.push_back(s.prob);
  }
  return Lottery::canonicalize(xs, ps);
}

double median_regret(const std::vector<JointOutcome>& states, bool left_side) {
  std::vector<double> xs;
  std::vector<double> ps;
  for (const auto& s : states) {
    xs.push_back(left_side ? std::max(s.b - s.a, 0.0) : std::max(s.a - s.b, 0.0));
    ps.push_back(s.prob);
  }
  return weighted_median(xs, ps);
}

// Downside contrasts of outcomes strictly below the mode, sorted descending.
std::vector<double> downside_contrasts(const Lottery& l) {
  const double md = mode(l);
  std::vector<double> s;
  for (double z : l.outcomes()) {
    if (z < md) s.push_back(contrast(md, z));
  }
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

double disappointment(const Lottery& l) {
  const auto s = downside_contrasts(l);
  return s.empty() ? 0.0 : s.front();
}

double disappointment_median(const Lottery& l) {
  const auto s = downside_contrasts(l);
  if (s.empty()) return 0.0;
  return s.size() >= 2 ? s[1] : s[0];
}

}  // namespace

std::string_view rule_name(RuleId r) noexcept { return kNames[index_of(r)]; }

std::optional<RuleId> parse_rule(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumRules; ++i) {
    if (kNames[i] == name) return kAllRules[i];
  }
  return std::nullopt;
}

Library full_library() { return Library(kAllRules.begin(), kAllRules.end()); }

RuleOutcome evaluate_rule(RuleId rule, const Menu& menu, double epsilon, double big_M) {
  const Lottery& l1 = menu.left;
  const Lottery& l2 = menu.right;
  switch (rule) {
    case RuleId::MMn:
      return compare_points(l1.min(), l2.min(), epsilon);
    case RuleId::MMx:
      return compare_points(l1.max(), l2.max(), epsilon);
    case RuleId::MMa:
      return compare_points(0.5 * (l1.min() + l1.max()), 0.5 * (l2.min() + l2.max()), epsilon);
    case RuleId::MAP:
      return compare_points(mode(l1), mode(l2), epsilon);
    case RuleId::SAL: {
      const auto s = salience_pairs(menu);
      std::size_t k = 0;
      for (std::size_t i = 1; i < 4; ++i) {
        if (s.score[i] > s.score[k]) k = i;
      }
      return compare_points(s.a[k], s.b[k], epsilon);
    }
    case RuleId::SAL2: {
      const auto s = salience_pairs(menu);
      std::array<std::size_t, 4> order = {0, 1, 2, 3};
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t i, std::size_t j) { return s.score[i] > s.score[j]; });
      if (s.score[order[0]] == s.score[order[1]]) {
        return epsilon < 0.0 ? RuleOutcome{true, false} : RuleOutcome{};
      }
      const std::size_t k = order[1];
      return compare_points(s.a[k], s.b[k], epsilon);
    }
    case RuleId::REG: {
      const auto states = product_state_space(l1, l2);
      return compare(negated_regret(states, true), negated_regret(states, false), epsilon);
    }
    case RuleId::REGmed: {
      const auto states = product_state_space(l1, l2);
      return compare_points(-median_regret(states, true), -median_regret(states, false), epsilon);
    }
    case RuleId::DIS:
      return compare_points(-disappointment(l1), -disappointment(l2), epsilon);
    case RuleId::DISmed:
      return compare_points(-disappointment_median(l1), -disappointment_median(l2), epsilon);
    case RuleId::A1:
      return compare(l1, Lottery::degenerate(-big_M), epsilon);
    case RuleId::A2:
      return compare(Lottery::degenerate(-big_M), l2, epsilon);
  }
  return {};
}

RuleRow evaluate_rules(const Menu& menu, double epsilon, double big_M) {
  RuleRow row;
  for (RuleId r : kAllRules) row[index_of(r)] = evaluate_rule(r, menu, epsilon, big_M);
  return row;
}

double big_m_for(std::span<const Menu> menus) {
  double mx = 0.0;
  for (const auto& m : menus) {
    for (double x : m.left.outcomes()) mx = std::max(mx, std::abs(x));
    for (double x : m.right.outcomes()) mx = std::max(mx, std::abs(x));
  }
  return 10.0 * mx + 1.0;
}

RuleMatrix::RuleMatrix(std::vector<std::string> ids, std::vector<RuleRow> rows, double epsilon,
                       double big_M)
    : ids_(std::move(ids)), rows_(std::move(rows)), epsilon_(epsilon), big_M_(big_M) {
  if (ids_.size() != rows_.size())
    throw Error(ErrorKind::LengthMismatch, "rule matrix ids and rows differ in length");
}

std::array<std::size_t, kNumRules> RuleMatrix::activity_counts() const {
  std::array<std::size_t, kNumRules> counts{};
  for (const auto& row : rows_)
    for (std::size_t f = 0; f < kNumRules; ++f) counts[f] += row[f].active ? 1 : 0;
  return counts;
}

std::string RuleMatrix::to_csv() const {
  std::ostringstream out;
  out << "menu_id";
  for (RuleId r : kAllRules) out << ',' << rule_name(r) << "_active," << rule_name(r) << "_left";
  out << '\n';
  for (std::size_t t = 0; t < rows_.size(); ++t) {
    out << ids_[t];
    for (const auto& o : rows_[t]) out << ',' << int(o.active) << ',' << int(o.left);
    out << '\n';
  }
  return out.str();
}

RuleMatrix RuleMatrix::from_csv(std::string_view text, double epsilon, double big_M) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "rule matrix CSV is empty");
  std::vector<std::string> ids;
  std::vector<RuleRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 1 + 2 * kNumRules)
      throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": expected " +
                                             std::to_string(1 + 2 * kNumRules) + " columns");
    RuleRow row;
    for (std::size_t f = 0; f < kNumRules; ++f) {
      const auto& a = cells[1 + 2 * f];
      const auto& l = cells[2 + 2 * f];
      if ((a != "0" && a != "1") || (l != "0" && l != "1"))
        throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": non-binary flag");
      row[f] = RuleOutcome{a == "1", l == "1"};
      if (row[f].left && !row[f].active)
        throw Error(ErrorKind::SchemaViolation,
                    "row " + std::to_string(line_no) + ": left set on inactive rule");
    }
    ids.push_back(cells[0]);
    rows.push_back(row);
  }
  return RuleMatrix(std::move(ids), std::move(rows), epsilon, big_M);
}

RuleMatrix build_rule_matrix(std::span<const Menu> menus, double epsilon, int threads) {
  const double big_M = big_m_for(menus);
  std::vector<std::string> ids(menus.size());
  std::vector<RuleRow> rows(menus.size());
  parallel_for(menus.size(), threads, [&](std::size_t t) {
    ids[t] = menus[t].id;
    rows[t] = evaluate_rules(menus[t], epsilon, big_M);
  });
  return RuleMatrix(std::move(ids), std::move(rows), epsilon, big_M);
}

RuleMatrix placebo_permute(const RuleMatrix& matrix, std::span<const Menu> menus, int strata,
                           std::uint64_t seed) {
  if (strata < 1) throw Error(ErrorKind::InvalidArgument, "strata must be >= 1");
  if (menus.size() != matrix.size())
    throw Error(ErrorKind::LengthMismatch, "menus and rule matrix differ in length");

  std::vector<std::vector<std::size_t>> groups;
  if (strata == 1) {
    groups.emplace_back(matrix.size());
    std::iota(groups[0].begin(), groups[0].end(), 0);
  } else {
    std::vector<double> complexity(menus.size());
    for (std::size_t t = 0; t < menus.size(); ++t)
      complexity[t] = static_cast<double>(menus[t].left.size() + menus[t].right.size());
    const auto bins = decile_bins(complexity, strata);
    groups.resize(static_cast<std::size_t>(bins.n_bins));
    for (std::size_t t = 0; t < menus.size(); ++t)
      groups[static_cast<std::size_t>(bins.bin[t])].push_back(t);
  }
  for (const auto& g : groups) {
    if (g.size() < 2)
      throw Error(ErrorKind::StrataTooFine, "a stratum holds fewer than 2 menus");
  }

  RuleMatrix out = matrix;
  Rng rng(seed);
  for (RuleId r : kAllRules) {
    if (is_attention(r)) continue;
    const std::size_t f = index_of(r);
    for (const auto& g : groups) {
      std::vector<std::size_t> perm = g;
      shuffle_in_place(perm, rng);
      for (std::size_t i = 0; i < g.size(); ++i) out.row(g[i])[f] = matrix.row(perm[i])[f];
    }
  }
  return out;
}

}  // namespace carrm
