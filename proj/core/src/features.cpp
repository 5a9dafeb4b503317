#include "carrm/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carrm/error.hpp"

namespace carrm {

const std::array<std::string_view, kGateFeatureDim> kGateFeatureNames = {
    "ev_gap", "max_gap", "min_gap", "var_gap", "mode_gap",   "skew_gap",
    "ev_left", "ev_right", "sd_left", "sd_right", "max_abs_payoff", "support_gap"};

namespace {

Lottery scaled(const Lottery& l, double factor) {
  if (factor == 1.0) return l;
  std::vector<double> xs = l.outcomes();
  for (double& x : xs) x /= factor;
  return Lottery::canonicalize(xs, l.probs());
}

}  // namespace

double rescale_factor(std::span<const Menu> menus) {
  if (menus.empty()) throw Error(ErrorKind::EmptyDataset, "no menus to derive a rescale factor");
  double mx = 0.0;
  for (const auto& m : menus) {
    for (double x : m.left.outcomes()) mx = std::max(mx, std::abs(x));
    for (double x : m.right.outcomes()) mx = std::max(mx, std::abs(x));
  }
  return mx > 0.0 ? mx : 1.0;
}

GateFeatures gate_features(const Menu& menu, double factor) {
  if (!(factor > 0.0)) throw Error(ErrorKind::InvalidArgument, "rescale factor must be positive");
  const Lottery a = scaled(menu.left, factor);
  const Lottery b = scaled(menu.right, factor);
  const double ev1 = a.expected_value();
  const double ev2 = b.expected_value();
  const double sd1 = a.stddev();
  const double sd2 = b.stddev();
  const double max_abs = std::max({std::abs(a.min()), std::abs(a.max()), std::abs(b.min()),
                                   std::abs(b.max())});
  return GateFeatures{ev1 - ev2,
                      a.max() - b.max(),
                      a.min() - b.min(),
                      a.variance() - b.variance(),
                      mode(a) - mode(b),
                      a.skewness() - b.skewness(),
                      ev1,
                      ev2,
                      sd1,
                      sd2,
                      max_abs,
                      static_cast<double>(a.size()) - static_cast<double>(b.size())};
}

RawEncoding raw_encoding(const Menu& menu, double factor) {
  if (!(factor > 0.0)) throw Error(ErrorKind::InvalidArgument, "rescale factor must be positive");
  RawEncoding out{};
  auto fill = [&](const Lottery& l, std::size_t offset) {
    const std::size_t n = std::min(l.size(), kRawSupport);
    for (std::size_t i = 0; i < n; ++i) {
      out[offset + i] = l.outcomes()[i] / factor;
      out[offset + kRawSupport + i] = l.probs()[i];
    }
  };
  fill(menu.left, 0);
  fill(menu.right, 2 * kRawSupport);
  return out;
}

double cdf_distance(const Lottery& a, const Lottery& b) {
  std::vector<double> grid;
  grid.reserve(a.size() + b.size());
  std::merge(a.outcomes().begin(), a.outcomes().end(), b.outcomes().begin(), b.outcomes().end(),
             std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::size_t ia = 0;
  std::size_t ib = 0;
  double fa = 0.0;
  double fb = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    while (ia < a.size() && a.outcomes()[ia] <= grid[i]) fa += a.probs()[ia++];
    while (ib < b.size() && b.outcomes()[ib] <= grid[i]) fb += b.probs()[ib++];
    total += std::abs(fa - fb) * (grid[i + 1] - grid[i]);
  }
  return total;
}

MenuCovariates menu_covariates(const Menu& menu) {
  MenuCovariates c;
  c.cdf_distance = cdf_distance(menu.left, menu.right);
  const double d =
      c.cdf_distance - std::abs(menu.left.expected_value() - menu.right.expected_value());
  c.tc = std::log1p(std::max(d, 0.0));
  c.risk_asym = std::abs(menu.left.stddev() - menu.right.stddev());
  return c;
}

BinAssignment decile_bins(std::span<const double> values, int k) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "decile_bins needs k >= 2");
  BinAssignment out;
  const std::size_t n = values.size();
  out.bin.assign(n, 0);
  if (n == 0) {
    out.degenerate = true;
    return out;
  }
  for (double v : values)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite value in binning");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

  // Nominal bin of a sorted position; a tie group takes the bin of its first
  // member, which is the lowest bin it touches.
  std::vector<int> raw(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end + 1 < n && values[order[end + 1]] == values[order[start]]) ++end;
    const int b = static_cast<int>((start * static_cast<std::size_t>(k)) / n);
    for (std::size_t p = start; p <= end; ++p) raw[order[p]] = b;
    start = end + 1;
  }

  // Compact so bin indices are consecutive.
  std::vector<int> used(static_cast<std::size_t>(k), -1);
  for (int b : raw) used[static_cast<std::size_t>(b)] = 0;
  int next = 0;
  for (auto& u : used)
    if (u == 0) u = next++;
  for (std::size_t i = 0; i < n; ++i) out.bin[i] = used[static_cast<std::size_t>(raw[i])];
  out.n_bins = next;
  out.degenerate = next < k;
  return out;
}

}  // namespace carrm
