#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "carrm/lottery.hpp"

namespace carrm {

inline constexpr std::size_t kGateFeatureDim = 12;
inline constexpr std::size_t kRawSupport = 10;
inline constexpr std::size_t kRawDim = 4 * kRawSupport;

using GateFeatures = std::array<double, kGateFeatureDim>;
using RawEncoding = std::array<double, kRawDim>;

/// Feature order: ev_gap, max_gap, min_gap, var_gap, mode_gap, skew_gap,
/// ev_left, ev_right, sd_left, sd_right, max_abs_payoff, support_gap.
extern const std::array<std::string_view, kGateFeatureDim> kGateFeatureNames;

/// Largest absolute payoff over all menus; 1 when every payoff is zero.
double rescale_factor(std::span<const Menu> menus);

GateFeatures gate_features(const Menu& menu, double factor);

/// Left outcomes, left probs, right outcomes, right probs; each block sorted
/// ascending, zero-padded to 10 slots, and truncated to the 10 smallest
/// outcomes when the support is larger.
RawEncoding raw_encoding(const Menu& menu, double factor);

struct MenuCovariates {
  double cdf_distance = 0.0;
  double tc = 0.0;
  double risk_asym = 0.0;
};

/// Tradeoff complexity and risk asymmetry on raw payoffs.
MenuCovariates menu_covariates(const Menu& menu);

/// Integral of |F1 - F2| over the merged support grid.
double cdf_distance(const Lottery& a, const Lottery& b);

struct BinAssignment {
  std::vector<int> bin;
  int n_bins = 0;
  /// Set when fewer than k bins could be formed.
  bool degenerate = false;
};

/// Rank-based quantile bins. Items with equal values always share a bin;
/// a tie group straddling a boundary goes to the lower bin.
BinAssignment decile_bins(std::span<const double> values, int k);

}  // namespace carrm
