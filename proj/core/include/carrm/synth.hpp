#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "carrm/dataset.hpp"
#include "carrm/gate.hpp"
#include "carrm/identification.hpp"
#include "carrm/random.hpp"
#include "carrm/rules.hpp"

namespace carrm {

struct SynthConfig {
  int cells = 13;
  int menus_per_cell = 20;
  int max_support = 4;
  int payoff_min = -20;
  int payoff_max = 50;
  /// Set each cell's gate features directly instead of computing them
  /// from its lotteries.
  bool oracle_features = true;
  /// Feature draws are N(0, feature_scale^2) per coordinate.
  double feature_scale = 0.5;
  /// Make feature 0 equal feature 6 minus feature 7 so [1, z] loses one
  /// rank, as the expected-value gap does on real data.
  bool ev_redundancy = true;
  /// Adds quadratic * c_f * |z|^2 / d to each rule's score; c_f is 0 for the
  /// baseline rule and alternates +1, -1 over the others.
  double quadratic = 0.0;
  /// 0 gives noiseless targets (choice rate equals the model probability).
  int n_trials = 0;
  /// Two-sided candidates drawn per cell, as a multiple of menus_per_cell.
  int pool_factor = 10;
  /// Candidate menus tried per cell before giving up.
  int max_candidates = 20000;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset dataset;
  /// Generating cell of each menu (oracle mode), otherwise all -1.
  CellAssignment cells;
  std::vector<double> true_p;
};

/// Random canonical lottery: support size uniform in 1..max_support,
/// distinct integer payoffs, probabilities uniform on the simplex.
Lottery random_lottery(Rng& rng, int max_support, int payoff_min, int payoff_max);

/// Random gate parameters with the baseline rule pinned to zero.
GateParams random_truth(const Library& library, std::size_t dim, RuleId baseline,
                        double alpha_scale, double beta_scale, std::uint64_t seed);

/// Model probabilities under `truth`, including the quadratic term.
double synthetic_probability(const GateParams& truth, std::span<const double> z,
                             const RuleRow& row, double quadratic);

/// In oracle mode every cell holds `menus_per_cell` menus sharing one
/// feature vector, picked from a candidate pool so the cell's restriction
/// matrix is well conditioned with rank |F| - 1 under the true odds.
SyntheticData generate_synthetic(const GateParams& truth, const SynthConfig& cfg);

/// Redraws choice rates from Binomial(n_trials, p) with a new seed.
void resample_targets(SyntheticData& data, int n_trials, std::uint64_t seed);

}  // namespace carrm
