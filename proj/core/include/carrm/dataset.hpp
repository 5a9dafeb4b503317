#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carrm/features.hpp"
#include "carrm/lottery.hpp"

namespace carrm {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TrialRecord {
  std::size_t menu = 0;  // index into Dataset::menus
  bool chose_left = false;
};

enum class FeatureKind { Gate, Raw };

struct Dataset {
  std::string name;
  std::vector<Menu> menus;
  double rescale_factor = 1.0;
  std::vector<TrialRecord> trials;
  std::map<std::string, std::string> provenance;
  /// Oracle-mode synthetic data carries its gate features directly.
  std::optional<FeatureMatrix> feature_override;

  std::size_t size() const noexcept { return menus.size(); }
  bool has_targets() const;
  std::vector<double> targets() const;
  std::vector<double> trial_counts() const;
};

/// Checks id uniqueness and, when required, the presence of choice rates.
void validate(const Dataset& ds, bool require_targets);

/// Sets rescale_factor from the dataset's own payoffs.
void derive_rescale_factor(Dataset& ds);

/// Gate features (or raw encodings) for every menu using `factor`. The
/// feature override wins when present and kind is Gate.
FeatureMatrix feature_matrix(const Dataset& ds, FeatureKind kind, double factor);
FeatureMatrix feature_matrix(const Dataset& ds, FeatureKind kind = FeatureKind::Gate);

std::vector<std::string> feature_names(FeatureKind kind);

}  // namespace carrm
