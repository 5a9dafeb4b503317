#include "carrm/dataset.hpp"

#include <unordered_set>

#include "carrm/error.hpp"

namespace carrm {

bool Dataset::has_targets() const {
  for (const auto& m : menus)
    if (!m.choice_rate) return false;
  return !menus.empty();
}

std::vector<double> Dataset::targets() const {
  std::vector<double> y(menus.size());
  for (std::size_t t = 0; t < menus.size(); ++t) {
    if (!menus[t].choice_rate)
      throw Error(ErrorKind::MissingChoiceRate, "menu " + menus[t].id + " has no choice rate");
    y[t] = *menus[t].choice_rate;
  }
  return y;
}

std::vector<double> Dataset::trial_counts() const {
  std::vector<double> n(menus.size());
  for (std::size_t t = 0; t < menus.size(); ++t) {
    if (!menus[t].n_trials)
      throw Error(ErrorKind::MissingTrials, "menu " + menus[t].id + " has no trial count");
    n[t] = *menus[t].n_trials;
  }
  return n;
}

void validate(const Dataset& ds, bool require_targets) {
  if (ds.menus.empty()) throw Error(ErrorKind::EmptyDataset, "dataset '" + ds.name + "' is empty");
  std::unordered_set<std::string> seen;
  for (const auto& m : ds.menus) {
    if (!seen.insert(m.id).second)
      throw Error(ErrorKind::SchemaViolation, "duplicate menu id " + m.id);
    if (require_targets && !m.choice_rate)
      throw Error(ErrorKind::MissingChoiceRate, "menu " + m.id + " has no choice rate");
  }
  if (ds.feature_override && static_cast<std::size_t>(ds.feature_override->rows()) != ds.size())
    throw Error(ErrorKind::DimensionMismatch, "feature override rows do not match menus");
}

void derive_rescale_factor(Dataset& ds) { ds.rescale_factor = rescale_factor(ds.menus); }

FeatureMatrix feature_matrix(const Dataset& ds, FeatureKind kind, double factor) {
  if (kind == FeatureKind::Gate && ds.feature_override) return *ds.feature_override;
  const std::size_t d = kind == FeatureKind::Gate ? kGateFeatureDim : kRawDim;
  FeatureMatrix z(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(d));
  for (std::size_t t = 0; t < ds.size(); ++t) {
    const auto row_index = static_cast<Eigen::Index>(t);
    if (kind == FeatureKind::Gate) {
      const auto f = gate_features(ds.menus[t], factor);
      for (std::size_t j = 0; j < d; ++j) z(row_index, static_cast<Eigen::Index>(j)) = f[j];
    } else {
      const auto f = raw_encoding(ds.menus[t], factor);
      for (std::size_t j = 0; j < d; ++j) z(row_index, static_cast<Eigen::Index>(j)) = f[j];
    }
  }
  return z;
}

FeatureMatrix feature_matrix(const Dataset& ds, FeatureKind kind) {
  return feature_matrix(ds, kind, ds.rescale_factor);
}

std::vector<std::string> feature_names(FeatureKind kind) {
  std::vector<std::string> names;
  if (kind == FeatureKind::Gate) {
    for (auto n : kGateFeatureNames) names.emplace_back(n);
  } else {
    const char* blocks[4] = {"left_x", "left_p", "right_x", "right_p"};
    for (const char* b : blocks)
      for (std::size_t i = 1; i <= kRawSupport; ++i) names.push_back(std::string(b) + std::to_string(i));
  }
  return names;
}

}  // namespace carrm
