#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carrm/cv.hpp"
#include "carrm/dataset.hpp"
#include "carrm/diagnostics.hpp"
#include "carrm/gate.hpp"
#include "carrm/identification.hpp"
#include "carrm/two_step.hpp"

namespace carrm {

enum class Schema { Canonical, Choices13k, Cpc18 };

std::optional<Schema> parse_schema(std::string_view name) noexcept;

struct LoadOptions {
  /// choices13k: problem distributions; defaults to c13k_problems.json next
  /// to the selections file.
  std::filesystem::path problems_json;
  /// canonical: optional trial file with columns menu_id,chose_left.
  std::filesystem::path trials_csv;
};

/// Loads a dataset and applies the schema's filters. The dataset's rescale
/// factor is derived from its own payoffs.
///
/// choices13k (selections CSV + problems JSON):
///   Problem -> menu id "c13k_<Problem>", option A -> left, 1 - bRate ->
///   choice rate, n -> n_trials; rows kept when Amb is false and Feedback is
///   true.
/// cpc18 (trial-level CSV):
///   GameID -> menu id "cpc18_<GameID>", (Ha, pHa, La, LotShapeA, LotNumA)
///   -> left, the B columns -> right, B == 0 -> chose left; rows kept when
///   Amb == 0; trials aggregated to menu-level choice rates.
Dataset load_csv(const std::filesystem::path& path, Schema schema, const LoadOptions& opt = {});

/// Parses canonical CSV text.
Dataset parse_canonical_csv(std::string_view text, std::string name);

/// Builds the lottery a CPC-style parameter set describes: the high outcome
/// (expanded per lottery shape) with probability pH, else the low outcome.
Lottery cpc_lottery(double high, double p_high, double low, std::string_view shape, int lot_num);

std::string to_canonical_csv(const Dataset& ds);
std::string trials_to_csv(const Dataset& ds);
/// menu_id, z_1..z_12, tc, risk_asym.
std::string features_to_csv(const Dataset& ds, const FeatureMatrix& z);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Versioned JSON document; numbers round-trip bit-exactly.
std::string params_to_json(const GateParams& params);
GateParams params_from_json(std::string_view text);

std::string ident_report_to_json(const IdentReport& rep);
std::string run_record_to_json(const RunRecord& rec);
std::string learning_curve_to_json(const std::vector<LearningCurvePoint>& points);
/// rule, w_two_step, w_mse, difference, J, p (w_mse may be empty).
std::string two_step_to_csv(const TwoStepFit& fit, const std::vector<double>& w_mse);
std::string two_step_to_json(const TwoStepFit& fit, const std::vector<double>& w_mse);
std::string concentration_to_json(const ConcentrationReport& rep, const Library& rules);
std::string ablation_to_csv(const AblationReport& rep);
std::string ablation_to_json(const AblationReport& rep);
/// bin, rule, mean_weight, kind in {effective, latent}.
std::string statics_to_long_csv(const StaticsReport& rep);
std::string statics_to_json(const StaticsReport& rep);
std::string restrictiveness_to_json(const RestrictivenessReport& rep);
std::string crossfit_to_csv(const CrossfitReport& rep, const Library& rules);
std::string crossfit_to_json(const CrossfitReport& rep, const Library& rules);
std::string portability_to_json(const PortabilityReport& rep);

}  // namespace carrm
