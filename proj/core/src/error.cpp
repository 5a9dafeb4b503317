#include "carrm/error.hpp"

namespace carrm {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NegativeProbability: return "NegativeProbability";
    case ErrorKind::ZeroMass: return "ZeroMass";
    case ErrorKind::ProbabilityNotNormalized: return "ProbabilityNotNormalized";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::StrataTooFine: return "StrataTooFine";
    case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::MissingChoiceRate: return "MissingChoiceRate";
    case ErrorKind::TooFewMenus: return "TooFewMenus";
    case ErrorKind::NoTwoSidedMenus: return "NoTwoSidedMenus";
    case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorKind::SingularVariance: return "SingularVariance";
    case ErrorKind::NotSimplex: return "NotSimplex";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::MissingTrials: return "MissingTrials";
    case ErrorKind::InfeasibleCell: return "InfeasibleCell";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::RankDeficientDesign:
    case ErrorKind::SingularVariance:
    case ErrorKind::InfeasibleCell:
    case ErrorKind::Io:
      return false;
    default:
      return true;
  }
}

}  // namespace carrm
