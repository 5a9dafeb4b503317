#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace carrm {

enum class ErrorKind {
  LengthMismatch,
  NegativeProbability,
  ZeroMass,
  ProbabilityNotNormalized,
  DimensionMismatch,
  EmptyDataset,
  StrataTooFine,
  DegenerateDistribution,
  NonFiniteLoss,
  MissingChoiceRate,
  TooFewMenus,
  NoTwoSidedMenus,
  RankDeficientDesign,
  SingularVariance,
  NotSimplex,
  DegenerateDenominator,
  ParseError,
  SchemaViolation,
  MissingTrials,
  InfeasibleCell,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// True for errors caused by malformed or unsuitable input rather than by a
/// failure of the computation itself. The CLI maps these to exit code 2.
bool is_validation_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace carrm
