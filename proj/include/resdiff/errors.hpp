#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace resdiff {

enum class ErrorCode {
  OverlappingCells,
  VolumeDeficit,
  NonOrthogonalMatrix,
  TargetCubeMismatch,
  BoundaryUncovered,
  CellOrder,
  NonpositiveEpsilon,
  TreeBudgetExceeded,
  SymbolOutOfRange,
  UnsupportedDimension,
  NoMixingWithinCap,
  SingularSystem,
  SeriesDivergence,
  MissingCorrector,
  HypothesisViolated,
  WindowBudgetExceeded,
  NotMixing,
  InvalidMinorizer,
  InvalidStoppingSchedule,
  InvalidArgument,
  ConfigInvalid,
  AssertionFailed,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace resdiff
