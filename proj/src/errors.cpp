#include "resdiff/errors.hpp"

namespace resdiff {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::OverlappingCells: return "OverlappingCells";
    case ErrorCode::VolumeDeficit: return "VolumeDeficit";
    case ErrorCode::NonOrthogonalMatrix: return "NonOrthogonalMatrix";
    case ErrorCode::TargetCubeMismatch: return "TargetCubeMismatch";
    case ErrorCode::BoundaryUncovered: return "BoundaryUncovered";
    case ErrorCode::CellOrder: return "CellOrder";
    case ErrorCode::NonpositiveEpsilon: return "NonpositiveEpsilon";
    case ErrorCode::TreeBudgetExceeded: return "TreeBudgetExceeded";
    case ErrorCode::SymbolOutOfRange: return "SymbolOutOfRange";
    case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::NoMixingWithinCap: return "NoMixingWithinCap";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::SeriesDivergence: return "SeriesDivergence";
    case ErrorCode::MissingCorrector: return "MissingCorrector";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::WindowBudgetExceeded: return "WindowBudgetExceeded";
    case ErrorCode::NotMixing: return "NotMixing";
    case ErrorCode::InvalidMinorizer: return "InvalidMinorizer";
    case ErrorCode::InvalidStoppingSchedule: return "InvalidStoppingSchedule";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::AssertionFailed: return "AssertionFailed";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace resdiff
