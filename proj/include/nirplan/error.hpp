#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nirplan {

enum class ErrorCode {
  kInvalidArgument,
  kEmptyInput,
  kInvalidTransform,
  kInvalidMesh,
  kInvalidPhantom,
  kEmptyCloud,
  kDegenerateConfiguration,
  kFrameGraph,
  kNoKidneyFound,
  kAlignment,
  kNoTumor,
  kNoHealthyTissue,
  kReconstructionFailed,
  kMarginAtCloudBoundary,
  kFragmentedBoundary,
  kDegenerateLoop,
  kUndefinedSbr,
  kOverlappingRegions,
  kDimensionMismatch,
  kIo,
  kParse,
  kValidation,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kInvalidTransform: return "invalid-transform";
    case ErrorCode::kInvalidMesh: return "invalid-mesh";
    case ErrorCode::kInvalidPhantom: return "invalid-phantom";
    case ErrorCode::kEmptyCloud: return "empty-cloud";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kFrameGraph: return "frame-graph";
    case ErrorCode::kNoKidneyFound: return "no-kidney-found";
    case ErrorCode::kAlignment: return "alignment";
    case ErrorCode::kNoTumor: return "no-tumor";
    case ErrorCode::kNoHealthyTissue: return "no-healthy-tissue";
    case ErrorCode::kReconstructionFailed: return "reconstruction-failed";
    case ErrorCode::kMarginAtCloudBoundary: return "margin-at-cloud-boundary";
    case ErrorCode::kFragmentedBoundary: return "fragmented-boundary";
    case ErrorCode::kDegenerateLoop: return "degenerate-loop";
    case ErrorCode::kUndefinedSbr: return "undefined-sbr";
    case ErrorCode::kOverlappingRegions: return "overlapping-regions";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kValidation: return "validation";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nirplan
