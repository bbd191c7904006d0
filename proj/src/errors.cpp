#include "leapvo/errors.hpp"

namespace leapvo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kInvalidGridSpec: return "InvalidGridSpec";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kWindowMismatch: return "WindowMismatch";
    case ErrorCode::kQueryUnmatched: return "QueryUnmatched";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kInsufficientAnchors: return "InsufficientAnchors";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kInfeasibleScene: return "InfeasibleScene";
    case ErrorCode::kDegenerateAlignment: return "DegenerateAlignment";
    case ErrorCode::kPathTooShort: return "PathTooShort";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kAssociationError: return "AssociationError";
    case ErrorCode::kSourceEmpty: return "SourceEmpty";
    case ErrorCode::kIntrinsicsMissing: return "IntrinsicsMissing";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace leapvo
