#include "rtm/common.hpp"

namespace rtm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidProfile: return "InvalidProfile";
    case ErrorCode::kInfeasibleBlock: return "InfeasibleBlock";
    case ErrorCode::kEqualityViolated: return "EqualityViolated";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kBisectionStalled: return "BisectionStalled";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kUnbounded: return "Unbounded";
    case ErrorCode::kHypothesisViolated: return "HypothesisViolated";
    case ErrorCode::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(BoundMode mode) {
  switch (mode) {
    case BoundMode::kBoth: return "both";
    case BoundMode::kLowerOnly: return "lower_only";
    case BoundMode::kUpperOnly: return "upper_only";
  }
  return "both";
}

BoundMode parse_bound_mode(std::string_view text) {
  if (text == "both") return BoundMode::kBoth;
  if (text == "lower_only") return BoundMode::kLowerOnly;
  if (text == "upper_only") return BoundMode::kUpperOnly;
  throw Error(ErrorCode::kParse, "unknown bound mode '" + std::string(text) + "'");
}

}  // namespace rtm
