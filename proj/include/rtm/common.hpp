#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rtm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  kDimensionMismatch,
  kInvalidProfile,
  kInfeasibleBlock,
  kEqualityViolated,
  kNotPositiveDefinite,
  kRankDeficient,
  kNotSymmetric,
  kBisectionStalled,
  kInfeasible,
  kUnbounded,
  kHypothesisViolated,
  kDimensionTooLarge,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Which inequality constraints of the lower-level problem are in force.
/// kBoth is the market model; the one-sided modes are the lower-bound-only
/// and upper-bound-only variants of the bilevel problem.
enum class BoundMode { kBoth, kLowerOnly, kUpperOnly };

std::string_view to_string(BoundMode mode);
BoundMode parse_bound_mode(std::string_view text);

inline bool uses_lower(BoundMode mode) { return mode != BoundMode::kUpperOnly; }
inline bool uses_upper(BoundMode mode) { return mode != BoundMode::kLowerOnly; }

enum class SolveStatus { kSolved, kMaxIterations };

/// Numeric thresholds shared by every module. Defaults are the library's
/// documented tolerances; callers override individual fields.
struct Tolerances {
  double symmetry = 1e-12;         // |M - Mᵀ|∞
  double psd_eigenvalue = -1e-10;  // λ_min floor for the PSD certificate
  double mmatrix_offdiag = 1e-12;  // largest admissible off-diagonal entry
  double identity = 1e-10;         // M Fᵀ = 0 and F r = d
  double condition_limit = 1e12;   // F R⁻¹ Fᵀ condition estimate
  double strict_margin = 1e-9;     // u > r checked as u - r > margin
  double feasibility = 1e-9;       // instance bounds / per-block sums
  double equality = 1e-8;          // |Ey - d|∞ accepted by reconstruct_demand
  double llp_equality = 1e-10;     // bisection equality residual
  double llp_kkt = 1e-8;           // kkt_residual target for LLP solvers
  double qp_residual = 1e-8;       // primal / dual residual for the convex QP
  double certify_response = 1e-6;  // |y' - y|∞ in certify_bilevel
  double certify_objective = 1e-8; // |φ(x, y') - φ| in certify_bilevel
};

}  // namespace rtm
