#pragma once

#include "rtm/common.hpp"
#include "rtm/market_model.hpp"
#include "rtm/qp_admm.hpp"
#include "rtm/reduction.hpp"

#include <string>

namespace rtm {

struct BilevelSolution {
  Vector x;    // aggregator prices, ≥ 0
  Vector y;    // responses, y = Mx + r
  double phi = 0.0;
  std::string provenance;
  BoundMode mode = BoundMode::kBoth;
  SolveStatus status = SolveStatus::kSolved;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double consistency = kInf;  // |LLP(x) - y|∞ once certified
  bool certified = false;
};

struct CvxOptions {
  BoundMode mode = BoundMode::kBoth;
  bool force = false;  // warn instead of throwing when hypotheses fail
  QpSettings qp;
  Tolerances tol;
};

/// Minimizes (x - p)ᵀ(Mx + r) over x ≥ 0 with ℓ ≤ Mx + r ≤ u (one side
/// dropped in the one-sided modes). Blocks of M are solved independently.
/// Throws kHypothesisViolated (unless options.force), kInfeasible or
/// kUnbounded. Hitting the iteration cap returns status kMaxIterations.
BilevelSolution solve_cvx(const ReducedModel& reduced, const MarketInstance& instance,
                          const CvxOptions& options = {});

struct BilevelCertificate {
  bool passed = false;
  double response_residual = kInf;   // |y' - y|∞
  double objective_residual = kInf;  // |φ(x, y') - φ|
  double affine_residual = kInf;     // |Mx + r - y|∞, reported only
  Vector response;                   // y' = LLP(x)
};

/// Re-solves the lower level at sol.x and compares the response and the
/// objective with the candidate.
BilevelCertificate certify_bilevel(const MarketInstance& instance, const ReducedModel& reduced,
                                   const BilevelSolution& sol, const Tolerances& tol = {});

/// Dual multipliers showing (x, y) lies in the KKT-reformulated feasible set:
/// y = M(x + μ - ν) + r with complementary μ, ν ≥ 0. Returns the largest
/// violation of that membership.
double complementarity_set_violation(const MarketInstance& instance, const ReducedModel& reduced,
                                     const Vector& x, const Vector& y, BoundMode mode = BoundMode::kBoth);

}  // namespace rtm
