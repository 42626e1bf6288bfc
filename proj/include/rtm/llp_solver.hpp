#pragma once

#include "rtm/common.hpp"
#include "rtm/market_model.hpp"

namespace rtm {

/// Lower-level response with the multipliers of the equality (λ), lower
/// bound (μ) and upper bound (ν) constraints. Stationarity reads
/// Ry + c - x + Fᵀλ - μ + ν = 0.
struct LlpSolution {
  Vector y;
  Vector lambda;
  Vector mu;
  Vector nu;
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kSolved;
};

/// Exact response of every prosumer to prices x. Each block is solved by a
/// scalar search on its equality multiplier, y_k(λ) = clip((x_k - c_k + λ)/q_k,
/// ℓ_k, u_k). Bounds dropped by `mode` are treated as infinite.
/// Throws kInfeasibleBlock, kBisectionStalled or kDimensionMismatch.
LlpSolution solve_llp(const MarketInstance& instance, const Vector& x,
                      BoundMode mode = BoundMode::kBoth, const Tolerances& tol = {});

/// A lower-level problem with an arbitrary positive definite R and full row
/// rank F. Missing bounds are infinite.
struct GeneralLlp {
  Matrix R;
  Matrix F;
  Vector c;
  Vector d;
  Vector ell;
  Vector u;
  bool has_lower = true;
  bool has_upper = true;

  static GeneralLlp from_instance(const MarketInstance& instance, BoundMode mode = BoundMode::kBoth);
};

struct SplittingOptions {
  int max_iterations = 100000;
  double tolerance = 1e-8;
};

/// Operator-splitting solve of the general lower-level problem, polished on
/// the detected active set. Returns status kMaxIterations with the best
/// iterate if the residual target is not met. Throws kInfeasible,
/// kNotPositiveDefinite or kDimensionMismatch.
LlpSolution solve_llp_general(const GeneralLlp& problem, const Vector& x, const SplittingOptions& options = {});

/// Max-norm of stationarity, primal feasibility, dual sign and
/// complementarity violations. Zero exactly at a KKT point.
double kkt_residual(const MarketInstance& instance, const Vector& x, const LlpSolution& solution,
                    BoundMode mode = BoundMode::kBoth);
double kkt_residual(const GeneralLlp& problem, const Vector& x, const LlpSolution& solution);

/// ½ yᵀRy + (c - x)ᵀy for a market instance.
double llp_objective(const MarketInstance& instance, const Vector& x, const Vector& y);

}  // namespace rtm
