#pragma once

#include "rtm/common.hpp"
#include "rtm/market_model.hpp"
#include "rtm/reduction.hpp"

#include <cstdint>
#include <string>

namespace rtm {

struct OracleOptions {
  BoundMode mode = BoundMode::kBoth;
  int max_dimension = 6;
  int golden_iterations = 40;
  double shrink = 0.5;
  int refine_starts = 1;  // best distinct grid points used as refinement seeds
  int threads = 1;
  Tolerances tol;
};

struct OracleResult {
  Vector best_x;
  Vector best_y;
  double best_phi = kInf;
  double grid_phi = kInf;  // best raw grid value before refinement
  Vector x_max;
  int coarse_steps = 0;
  int refine_rounds = 0;
  long evaluations = 0;
  bool boundary_touch = false;  // incumbent sits on an upper face of the box
  std::string method;
};

/// φ(x) = (x - p)ᵀ LLP(x), evaluated with the exact lower-level solver.
double bilevel_objective(const MarketInstance& instance, const Vector& x, BoundMode mode, Vector* response = nullptr);

/// Exhaustive grid over [0, x_max] followed by shrinking-box coordinate
/// descent. Throws kDimensionTooLarge when m exceeds options.max_dimension.
OracleResult oracle_grid(const MarketInstance& instance, const Vector& x_max, int coarse_steps,
                         int refine_rounds, const OracleOptions& options = {});

/// Coordinate descent from the origin and from `starts - 1` random points of
/// the default search box.
OracleResult oracle_multistart(const MarketInstance& instance, const ReducedModel& reduced, int starts,
                               std::uint64_t seed, const OracleOptions& options = {});

/// x_max_k = |p_k| + |c_k| + q_k (u_k - ℓ_k) + 1.
Vector default_x_max(const MarketInstance& instance, const ReducedModel& reduced);

}  // namespace rtm
