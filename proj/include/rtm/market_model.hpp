#pragma once

#include "rtm/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace rtm {

struct ReducedModel;

/// One prosumer's demand preferences, demand bounds and renewable generation
/// over a horizon of K steps.
struct ProsumerProfile {
  std::vector<double> q;     // dissatisfaction weight per step, > 0
  std::vector<double> h0;    // preferred demand
  std::vector<double> h_lb;  // demand lower bound
  std::vector<double> h_ub;  // demand upper bound
  double h_tot = 0.0;        // total demand over the horizon
  std::vector<double> s;     // renewable generation

  std::size_t horizon() const { return q.size(); }
};

/// Everything an instance file holds: the horizon, the grid price per step,
/// and the prosumer profiles.
struct MarketData {
  int K = 0;
  std::vector<double> grid_prices;
  std::vector<ProsumerProfile> prosumers;
};

/// The aggregation matrix E = -Iₙ ⊗ 1ₖᵀ, kept implicit. Row i sums (and
/// negates) the K entries of prosumer i.
class AggregationOperator {
 public:
  AggregationOperator(int n, int K) : n_(n), K_(K) {}

  int rows() const { return n_; }
  int cols() const { return n_ * K_; }
  int horizon() const { return K_; }

  Vector apply(const Vector& y) const;             // E y
  Vector apply_transpose(const Vector& lam) const; // Eᵀ λ
  Matrix dense() const;

 private:
  int n_;
  int K_;
};

/// Vector-form lower-level parameters for n prosumers over K steps, m = nK.
/// Coordinates are ordered prosumer-major: index i*K + k.
struct MarketInstance {
  int n = 0;
  int K = 0;
  Vector q;      // diagonal of Q
  Vector c;      // Q (h0 - s)
  Vector ell;    // s - h_ub
  Vector u;      // s - h_lb
  Vector d;      // per prosumer: h_tot - Σ s
  Vector p;      // grid price replicated per prosumer
  Vector s;      // generation, kept for demand reconstruction
  Vector h_tot;  // per prosumer total demand

  int m() const { return n * K; }
  AggregationOperator E() const { return {n, K}; }

  /// Preferred demand recovered from c = Q (h0 - s).
  Vector preferred_demand() const;
  /// Demand lower bound recovered from u = s - h_lb.
  Vector demand_lower_bound() const;
};

/// The single-prosumer instance holding block i of `instance`.
MarketInstance prosumer_block(const MarketInstance& instance, int i);

/// Builds the lower-level parameters from prosumer profiles. Throws
/// kDimensionMismatch, kInvalidProfile (message names the field) or
/// kInfeasibleBlock.
MarketInstance assemble(std::span<const ProsumerProfile> profiles,
                        std::span<const double> grid_prices,
                        const Tolerances& tol = {});
MarketInstance assemble(const MarketData& data, const Tolerances& tol = {});

/// Throws kInvalidProfile when a profile breaks a sign, ordering or
/// total-demand invariant.
void check_profile(const ProsumerProfile& profile, std::size_t index, const Tolerances& tol = {});

struct CheckResult {
  std::string name;
  bool passed = true;
  std::vector<int> offending;  // coordinate (or prosumer) indices
  double margin = 0.0;         // worst slack; negative when violated
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  const CheckResult& at(std::string_view name) const;
  /// True when ℓ ≤ 0, u ≥ 0 and u > r hold (the requirements for the convex
  /// surrogate to reach global bilevel optima), restricted to what `mode`
  /// needs: lower-only needs ℓ ≤ 0; upper-only needs u ≥ 0, u > r and the
  /// M-matrix property.
  bool hypotheses_hold(BoundMode mode) const;
};

inline constexpr std::string_view kCheckBounds = "bounds_ordered";
inline constexpr std::string_view kCheckWeights = "weights_positive";
inline constexpr std::string_view kCheckTotal = "total_matches_preferred";
inline constexpr std::string_view kCheckFeasible = "llp_feasible";
inline constexpr std::string_view kCheckBounded = "bounded";
inline constexpr std::string_view kCheckEllNonpositive = "ell_nonpositive";
inline constexpr std::string_view kCheckUNonnegative = "u_nonnegative";
inline constexpr std::string_view kCheckUAboveR = "u_above_r";
inline constexpr std::string_view kCheckMMatrix = "m_matrix";

/// Reports instance invariants and the convex-surrogate hypotheses. u > r is
/// tested against the reduced model when one is supplied, otherwise through
/// the equivalent h0 > h_lb.
ValidationReport validate(const MarketInstance& instance, const ReducedModel* reduced = nullptr,
                          const Tolerances& tol = {});

/// h = s - y. Throws kEqualityViolated if |Ey - d|∞ exceeds tol.equality.
Vector reconstruct_demand(const MarketInstance& instance, const Vector& y, const Tolerances& tol = {});

struct NetExchange {
  Vector sold;    // max(y, 0)
  Vector bought;  // max(-y, 0)
};

NetExchange split_net_exchange(const Vector& y);

/// Aggregator objective φ(x, y) = (x - p)ᵀ y.
inline double aggregator_cost(const Vector& x, const Vector& y, const Vector& p) {
  return (x - p).dot(y);
}

}  // namespace rtm
