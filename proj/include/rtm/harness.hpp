#pragma once

#include "rtm/bilevel_oracle.hpp"
#include "rtm/cvx_solver.hpp"
#include "rtm/io.hpp"
#include "rtm/market_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rtm {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

/// Random instance generator. Draws are uniform in the given ranges and
/// fully determined by the seed.
struct GeneratorConfig {
  int n = 1;
  int K = 2;
  std::uint64_t seed = 0;
  Range q{0.5, 2.0};
  Range s{0.0, 2.0};
  Range h0{0.0, 2.0};           // raw preferred demand before normalization, open at lo
  Range total_fraction{0.5, 1.0};  // h_tot / Σ s
  Range price{0.5, 2.0};
  bool hypothesis_mode = true;
  // Only used when hypothesis_mode is false.
  Range lb_fraction{0.0, 0.5};  // h_lb = f · h0
  Range ub_factor{1.0, 1.5};    // h_ub = max(h0, f · s)
};

MarketData generate(const GeneratorConfig& config);

/// Oracle grid steps per axis so that steps^m stays near `budget` points.
int grid_steps_for_budget(int m, double budget, int cap = 61);

struct CompareReport {
  BilevelSolution convex;
  OracleResult oracle;
  BilevelCertificate certificate;
  double gap = 0.0;  // |φ_cvx - φ_oracle|
  double allowed_gap = 0.0;
  double argmin_distance = 0.0;  // |x_cvx - x_oracle|∞, recorded only
  bool pass = false;
};

struct CompareOptions {
  BoundMode mode = BoundMode::kBoth;
  bool force = false;
  int coarse_steps = 0;  // 0 picks from grid_budget
  double grid_budget = 2e5;
  int refine_rounds = 5;
  int refine_starts = 4;
  double relative_gap = 1e-3;
  int threads = 1;
  Tolerances tol;
};

CompareReport run_compare(const MarketInstance& instance, const CompareOptions& options = {});
Json to_json(const CompareReport& report);

struct BenchRecord {
  int m = 0;
  int n = 0;
  int K = 0;
  std::uint64_t seed = 0;
  std::string solver;
  double wall_time = 0.0;  // seconds
  int iterations = 0;
  double phi = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

/// Times solve_cvx (and the bisection lower-level solve at its answer) on
/// generated hypothesis-mode instances of the given (n, K) sizes.
std::vector<BenchRecord> run_bench(const std::vector<std::pair<int, int>>& sizes,
                                   const std::vector<std::uint64_t>& seeds);
void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_bench_csv(std::istream& in);

/// Least-squares slope of log(wall time) against log(m) for one solver.
double loglog_slope(const std::vector<BenchRecord>& records, const std::string& solver);

/// price[interval][k] from CSV lines `interval,k,price` (header optional).
using PriceSeries = std::map<int, std::map<int, double>>;
PriceSeries read_price_series(std::istream& in);

struct Settlement {
  int interval = 0;  // also the absolute step settled
  Vector x;          // one entry per prosumer
  Vector y;
  Vector demand;
  double grid_price = 0.0;
  double phi = 0.0;  // Σ (x - p) y over the settled step
  bool hypotheses_hold = true;
};

/// Receding horizon: interval t re-solves steps t..K-1 with the interval's
/// prices and settles step t only. Remaining preferred demand is rescaled to
/// the remaining total.
std::vector<Settlement> run_simulate(const MarketData& data, int intervals, const PriceSeries& prices,
                                     bool force = false);
Json to_json(const std::vector<Settlement>& settlements);

}  // namespace rtm
