#include "rtm/bilevel_oracle.hpp"

#include "rtm/llp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

namespace rtm {

namespace {

struct Candidate {
  double phi = kInf;
  Vector x;
};

// Lower φ first, ties broken by lexicographic x so results do not depend on
// evaluation order.
bool better(const Candidate& a, const Candidate& b) {
  if (a.phi != b.phi) return a.phi < b.phi;
  for (Eigen::Index j = 0; j < a.x.size(); ++j) {
    if (a.x(j) != b.x(j)) return a.x(j) < b.x(j);
  }
  return false;
}

void keep_best(std::vector<Candidate>& pool, Candidate cand, std::size_t capacity) {
  if (pool.size() == capacity && !better(cand, pool.back())) return;
  auto pos = std::lower_bound(pool.begin(), pool.end(), cand, better);
  pool.insert(pos, std::move(cand));
  if (pool.size() > capacity) pool.pop_back();
}

class Evaluator {
 public:
  Evaluator(const MarketInstance& inst, BoundMode mode, const Tolerances& tol) : inst_(inst), mode_(mode), tol_(tol) {}

  double operator()(const Vector& x) {
    ++count_;
    const LlpSolution sol = solve_llp(inst_, x, mode_, tol_);
    return aggregator_cost(x, sol.y, inst_.p);
  }

  long count() const { return count_; }

 private:
  const MarketInstance& inst_;
  BoundMode mode_;
  const Tolerances& tol_;
  long count_ = 0;
};

constexpr double kInvGolden = 0.6180339887498949;

// Golden-section search on coordinate j over [lo, hi]; moves x only if it
// finds a strictly lower value.
void golden_coordinate(Evaluator& eval, Vector& x, double& phi, int j, double lo, double hi, int iterations) {
  if (!(hi > lo)) return;
  Vector trial = x;
  auto at = [&](double t) {
    trial(j) = t;
    return eval(trial);
  };
  double a = lo;
  double b = hi;
  double c = b - kInvGolden * (b - a);
  double d = a + kInvGolden * (b - a);
  double fc = at(c);
  double fd = at(d);
  double best_t = x(j);
  double best_f = phi;
  auto record = [&](double t, double f) {
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  };
  record(c, fc);
  record(d, fd);
  for (int it = 0; it < iterations; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvGolden * (b - a);
      fc = at(c);
      record(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvGolden * (b - a);
      fd = at(d);
      record(d, fd);
    }
  }
  // Box faces are common minimizers of piecewise-linear slices.
  record(lo, at(lo));
  record(hi, at(hi));
  if (best_f < phi) {
    x(j) = best_t;
    phi = best_f;
  }
}

// Shrinking-box coordinate descent: the box around the incumbent has
// half-widths `width`, halved (by `shrink`) after every round.
void coordinate_descent(Evaluator& eval, Vector& x, double& phi, Vector width, const Vector& x_max, int rounds,
                        const OracleOptions& opt) {
  for (int round = 0; round < rounds; ++round) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double lo = std::max(0.0, x(j) - width(j));
      const double hi = std::min(x_max(j), x(j) + width(j));
      golden_coordinate(eval, x, phi, static_cast<int>(j), lo, hi, opt.golden_iterations);
    }
    width *= opt.shrink;
  }
}

bool touches_upper_face(const Vector& x, const Vector& x_max) {
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) >= x_max(j) * (1.0 - 1e-9)) return true;
  }
  return false;
}

void require_feasible(const MarketInstance& inst, BoundMode mode, const Tolerances& tol) {
  try {
    (void)solve_llp(inst, Vector::Zero(inst.m()), mode, tol);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInfeasibleBlock) throw Error(ErrorCode::kInfeasible, e.what());
    throw;
  }
}

}  // namespace

double bilevel_objective(const MarketInstance& inst, const Vector& x, BoundMode mode, Vector* response) {
  const LlpSolution sol = solve_llp(inst, x, mode);
  if (response != nullptr) *response = sol.y;
  return aggregator_cost(x, sol.y, inst.p);
}

namespace {

struct BlockSearch {
  Candidate best;
  double grid_phi = kInf;
  long evaluations = 0;
};

// Grid plus refinement over one prosumer's K coordinates.
BlockSearch search_block(const MarketInstance& inst, const Vector& x_max, int coarse_steps, int refine_rounds,
                         const OracleOptions& opt) {
  const int m = inst.m();
  long total = 1;
  for (int j = 0; j < m; ++j) total *= coarse_steps;
  const std::size_t keep = static_cast<std::size_t>(std::max(1, opt.refine_starts));
  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(std::min<long>(total, 1 << 20))));

  std::vector<std::vector<Candidate>> pools(threads);
  std::vector<long> counts(threads, 0);
  auto work = [&](int t) {
    Evaluator eval(inst, opt.mode, opt.tol);
    Vector x(m);
    for (long idx = t; idx < total; idx += threads) {
      long rest = idx;
      for (int j = m - 1; j >= 0; --j) {
        x(j) = x_max(j) * static_cast<double>(rest % coarse_steps) / (coarse_steps - 1);
        rest /= coarse_steps;
      }
      keep_best(pools[t], Candidate{eval(x), x}, keep);
    }
    counts[t] = eval.count();
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  BlockSearch out;
  std::vector<Candidate> seeds;
  for (int t = 0; t < threads; ++t) {
    out.evaluations += counts[t];
    for (auto& c : pools[t]) keep_best(seeds, std::move(c), keep);
  }
  out.grid_phi = seeds.front().phi;

  Evaluator eval(inst, opt.mode, opt.tol);
  const Vector spacing = x_max / static_cast<double>(coarse_steps - 1);
  for (Candidate seed : seeds) {
    coordinate_descent(eval, seed.x, seed.phi, spacing, x_max, refine_rounds, opt);
    if (better(seed, out.best)) out.best = seed;
  }
  out.evaluations += eval.count();
  return out;
}

}  // namespace

OracleResult oracle_grid(const MarketInstance& inst, const Vector& x_max, int coarse_steps, int refine_rounds,
                         const OracleOptions& opt) {
  const int m = inst.m();
  if (m > opt.max_dimension) {
    std::ostringstream os;
    os << "grid oracle limited to m ≤ " << opt.max_dimension << ", got m = " << m;
    throw Error(ErrorCode::kDimensionTooLarge, os.str());
  }
  if (x_max.size() != m || !(x_max.minCoeff() > 0.0)) {
    throw Error(ErrorCode::kDimensionMismatch, "x_max must have m positive entries");
  }
  if (coarse_steps < 2) throw Error(ErrorCode::kDimensionMismatch, "coarse_steps must be at least 2");
  require_feasible(inst, opt.mode, opt.tol);

  // The response of prosumer i depends only on x_i, so φ is a sum of
  // per-prosumer terms and the product grid can be scanned block by block:
  // the minimum over the full grid is the sum of the block minima.
  OracleResult res;
  res.x_max = x_max;
  res.coarse_steps = coarse_steps;
  res.refine_rounds = refine_rounds;
  res.method = "grid";
  res.grid_phi = 0.0;
  res.best_x = Vector::Zero(m);
  const int K = inst.K;
  for (int i = 0; i < inst.n; ++i) {
    const BlockSearch b =
        search_block(prosumer_block(inst, i), x_max.segment(i * K, K), coarse_steps, refine_rounds, opt);
    res.grid_phi += b.grid_phi;
    res.evaluations += b.evaluations;
    res.best_x.segment(i * K, K) = b.best.x;
  }
  res.best_phi = bilevel_objective(inst, res.best_x, opt.mode, &res.best_y);
  res.boundary_touch = touches_upper_face(res.best_x, x_max);
  return res;
}

OracleResult oracle_multistart(const MarketInstance& inst, const ReducedModel& reduced, int starts, std::uint64_t seed,
                               const OracleOptions& opt) {
  const int m = inst.m();
  const Vector x_max = default_x_max(inst, reduced);
  require_feasible(inst, opt.mode, opt.tol);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Evaluator eval(inst, opt.mode, opt.tol);

  constexpr int kRounds = 30;
  Candidate best;
  for (int s = 0; s < std::max(1, starts); ++s) {
    Candidate cand;
    cand.x = Vector::Zero(m);
    if (s > 0) {
      for (int j = 0; j < m; ++j) cand.x(j) = x_max(j) * unit(rng);
    }
    cand.phi = eval(cand.x);
    coordinate_descent(eval, cand.x, cand.phi, x_max, x_max, kRounds, opt);
    if (better(cand, best)) best = cand;
  }

  OracleResult res;
  res.x_max = x_max;
  res.refine_rounds = kRounds;
  res.evaluations = eval.count();
  res.best_x = best.x;
  res.best_phi = bilevel_objective(inst, best.x, opt.mode, &res.best_y);
  res.grid_phi = res.best_phi;
  res.boundary_touch = touches_upper_face(best.x, x_max);
  res.method = "multistart";
  return res;
}

Vector default_x_max(const MarketInstance& inst, const ReducedModel& reduced) {
  if (reduced.m() != inst.m()) throw Error(ErrorCode::kDimensionMismatch, "reduced model size differs from instance");
  const Vector span = inst.u - inst.ell;
  return (inst.p.cwiseAbs() + inst.c.cwiseAbs() + inst.q.cwiseProduct(span)).array() + 1.0;
}

}  // namespace rtm
