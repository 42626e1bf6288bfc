#include "rtm/llp_solver.hpp"

#include "rtm/qp_admm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rtm {

namespace {

constexpr int kMaxBisection = 400;
constexpr int kMaxExpansion = 200;

void check_sizes(const MarketInstance& inst, const Vector& x) {
  const int m = inst.m();
  if (x.size() != m || inst.q.size() != m || inst.c.size() != m || inst.ell.size() != m || inst.u.size() != m ||
      inst.d.size() != inst.n) {
    throw Error(ErrorCode::kDimensionMismatch, "price vector or instance vectors do not match n·K");
  }
}

struct BlockResult {
  double lambda = 0.0;
  int iterations = 0;
};

// Solves one prosumer block in place: Σ y = target with
// y_k = clip(a_k + λ / q_k, lo_k, hi_k).
class BlockSolver {
 public:
  BlockSolver(const Vector& q, const Vector& a, const Vector& lo, const Vector& hi, double target)
      : q_(q), a_(a), lo_(lo), hi_(hi), target_(target) {}

  double response(int k, double lam) const { return std::clamp(a_(k) + lam / q_(k), lo_(k), hi_(k)); }

  double total(double lam) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < q_.size(); ++k) s += response(static_cast<int>(k), lam);
    return s;
  }

  BlockResult solve(int block_index, const Tolerances& tol) const {
    BlockResult res;
    const Eigen::Index K = q_.size();

    bool any_free = false;
    double lo_lam = kInf;
    double hi_lam = -kInf;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (lo_(k) == hi_(k)) continue;
      any_free = true;
      // Saturation points of coordinate k.
      for (double bound : {lo_(k), hi_(k)}) {
        if (std::isfinite(bound)) {
          const double lam = q_(k) * (bound - a_(k));
          lo_lam = std::min(lo_lam, lam);
          hi_lam = std::max(hi_lam, lam);
        }
      }
    }
    if (!any_free) return res;  // every coordinate pinned, λ is arbitrary

    if (!std::isfinite(lo_lam)) {
      // No finite bound at all: the response is affine in λ.
      double inv = 0.0;
      double base = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) {
        inv += 1.0 / q_(k);
        base += a_(k);
      }
      res.lambda = (target_ - base) / inv;
      return res;
    }

    double width = std::max(hi_lam - lo_lam, 1.0);
    int expansions = 0;
    while (total(lo_lam) > target_) {
      lo_lam -= width;
      width *= 2.0;
      if (++expansions > kMaxExpansion) stalled(block_index, "lower bracket did not close");
    }
    width = std::max(hi_lam - lo_lam, 1.0);
    while (total(hi_lam) < target_) {
      hi_lam += width;
      width *= 2.0;
      if (++expansions > kMaxExpansion) stalled(block_index, "upper bracket did not close");
    }

    double mid = 0.5 * (lo_lam + hi_lam);
    while (true) {
      mid = 0.5 * (lo_lam + hi_lam);
      const double residual = total(mid) - target_;
      const bool narrow = hi_lam - lo_lam <= 1e-12 * (1.0 + std::abs(mid));
      if (narrow && std::abs(residual) <= tol.llp_equality) break;
      if (narrow && (mid == lo_lam || mid == hi_lam)) {
        if (std::abs(residual) <= tol.llp_equality * (1.0 + std::abs(target_))) break;
        stalled(block_index, "interval collapsed with nonzero equality residual");
      }
      if (++res.iterations > kMaxBisection) stalled(block_index, "iteration limit");
      if (residual < 0.0) {
        lo_lam = mid;
      } else {
        hi_lam = mid;
      }
    }
    res.lambda = exact_multiplier(mid);
    return res;
  }

 private:
  // On the free set at λ, the equality is linear in λ; solving it removes the
  // bisection's last-bit error when the classification is stable.
  double exact_multiplier(double lam) const {
    double inv = 0.0;
    double rhs = target_;
    for (Eigen::Index k = 0; k < q_.size(); ++k) {
      const double v = a_(k) + lam / q_(k);
      if (v > lo_(k) && v < hi_(k)) {
        inv += 1.0 / q_(k);
        rhs -= a_(k);
      } else {
        rhs -= response(static_cast<int>(k), lam);
      }
    }
    if (inv == 0.0) return lam;
    const double candidate = rhs / inv;
    return std::abs(total(candidate) - target_) <= std::abs(total(lam) - target_) ? candidate : lam;
  }

  [[noreturn]] static void stalled(int block, const char* why) {
    std::ostringstream os;
    os << "prosumer " << block << ": " << why;
    throw Error(ErrorCode::kBisectionStalled, os.str());
  }

  const Vector& q_;
  Vector a_;
  const Vector& lo_;
  const Vector& hi_;
  double target_;
};

struct KktParts {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual_sign = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, dual_sign, complementarity}); }
};

KktParts bound_parts(const Vector& y, const Vector& lo, const Vector& hi, const Vector& mu, const Vector& nu) {
  KktParts parts;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    parts.primal = std::max({parts.primal, lo(k) - y(k), y(k) - hi(k)});
    parts.dual_sign = std::max({parts.dual_sign, -mu(k), -nu(k)});
    const double c_lo = std::isfinite(lo(k)) ? mu(k) * (y(k) - lo(k)) : mu(k);
    const double c_hi = std::isfinite(hi(k)) ? nu(k) * (hi(k) - y(k)) : nu(k);
    parts.complementarity = std::max({parts.complementarity, std::abs(c_lo), std::abs(c_hi)});
  }
  return parts;
}

Vector lower_bounds(const Vector& ell, bool active) {
  return active ? ell : Vector::Constant(ell.size(), -kInf);
}

Vector upper_bounds(const Vector& u, bool active) {
  return active ? u : Vector::Constant(u.size(), kInf);
}

}  // namespace

LlpSolution solve_llp(const MarketInstance& inst, const Vector& x, BoundMode mode, const Tolerances& tol) {
  check_sizes(inst, x);
  const int K = inst.K;
  const Vector lo = lower_bounds(inst.ell, uses_lower(mode));
  const Vector hi = upper_bounds(inst.u, uses_upper(mode));

  LlpSolution sol;
  sol.y.resize(inst.m());
  sol.lambda.resize(inst.n);
  sol.mu = Vector::Zero(inst.m());
  sol.nu = Vector::Zero(inst.m());

  for (int i = 0; i < inst.n; ++i) {
    const auto seg = [&](const Vector& v) -> Vector { return v.segment(i * K, K); };
    const Vector qb = seg(inst.q);
    const Vector lob = seg(lo);
    const Vector hib = seg(hi);
    const double target = -inst.d(i);

    const double sum_lo = lob.sum();
    const double sum_hi = hib.sum();
    const double slack = tol.feasibility * (1.0 + std::abs(target));
    if (target < sum_lo - slack || target > sum_hi + slack) {
      std::ostringstream os;
      os << "prosumer " << i << ": net exchange " << target << " outside [" << sum_lo << ", " << sum_hi << "]";
      throw Error(ErrorCode::kInfeasibleBlock, os.str());
    }

    const Vector a = ((seg(x) - seg(inst.c)).array() / qb.array()).matrix();
    const BlockSolver solver(qb, a, lob, hib, target);
    const BlockResult br = solver.solve(i, tol);
    sol.iterations += br.iterations;
    sol.lambda(i) = br.lambda;

    for (int k = 0; k < K; ++k) {
      const int j = i * K + k;
      const double yk = solver.response(k, br.lambda);
      sol.y(j) = yk;
      // Stationarity without bound multipliers; it equals μ - ν.
      const double g = inst.q(j) * yk + inst.c(j) - x(j) - br.lambda;
      if (lo(j) == hi(j)) {
        if (g >= 0.0) {
          sol.mu(j) = g;
        } else {
          sol.nu(j) = -g;
        }
      } else if (yk == lo(j)) {
        sol.mu(j) = std::max(0.0, g);
      } else if (yk == hi(j)) {
        sol.nu(j) = std::max(0.0, -g);
      }
    }
  }
  sol.kkt_residual = kkt_residual(inst, x, sol, mode);
  return sol;
}

GeneralLlp GeneralLlp::from_instance(const MarketInstance& inst, BoundMode mode) {
  GeneralLlp g;
  g.R = inst.q.asDiagonal();
  g.F = inst.E().dense();
  g.c = inst.c;
  g.d = inst.d;
  g.ell = inst.ell;
  g.u = inst.u;
  g.has_lower = uses_lower(mode);
  g.has_upper = uses_upper(mode);
  return g;
}

LlpSolution solve_llp_general(const GeneralLlp& pb, const Vector& x, const SplittingOptions& options) {
  const Eigen::Index m = pb.R.rows();
  const Eigen::Index n = pb.F.rows();
  if (pb.R.cols() != m || pb.F.cols() != m || pb.c.size() != m || pb.d.size() != n || x.size() != m ||
      (pb.has_lower && pb.ell.size() != m) || (pb.has_upper && pb.u.size() != m)) {
    throw Error(ErrorCode::kDimensionMismatch, "solve_llp_general: inconsistent shapes");
  }
  Eigen::LLT<Matrix> llt(pb.R);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPositiveDefinite, "R is not positive definite");

  const bool boxed = pb.has_lower || pb.has_upper;
  const Eigen::Index rows = n + (boxed ? m : 0);
  QpProblem qp;
  qp.P = pb.R;
  qp.q = pb.c - x;
  qp.A = Matrix::Zero(rows, m);
  qp.A.topRows(n) = pb.F;
  qp.lower.resize(rows);
  qp.upper.resize(rows);
  qp.lower.head(n) = pb.d;
  qp.upper.head(n) = pb.d;
  const Vector lo = pb.has_lower ? pb.ell : Vector::Constant(m, -kInf);
  const Vector hi = pb.has_upper ? pb.u : Vector::Constant(m, kInf);
  if (boxed) {
    qp.A.bottomRows(m).setIdentity();
    qp.lower.tail(m) = lo;
    qp.upper.tail(m) = hi;
  }

  // Penalty at the geometric mean of R's extreme eigenvalues.
  Eigen::SelfAdjointEigenSolver<Matrix> es(pb.R, Eigen::EigenvaluesOnly);
  QpSettings settings;
  settings.rho = std::sqrt(std::max(es.eigenvalues().minCoeff(), 1e-12) * es.eigenvalues().maxCoeff());
  settings.eps_abs = options.tolerance;
  settings.max_iterations = options.max_iterations;

  const QpResult res = solve_qp(qp, settings);
  if (res.status == QpStatus::kPrimalInfeasible) {
    throw Error(ErrorCode::kInfeasible, "lower-level constraints admit no feasible point");
  }

  LlpSolution sol;
  sol.y = res.x;
  sol.lambda = res.y.head(n);
  sol.mu = Vector::Zero(m);
  sol.nu = Vector::Zero(m);
  if (boxed) {
    const Vector box = res.y.tail(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (box(k) > 0.0 && pb.has_upper) sol.nu(k) = box(k);
      if (box(k) < 0.0 && pb.has_lower) sol.mu(k) = -box(k);
    }
  }
  sol.iterations = res.iterations;
  sol.kkt_residual = kkt_residual(pb, x, sol);
  sol.status = (res.status == QpStatus::kSolved && sol.kkt_residual <= options.tolerance) ? SolveStatus::kSolved
                                                                                            : SolveStatus::kMaxIterations;
  return sol;
}

double kkt_residual(const MarketInstance& inst, const Vector& x, const LlpSolution& sol, BoundMode mode) {
  const AggregationOperator E = inst.E();
  const Vector lo = lower_bounds(inst.ell, uses_lower(mode));
  const Vector hi = upper_bounds(inst.u, uses_upper(mode));
  KktParts parts = bound_parts(sol.y, lo, hi, sol.mu, sol.nu);
  const Vector stat = inst.q.cwiseProduct(sol.y) + inst.c - x + E.apply_transpose(sol.lambda) - sol.mu + sol.nu;
  parts.stationarity = stat.cwiseAbs().maxCoeff();
  parts.primal = std::max(parts.primal, (E.apply(sol.y) - inst.d).cwiseAbs().maxCoeff());
  return parts.max();
}

double kkt_residual(const GeneralLlp& pb, const Vector& x, const LlpSolution& sol) {
  const Eigen::Index m = pb.R.rows();
  const Vector lo = pb.has_lower ? pb.ell : Vector::Constant(m, -kInf);
  const Vector hi = pb.has_upper ? pb.u : Vector::Constant(m, kInf);
  KktParts parts = bound_parts(sol.y, lo, hi, sol.mu, sol.nu);
  const Vector stat = pb.R * sol.y + pb.c - x + pb.F.transpose() * sol.lambda - sol.mu + sol.nu;
  parts.stationarity = stat.cwiseAbs().maxCoeff();
  if (pb.F.rows() > 0) parts.primal = std::max(parts.primal, (pb.F * sol.y - pb.d).cwiseAbs().maxCoeff());
  return parts.max();
}

double llp_objective(const MarketInstance& inst, const Vector& x, const Vector& y) {
  return 0.5 * y.dot(inst.q.cwiseProduct(y)) + (inst.c - x).dot(y);
}

}  // namespace rtm
