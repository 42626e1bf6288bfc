#include "rtm/cvx_solver.hpp"

#include "rtm/llp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rtm {

namespace {

void require_hypotheses(const ValidationReport& report, const ReducedModel& reduced, const CvxOptions& options) {
  std::ostringstream failed;
  auto note = [&](std::string_view name) {
    for (const auto& c : report.checks) {
      if (c.name == name && !c.passed) failed << ' ' << name;
    }
  };
  if (uses_lower(options.mode)) note(kCheckEllNonpositive);
  if (uses_upper(options.mode)) {
    note(kCheckUNonnegative);
    note(kCheckUAboveR);
  }
  if (options.mode == BoundMode::kUpperOnly) note(kCheckMMatrix);
  if (!reduced.cert_psd.passed) failed << " psd";
  const std::string list = failed.str();
  if (!list.empty() && !options.force) {
    throw Error(ErrorCode::kHypothesisViolated, "failed checks:" + list);
  }
}

}  // namespace

BilevelSolution solve_cvx(const ReducedModel& reduced, const MarketInstance& inst, const CvxOptions& options) {
  const int m = inst.m();
  if (reduced.m() != m || reduced.r.size() != m || inst.p.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "reduced model and instance sizes differ");
  }
  const ValidationReport report = validate(inst, &reduced, options.tol);
  require_hypotheses(report, reduced, options);
  const CheckResult& bounded = report.at(kCheckBounded);
  if (!bounded.passed) {
    std::ostringstream os;
    os << "prosumer " << bounded.offending.front()
       << " is a net buyer (h_tot > Σ s); raising all of its prices together decreases the objective without bound";
    throw Error(ErrorCode::kUnbounded, os.str());
  }

  const Vector lo = uses_lower(options.mode) ? inst.ell : Vector::Constant(m, -kInf);
  const Vector hi = uses_upper(options.mode) ? inst.u : Vector::Constant(m, kInf);

  BilevelSolution sol;
  sol.x = Vector::Zero(m);
  sol.mode = options.mode;
  sol.provenance = "cvx-admm";

  QpSettings settings = options.qp;
  settings.eps_abs = std::min(settings.eps_abs, options.tol.qp_residual);

  for (int b = 0; b < reduced.M.num_blocks(); ++b) {
    const int off = reduced.M.offset(b);
    const int k = reduced.M.block_size(b);
    const Matrix& Mb = reduced.M.block(b);
    const Vector rb = reduced.r.segment(off, k);
    const Vector pb = inst.p.segment(off, k);

    // (x - p)ᵀ(Mx + r) = xᵀMx + (r - Mp)ᵀx - pᵀr
    QpProblem qp;
    qp.P = 2.0 * Mb;
    qp.q = rb - Mb * pb;
    qp.A.resize(2 * k, k);
    qp.A.topRows(k).setIdentity();
    qp.A.bottomRows(k) = Mb;
    qp.lower.resize(2 * k);
    qp.upper.resize(2 * k);
    qp.lower.head(k).setZero();
    qp.upper.head(k).setConstant(kInf);
    qp.lower.tail(k) = lo.segment(off, k) - rb;
    qp.upper.tail(k) = hi.segment(off, k) - rb;

    const QpResult res = solve_qp(qp, settings);
    if (res.status == QpStatus::kPrimalInfeasible) {
      std::ostringstream os;
      os << "block " << b << ": no x ≥ 0 keeps Mx + r within bounds";
      throw Error(ErrorCode::kInfeasible, os.str());
    }
    if (res.status == QpStatus::kDualInfeasible) {
      std::ostringstream os;
      os << "block " << b << ": objective unbounded below on the feasible set";
      throw Error(ErrorCode::kUnbounded, os.str());
    }
    if (res.status == QpStatus::kMaxIterations) sol.status = SolveStatus::kMaxIterations;
    sol.x.segment(off, k) = res.x.cwiseMax(0.0);
    sol.iterations = std::max(sol.iterations, res.iterations);
    sol.primal_residual = std::max(sol.primal_residual, res.primal_residual);
    sol.dual_residual = std::max(sol.dual_residual, res.dual_residual);
  }

  sol.y = reduced.M.multiply(sol.x) + reduced.r;
  sol.phi = aggregator_cost(sol.x, sol.y, inst.p);
  return sol;
}

BilevelCertificate certify_bilevel(const MarketInstance& inst, const ReducedModel& reduced, const BilevelSolution& sol,
                                   const Tolerances& tol) {
  BilevelCertificate cert;
  if (sol.x.size() != inst.m() || sol.y.size() != inst.m() || reduced.m() != inst.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "certify_bilevel: size mismatch");
  }
  const LlpSolution llp = solve_llp(inst, sol.x, sol.mode, tol);
  cert.response = llp.y;
  cert.response_residual = (llp.y - sol.y).cwiseAbs().maxCoeff();
  cert.objective_residual = std::abs(aggregator_cost(sol.x, llp.y, inst.p) - sol.phi);
  cert.affine_residual = (reduced.M.multiply(sol.x) + reduced.r - sol.y).cwiseAbs().maxCoeff();
  cert.passed = (sol.x.minCoeff() >= 0.0) && cert.response_residual <= tol.certify_response &&
                cert.objective_residual <= tol.certify_objective;
  return cert;
}

double complementarity_set_violation(const MarketInstance& inst, const ReducedModel& reduced, const Vector& x,
                                     const Vector& y, BoundMode mode) {
  const LlpSolution llp = solve_llp(inst, x, mode);
  const Vector lo = uses_lower(mode) ? inst.ell : Vector::Constant(inst.m(), -kInf);
  const Vector hi = uses_upper(mode) ? inst.u : Vector::Constant(inst.m(), kInf);

  const Vector implied = reduced.M.multiply(x + llp.mu - llp.nu) + reduced.r;
  double worst = (implied - y).cwiseAbs().maxCoeff();
  worst = std::max(worst, -x.minCoeff());
  for (int j = 0; j < inst.m(); ++j) {
    worst = std::max({worst, lo(j) - y(j), y(j) - hi(j), -llp.mu(j), -llp.nu(j)});
    if (std::isfinite(lo(j))) worst = std::max(worst, std::abs(llp.mu(j) * (y(j) - lo(j))));
    if (std::isfinite(hi(j))) worst = std::max(worst, std::abs(llp.nu(j) * (hi(j) - y(j))));
  }
  return worst;
}

}  // namespace rtm
