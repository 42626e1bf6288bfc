#include "rtm/qp_admm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <vector>

namespace rtm {

namespace {

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityRhoFactor = 1e3;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

Vector project(const Vector& v, const Vector& lo, const Vector& hi) { return v.cwiseMax(lo).cwiseMin(hi); }

enum class RowKind { kFree, kInequality, kEquality };

// Problem data after Ruiz equilibration: P̄ = c D P D, q̄ = c D q, Ā = E A D,
// bounds scaled by E.
struct ScaledProblem {
  Matrix P;
  Vector q;
  Matrix A;
  Vector lower;
  Vector upper;
  Vector D;
  Vector E;
  double cost = 1.0;
};

ScaledProblem equilibrate(const QpProblem& pb, const QpSettings& st) {
  const Eigen::Index n = pb.P.rows();
  const Eigen::Index mc = pb.A.rows();
  ScaledProblem sp{pb.P, pb.q, pb.A, pb.lower, pb.upper, Vector::Ones(n), Vector::Ones(mc), 1.0};
  if (!st.scaling) return sp;

  for (int it = 0; it < st.scaling_iterations; ++it) {
    Vector dx(n);
    Vector de(mc);
    for (Eigen::Index j = 0; j < n; ++j) {
      double norm = sp.P.col(j).cwiseAbs().maxCoeff();
      if (mc > 0) norm = std::max(norm, sp.A.col(j).cwiseAbs().maxCoeff());
      dx(j) = norm < kMinScaling ? 1.0 : 1.0 / std::sqrt(std::min(norm, kMaxScaling));
    }
    for (Eigen::Index i = 0; i < mc; ++i) {
      const double norm = sp.A.row(i).cwiseAbs().maxCoeff();
      de(i) = norm < kMinScaling ? 1.0 : 1.0 / std::sqrt(std::min(norm, kMaxScaling));
    }
    sp.P = dx.asDiagonal() * sp.P * dx.asDiagonal();
    sp.A = de.asDiagonal() * sp.A * dx.asDiagonal();
    sp.q = sp.q.cwiseProduct(dx);
    sp.D = sp.D.cwiseProduct(dx);
    sp.E = sp.E.cwiseProduct(de);
  }

  double col_mean = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) col_mean += sp.P.col(j).cwiseAbs().maxCoeff();
  col_mean = n > 0 ? col_mean / static_cast<double>(n) : 0.0;
  const double denom = std::max(col_mean, inf_norm(sp.q));
  sp.cost = denom < kMinScaling ? 1.0 : std::clamp(1.0 / denom, kMinScaling, kMaxScaling);
  sp.P *= sp.cost;
  sp.q *= sp.cost;

  for (Eigen::Index i = 0; i < mc; ++i) {
    // Infinite bounds stay infinite under positive scaling.
    sp.lower(i) *= sp.E(i);
    sp.upper(i) *= sp.E(i);
  }
  return sp;
}

bool primal_infeasibility_certificate(const QpProblem& pb, const Vector& dy, double eps) {
  const double norm = inf_norm(dy);
  if (norm <= 1e-14) return false;
  if (inf_norm(pb.A.transpose() * dy) > eps * norm) return false;
  double support = 0.0;
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    if (dy(i) > eps * norm) {
      if (!std::isfinite(pb.upper(i))) return false;
      support += pb.upper(i) * dy(i);
    } else if (dy(i) < -eps * norm) {
      if (!std::isfinite(pb.lower(i))) return false;
      support += pb.lower(i) * dy(i);
    }
  }
  return support < -eps * norm;
}

bool dual_infeasibility_certificate(const QpProblem& pb, const Vector& dx, double eps) {
  const double norm = inf_norm(dx);
  if (norm <= 1e-14) return false;
  if (inf_norm(pb.P * dx) > eps * norm) return false;
  if (pb.q.dot(dx) >= -eps * norm) return false;
  const Vector adx = pb.A * dx;
  for (Eigen::Index i = 0; i < adx.size(); ++i) {
    const bool lo = std::isfinite(pb.lower(i));
    const bool hi = std::isfinite(pb.upper(i));
    if (hi && adx(i) > eps * norm) return false;
    if (lo && adx(i) < -eps * norm) return false;
  }
  return true;
}

double complementarity(const QpProblem& pb, const Vector& x, const Vector& y) {
  const Vector ax = pb.A * x;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) > 0.0) {
      const double gap = std::isfinite(pb.upper(i)) ? std::abs(pb.upper(i) - ax(i)) : 1.0;
      worst = std::max(worst, y(i) * gap);
    } else if (y(i) < 0.0) {
      const double gap = std::isfinite(pb.lower(i)) ? std::abs(ax(i) - pb.lower(i)) : 1.0;
      worst = std::max(worst, -y(i) * gap);
    }
  }
  return worst;
}

struct Polished {
  Vector x;
  Vector y;
  QpResiduals residuals;
  double complementarity = kInf;
};

// Solves the equality-constrained QP on the guessed active set with a
// regularized KKT system and iterative refinement.
std::optional<Polished> polish(const QpProblem& pb, const std::vector<int>& active_lower,
                               const std::vector<int>& active_upper, const QpSettings& st) {
  const Eigen::Index n = pb.P.rows();
  std::vector<int> rows;
  std::vector<double> rhs;
  for (int i : active_lower) {
    rows.push_back(i);
    rhs.push_back(pb.lower(i));
  }
  for (int i : active_upper) {
    if (std::find(active_lower.begin(), active_lower.end(), i) != active_lower.end()) continue;
    rows.push_back(i);
    rhs.push_back(pb.upper(i));
  }
  const Eigen::Index na = static_cast<Eigen::Index>(rows.size());
  Matrix kkt = Matrix::Zero(n + na, n + na);
  kkt.topLeftCorner(n, n) = pb.P;
  for (Eigen::Index r = 0; r < na; ++r) {
    kkt.block(n + r, 0, 1, n) = pb.A.row(rows[r]);
    kkt.block(0, n + r, n, 1) = pb.A.row(rows[r]).transpose();
  }
  Vector b(n + na);
  b.head(n) = -pb.q;
  for (Eigen::Index r = 0; r < na; ++r) b(n + r) = rhs[r];

  Matrix reg = kkt;
  reg.diagonal().head(n).array() += st.polish_delta;
  reg.diagonal().tail(na).array() -= st.polish_delta;
  Eigen::PartialPivLU<Matrix> lu(reg);
  Vector sol = lu.solve(b);
  for (int it = 0; it < st.polish_refinement_steps; ++it) {
    const Vector resid = b - kkt * sol;
    sol += lu.solve(resid);
  }
  if (!sol.allFinite()) return std::nullopt;

  Polished out;
  out.x = sol.head(n);
  out.y = Vector::Zero(pb.A.rows());
  for (Eigen::Index r = 0; r < na; ++r) out.y(rows[r]) = sol(n + r);
  // Multipliers must carry the sign of the bound they hold.
  for (int i : active_lower) {
    if (std::find(active_upper.begin(), active_upper.end(), i) == active_upper.end() && out.y(i) > 0.0) {
      if (out.y(i) > st.eps_abs) return std::nullopt;
      out.y(i) = 0.0;
    }
  }
  for (int i : active_upper) {
    if (std::find(active_lower.begin(), active_lower.end(), i) == active_lower.end() && out.y(i) < 0.0) {
      if (out.y(i) < -st.eps_abs) return std::nullopt;
      out.y(i) = 0.0;
    }
  }
  out.residuals = qp_residuals(pb, out.x, out.y);
  out.complementarity = complementarity(pb, out.x, out.y);
  return out;
}

class AdmmWorkspace {
 public:
  AdmmWorkspace(const QpProblem& pb, const QpSettings& st)
      : pb_(pb), st_(st), sp_(equilibrate(pb, st)), polish_trigger_(1e-3 * std::max(1.0, inf_norm(pb.q))) {
    const Eigen::Index mc = sp_.A.rows();
    kinds_.resize(mc);
    for (Eigen::Index i = 0; i < mc; ++i) {
      const bool lo = std::isfinite(sp_.lower(i));
      const bool hi = std::isfinite(sp_.upper(i));
      if (!lo && !hi) {
        kinds_[i] = RowKind::kFree;
      } else if (lo && hi && sp_.upper(i) - sp_.lower(i) < 1e-12 * std::max(1.0, std::abs(sp_.upper(i)))) {
        kinds_[i] = RowKind::kEquality;
      } else {
        kinds_[i] = RowKind::kInequality;
      }
    }
    set_rho(st.rho);
  }

  QpResult run(const std::optional<Vector>& warm_x) {
    const Eigen::Index n = sp_.P.rows();
    const Eigen::Index mc = sp_.A.rows();
    Vector x = warm_x ? Vector(sp_.D.cwiseInverse().cwiseProduct(*warm_x)) : Vector(Vector::Zero(n));
    Vector z = project(sp_.A * x, sp_.lower, sp_.upper);
    Vector y = Vector::Zero(mc);
    Vector x_prev = x;
    Vector y_prev = y;

    QpResult best;
    std::vector<int> last_lower;
    std::vector<int> last_upper;
    bool tried_polish = false;

    for (int iter = 1; iter <= st_.max_iterations; ++iter) {
      x_prev = x;
      y_prev = y;

      const Vector rhs = st_.sigma * x - sp_.q + sp_.A.transpose() * (rho_.cwiseProduct(z) - y);
      const Vector x_tilde = llt_.solve(rhs);
      const Vector z_tilde = sp_.A * x_tilde;
      x = st_.alpha * x_tilde + (1.0 - st_.alpha) * x;
      const Vector z_relaxed = st_.alpha * z_tilde + (1.0 - st_.alpha) * z;
      const Vector z_next = project(z_relaxed + y.cwiseQuotient(rho_), sp_.lower, sp_.upper);
      y += rho_.cwiseProduct(z_relaxed - z_next);
      z = z_next;

      if (iter % st_.check_interval != 0 && iter != st_.max_iterations) continue;

      QpResult cur = unscale(x, y, z);
      cur.iterations = iter;
      const double prim = cur.primal_residual;
      const double dual = cur.dual_residual;
      if (prim <= st_.eps_abs && dual <= st_.eps_abs) {
        cur.status = QpStatus::kSolved;
        return cur;
      }

      if (primal_infeasibility_certificate(pb_, unscale_dual(y - y_prev), st_.eps_infeasible)) {
        cur.status = QpStatus::kPrimalInfeasible;
        return cur;
      }
      if (dual_infeasibility_certificate(pb_, sp_.D.cwiseProduct(x - x_prev), st_.eps_infeasible)) {
        cur.status = QpStatus::kDualInfeasible;
        return cur;
      }

      if (st_.polish) {
        std::vector<int> lower_set;
        std::vector<int> upper_set;
        for (Eigen::Index i = 0; i < mc; ++i) {
          if (z(i) - sp_.lower(i) < -y(i)) lower_set.push_back(static_cast<int>(i));
          if (sp_.upper(i) - z(i) < y(i)) upper_set.push_back(static_cast<int>(i));
        }
        const bool changed = !tried_polish || lower_set != last_lower || upper_set != last_upper;
        if (changed && std::max(prim, dual) < polish_trigger_) {
          tried_polish = true;
          last_lower = lower_set;
          last_upper = upper_set;
          if (auto pol = polish(pb_, lower_set, upper_set, st_)) {
            if (pol->residuals.primal <= st_.eps_abs && pol->residuals.dual <= st_.eps_abs &&
                pol->complementarity <= st_.eps_abs) {
              QpResult done;
              done.x = pol->x;
              done.y = pol->y;
              done.z = project(pb_.A * pol->x, pb_.lower, pb_.upper);
              done.primal_residual = pol->residuals.primal;
              done.dual_residual = pol->residuals.dual;
              done.iterations = iter;
              done.polished = true;
              done.status = QpStatus::kSolved;
              return done;
            }
          }
        }
      }

      if (std::max(prim, dual) < std::max(best.primal_residual, best.dual_residual)) best = cur;

      if (st_.adaptive_rho) adapt_rho(x, y, z);
    }
    best.status = QpStatus::kMaxIterations;
    best.iterations = st_.max_iterations;
    return best;
  }

 private:
  void set_rho(double rho) {
    rho_base_ = std::clamp(rho, kRhoMin, kRhoMax);
    const Eigen::Index mc = sp_.A.rows();
    rho_.resize(mc);
    for (Eigen::Index i = 0; i < mc; ++i) {
      switch (kinds_[i]) {
        case RowKind::kFree: rho_(i) = kRhoMin; break;
        case RowKind::kEquality: rho_(i) = kEqualityRhoFactor * rho_base_; break;
        case RowKind::kInequality: rho_(i) = rho_base_; break;
      }
    }
    Matrix K = sp_.P;
    K.diagonal().array() += st_.sigma;
    K.noalias() += sp_.A.transpose() * rho_.asDiagonal() * sp_.A;
    llt_.compute(K);
  }

  void adapt_rho(const Vector& x, const Vector& y, const Vector& z) {
    const Vector ax = sp_.A * x;
    const Vector px = sp_.P * x;
    const Vector aty = sp_.A.transpose() * y;
    const double prim = inf_norm(ax - z);
    const double dual = inf_norm(px + sp_.q + aty);
    const double prim_scale = std::max({inf_norm(ax), inf_norm(z), 1e-12});
    const double dual_scale = std::max({inf_norm(px), inf_norm(aty), inf_norm(sp_.q), 1e-12});
    if (prim <= 0.0 || dual <= 0.0) return;
    const double proposal = rho_base_ * std::sqrt((prim / prim_scale) / (dual / dual_scale));
    const double ratio = proposal / rho_base_;
    if (ratio > st_.adaptive_rho_tolerance || ratio < 1.0 / st_.adaptive_rho_tolerance) set_rho(proposal);
  }

  Vector unscale_dual(const Vector& y) const { return sp_.E.cwiseProduct(y) / sp_.cost; }

  QpResult unscale(const Vector& x, const Vector& y, const Vector& z) const {
    QpResult r;
    r.x = sp_.D.cwiseProduct(x);
    r.y = unscale_dual(y);
    r.z = z.cwiseQuotient(sp_.E);
    const QpResiduals res = qp_residuals(pb_, r.x, r.y);
    r.primal_residual = inf_norm(pb_.A * r.x - r.z);
    r.primal_residual = std::max(r.primal_residual, res.primal);
    r.dual_residual = res.dual;
    return r;
  }

  const QpProblem& pb_;
  const QpSettings& st_;
  ScaledProblem sp_;
  std::vector<RowKind> kinds_;
  Vector rho_;
  double rho_base_ = 0.1;
  double polish_trigger_;
  Eigen::LLT<Matrix> llt_;
};

}  // namespace

QpResiduals qp_residuals(const QpProblem& pb, const Vector& x, const Vector& y) {
  QpResiduals r;
  if (pb.A.rows() > 0) {
    const Vector ax = pb.A * x;
    r.primal = inf_norm(ax - project(ax, pb.lower, pb.upper));
    r.dual = inf_norm(pb.P * x + pb.q + pb.A.transpose() * y);
  } else {
    r.dual = inf_norm(pb.P * x + pb.q);
  }
  return r;
}

QpResult solve_qp(const QpProblem& pb, const QpSettings& st, const std::optional<Vector>& warm_x) {
  const Eigen::Index n = pb.P.rows();
  if (pb.P.cols() != n || pb.q.size() != n || pb.A.cols() != n || pb.lower.size() != pb.A.rows() ||
      pb.upper.size() != pb.A.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "solve_qp: inconsistent problem shapes");
  }
  for (Eigen::Index i = 0; i < pb.lower.size(); ++i) {
    if (pb.lower(i) > pb.upper(i)) {
      QpResult r;
      r.x = Vector::Zero(n);
      r.y = Vector::Zero(pb.A.rows());
      r.z = Vector::Zero(pb.A.rows());
      r.status = QpStatus::kPrimalInfeasible;
      return r;
    }
  }
  if (warm_x && warm_x->size() != n) throw Error(ErrorCode::kDimensionMismatch, "solve_qp: warm start length");
  AdmmWorkspace ws(pb, st);
  return ws.run(warm_x);
}

}  // namespace rtm
