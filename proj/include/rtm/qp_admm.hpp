#pragma once

#include "rtm/common.hpp"

#include <optional>

namespace rtm {

/// minimize ½ xᵀPx + qᵀx subject to lower ≤ Ax ≤ upper.
/// P is symmetric positive semidefinite; bounds may be ±inf.
struct QpProblem {
  Matrix P;
  Vector q;
  Matrix A;
  Vector lower;
  Vector upper;
};

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;  // over-relaxation
  int max_iterations = 200000;
  double eps_abs = 1e-8;
  double eps_infeasible = 1e-7;
  int check_interval = 25;
  bool adaptive_rho = true;
  double adaptive_rho_tolerance = 5.0;
  bool scaling = true;
  int scaling_iterations = 10;
  bool polish = true;
  int polish_refinement_steps = 5;
  double polish_delta = 1e-9;
};

enum class QpStatus { kSolved, kMaxIterations, kPrimalInfeasible, kDualInfeasible };

struct QpResult {
  Vector x;
  Vector y;  // multipliers: Px + q + Aᵀy = 0, y > 0 on active upper bounds
  Vector z;  // projection of Ax onto the bounds
  QpStatus status = QpStatus::kMaxIterations;
  int iterations = 0;
  double primal_residual = kInf;
  double dual_residual = kInf;
  bool polished = false;
};

/// Operator-splitting (ADMM) QP solver in the style of OSQP: Ruiz
/// equilibration, one dense Cholesky factorization per penalty value,
/// over-relaxation, adaptive penalty, infeasibility certificates, and an
/// active-set polishing step.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                  const std::optional<Vector>& warm_x = std::nullopt);

/// Unscaled residuals of a candidate (x, y).
struct QpResiduals {
  double primal = 0.0;
  double dual = 0.0;
};
QpResiduals qp_residuals(const QpProblem& problem, const Vector& x, const Vector& y);

}  // namespace rtm
