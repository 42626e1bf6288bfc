#include "rtm/reduction.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace rtm {

BlockDiagonal::BlockDiagonal(std::vector<Matrix> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size());
  for (const Matrix& b : blocks_) {
    if (b.rows() != b.cols()) throw Error(ErrorCode::kDimensionMismatch, "block is not square");
    offsets_.push_back(dim_);
    dim_ += static_cast<int>(b.rows());
  }
}

Vector BlockDiagonal::multiply(const Vector& x) const {
  if (x.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "block-diagonal multiply: wrong length");
  Vector out(dim_);
  for (int b = 0; b < num_blocks(); ++b) {
    const int n = block_size(b);
    out.segment(offsets_[b], n).noalias() = blocks_[b] * x.segment(offsets_[b], n);
  }
  return out;
}

Matrix BlockDiagonal::dense() const {
  Matrix out = Matrix::Zero(dim_, dim_);
  for (int b = 0; b < num_blocks(); ++b) {
    out.block(offsets_[b], offsets_[b], block_size(b), block_size(b)) = blocks_[b];
  }
  return out;
}

double BlockDiagonal::entry(int row, int col) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), row);
  const int b = static_cast<int>(it - offsets_.begin()) - 1;
  const int lo = offsets_[b];
  if (col < lo || col >= lo + block_size(b)) return 0.0;
  return blocks_[b](row - lo, col - lo);
}

namespace {

double max_abs(const Matrix& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

void require_symmetric(const Matrix& M, const Tolerances& tol) {
  if (M.rows() != M.cols()) throw Error(ErrorCode::kNotSymmetric, "matrix is not square");
  if (M.size() == 0) return;
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol.symmetry * std::max(1.0, max_abs(M))) {
    std::ostringstream os;
    os << "|M - Mᵀ| = " << asym;
    throw Error(ErrorCode::kNotSymmetric, os.str());
  }
}

double min_eigenvalue(const Matrix& M) {
  if (M.rows() == 0) return 0.0;
  if (M.rows() == 1) return M(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_offdiagonal(const Matrix& M) {
  double best = -kInf;
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      if (i != j) best = std::max(best, M(i, j));
    }
  }
  return best;
}

bool is_diagonal(const Matrix& R) {
  for (Eigen::Index j = 0; j < R.cols(); ++j) {
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
      if (i != j && R(i, j) != 0.0) return false;
    }
  }
  return true;
}

// One prosumer block of the closed form:
// M = W - w wᵀ / Σw, r = -w d / Σw - M c, with W = diag(w), w = 1/q.
void closed_form_block(const Vector& q, const Vector& c, double d, Matrix& M, Vector& r) {
  const Vector w = q.cwiseInverse();
  const double total = w.sum();
  M = -(w * w.transpose()) / total;
  M.diagonal() += w;
  r = -w * (d / total) - M * c;
}

ReducedModel finish(ReducedModel model, bool structured, const Tolerances& tol) {
  model.cert_mmatrix = check_mmatrix(model.M, tol);
  model.cert_psd = model.cert_mmatrix.psd;
  model.cert_structured = structured;
  return model;
}

ReducedModel reduce_block(const Vector& q, const Vector& c, const Vector& d, int n, int K, const Tolerances& tol) {
  std::vector<Matrix> blocks(n);
  ReducedModel model;
  model.r.resize(static_cast<Eigen::Index>(n) * K);
  for (int i = 0; i < n; ++i) {
    Vector rb;
    closed_form_block(q.segment(i * K, K), c.segment(i * K, K), d(i), blocks[i], rb);
    model.r.segment(i * K, K) = rb;
  }
  model.M = BlockDiagonal(std::move(blocks));
  model.used_block_formula = true;
  return finish(std::move(model), true, tol);
}

ReducedModel reduce_dense(const Matrix& R, const Matrix& F, const Vector& c, const Vector& d, const Tolerances& tol) {
  const Eigen::Index m = R.rows();
  if (max_abs(R - R.transpose()) > tol.symmetry * std::max(1.0, max_abs(R))) {
    throw Error(ErrorCode::kNotPositiveDefinite, "R is not symmetric");
  }
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPositiveDefinite, "Cholesky factorization of R failed");

  const Matrix Rinv = llt.solve(Matrix::Identity(m, m));
  const Matrix RinvFt = llt.solve(F.transpose());
  Matrix G = F * RinvFt;
  G = 0.5 * (G + G.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > tol.condition_limit) {
    std::ostringstream os;
    os << "F R⁻¹ Fᵀ has eigenvalues in [" << lo << ", " << hi << "]";
    throw Error(ErrorCode::kRankDeficient, os.str());
  }
  Eigen::LLT<Matrix> g_llt(G);
  const Matrix GinvFRinv = g_llt.solve(RinvFt.transpose());

  Matrix M = Rinv - RinvFt * GinvFRinv;
  M = 0.5 * (M + M.transpose());

  ReducedModel model;
  model.r = RinvFt * g_llt.solve(d) - M * c;
  model.M = BlockDiagonal({std::move(M)});
  return finish(std::move(model), check_structured_preconditions(R, F), tol);
}

}  // namespace

bool is_aggregation_pattern(const Matrix& F) {
  const Eigen::Index n = F.rows();
  if (n == 0 || F.cols() % n != 0 || F.cols() == 0) return false;
  const Eigen::Index K = F.cols() / n;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < F.cols(); ++j) {
      const double expected = (j / K == i) ? -1.0 : 0.0;
      if (F(i, j) != expected) return false;
    }
  }
  return true;
}

ReducedModel compute_reduced(const Matrix& R, const Matrix& F, const Vector& c, const Vector& d, ReductionPath path,
                             const Tolerances& tol) {
  const Eigen::Index m = R.rows();
  if (R.cols() != m || F.cols() != m || c.size() != m || d.size() != F.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "compute_reduced: inconsistent shapes of R, F, c, d");
  }
  if (F.rows() == 0 || F.rows() > m) throw Error(ErrorCode::kRankDeficient, "F must have between 1 and m rows");

  const bool block_ok = is_diagonal(R) && is_aggregation_pattern(F);
  if (path == ReductionPath::kBlock && !block_ok) {
    throw Error(ErrorCode::kDimensionMismatch, "block path needs diagonal R and F = -I ⊗ 1ᵀ");
  }
  if (path != ReductionPath::kDense && block_ok) {
    const Vector q = R.diagonal();
    if (!(q.minCoeff() > 0.0)) throw Error(ErrorCode::kNotPositiveDefinite, "diagonal R has a nonpositive entry");
    const int n = static_cast<int>(F.rows());
    return reduce_block(q, c, d, n, static_cast<int>(m / n), tol);
  }
  return reduce_dense(R, F, c, d, tol);
}

ReducedModel compute_reduced(const MarketInstance& inst, const Tolerances& tol) {
  if (inst.q.size() != inst.m() || inst.c.size() != inst.m() || inst.d.size() != inst.n) {
    throw Error(ErrorCode::kDimensionMismatch, "instance vectors do not match n·K");
  }
  if (!(inst.q.minCoeff() > 0.0)) throw Error(ErrorCode::kNotPositiveDefinite, "Q has a nonpositive weight");
  return reduce_block(inst.q, inst.c, inst.d, inst.n, inst.K, tol);
}

PsdCertificate check_psd(const Matrix& M, const Tolerances& tol) {
  require_symmetric(M, tol);
  PsdCertificate cert;
  cert.min_eigenvalue = min_eigenvalue(M);
  cert.passed = cert.min_eigenvalue >= tol.psd_eigenvalue;
  return cert;
}

PsdCertificate check_psd(const BlockDiagonal& M, const Tolerances& tol) {
  PsdCertificate cert;
  cert.min_eigenvalue = M.num_blocks() == 0 ? 0.0 : kInf;
  for (int b = 0; b < M.num_blocks(); ++b) {
    require_symmetric(M.block(b), tol);
    cert.min_eigenvalue = std::min(cert.min_eigenvalue, min_eigenvalue(M.block(b)));
  }
  cert.passed = cert.min_eigenvalue >= tol.psd_eigenvalue;
  return cert;
}

MMatrixCertificate check_mmatrix(const Matrix& M, const Tolerances& tol) {
  MMatrixCertificate cert;
  cert.psd = check_psd(M, tol);
  cert.max_offdiagonal = M.rows() > 1 ? max_offdiagonal(M) : 0.0;
  cert.passed = cert.psd.passed && cert.max_offdiagonal <= tol.mmatrix_offdiag;
  return cert;
}

MMatrixCertificate check_mmatrix(const BlockDiagonal& M, const Tolerances& tol) {
  MMatrixCertificate cert;
  cert.psd = check_psd(M, tol);
  // Entries outside the blocks are zero.
  cert.max_offdiagonal = M.num_blocks() > 1 ? 0.0 : -kInf;
  for (int b = 0; b < M.num_blocks(); ++b) {
    if (M.block_size(b) > 1) cert.max_offdiagonal = std::max(cert.max_offdiagonal, max_offdiagonal(M.block(b)));
  }
  if (cert.max_offdiagonal == -kInf) cert.max_offdiagonal = 0.0;
  cert.passed = cert.psd.passed && cert.max_offdiagonal <= tol.mmatrix_offdiag;
  return cert;
}

bool check_structured_preconditions(const Matrix& R, const Matrix& F) {
  if (R.rows() != R.cols() || F.cols() != R.cols()) return false;
  if (!is_diagonal(R)) return false;
  if (F.size() > 0 && F.maxCoeff() > 0.0) return false;
  const Matrix gram = F * F.transpose();
  const double scale = std::max(1.0, max_abs(gram));
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      if (i != j && std::abs(gram(i, j)) > 1e-12 * scale) return false;
    }
  }
  return true;
}

ReductionIdentities reduction_identities(const ReducedModel& model, const Matrix& F, const Vector& d) {
  ReductionIdentities ids;
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    const Vector col = model.M.multiply(F.row(i).transpose());
    ids.annihilation = std::max(ids.annihilation, col.cwiseAbs().maxCoeff());
  }
  ids.equality = (F * model.r - d).cwiseAbs().maxCoeff();
  return ids;
}

ReductionIdentities reduction_identities(const ReducedModel& model, const MarketInstance& inst) {
  ReductionIdentities ids;
  bool per_block = model.M.num_blocks() == inst.n;
  for (int b = 0; per_block && b < model.M.num_blocks(); ++b) per_block = model.M.block_size(b) == inst.K;
  if (!per_block) return reduction_identities(model, inst.E().dense(), inst.d);
  for (int b = 0; b < inst.n; ++b) {
    // M Eᵀ e_b = -M_b 1.
    ids.annihilation = std::max(ids.annihilation, model.M.block(b).rowwise().sum().cwiseAbs().maxCoeff());
  }
  ids.equality = (inst.E().apply(model.r) - inst.d).cwiseAbs().maxCoeff();
  return ids;
}

void write_dense(std::ostream& out, const ReducedModel& model) {
  const Matrix M = model.M.dense();
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? " " : "") << M(i, j);
    out << '\n';
  }
  for (Eigen::Index j = 0; j < model.r.size(); ++j) out << (j ? " " : "") << model.r(j);
  out << '\n';
}

}  // namespace rtm
