#pragma once

#include "rtm/common.hpp"
#include "rtm/market_model.hpp"

#include <iosfwd>
#include <vector>

namespace rtm {

/// Square block-diagonal matrix. The market reduction produces one K×K block
/// per prosumer; the dense path produces a single m×m block.
class BlockDiagonal {
 public:
  BlockDiagonal() = default;
  explicit BlockDiagonal(std::vector<Matrix> blocks);

  int dim() const { return dim_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const Matrix& block(int b) const { return blocks_[b]; }
  int offset(int b) const { return offsets_[b]; }
  int block_size(int b) const { return static_cast<int>(blocks_[b].rows()); }

  Vector multiply(const Vector& x) const;
  Matrix dense() const;
  double entry(int row, int col) const;

 private:
  std::vector<Matrix> blocks_;
  std::vector<int> offsets_;
  int dim_ = 0;
};

struct PsdCertificate {
  bool passed = false;
  double min_eigenvalue = 0.0;
};

struct MMatrixCertificate {
  bool passed = false;
  PsdCertificate psd;
  double max_offdiagonal = 0.0;
};

/// M and r of the eliminated KKT system y = M (x + μ - ν) + r, with
/// structural certificates computed at construction.
struct ReducedModel {
  BlockDiagonal M;
  Vector r;
  PsdCertificate cert_psd;
  MMatrixCertificate cert_mmatrix;
  bool cert_structured = false;  // R diagonal, F ≤ 0 with orthogonal rows
  bool used_block_formula = false;

  int m() const { return M.dim(); }
};

enum class ReductionPath {
  kAuto,   // closed form when R is diagonal and F = -Iₙ ⊗ 1ᵀ, else dense
  kDense,  // Schur complement with dense factorizations
  kBlock,  // closed form, throws kDimensionMismatch if F is not the aggregation pattern
};

/// M = R⁻¹ - R⁻¹Fᵀ(FR⁻¹Fᵀ)⁻¹FR⁻¹ and r = R⁻¹Fᵀ(FR⁻¹Fᵀ)⁻¹d - Mc.
/// Throws kNotPositiveDefinite, kRankDeficient (condition estimate of
/// FR⁻¹Fᵀ above tol.condition_limit) or kDimensionMismatch.
ReducedModel compute_reduced(const Matrix& R, const Matrix& F, const Vector& c, const Vector& d,
                             ReductionPath path = ReductionPath::kAuto, const Tolerances& tol = {});

/// Closed-form reduction for a market instance (R = Q diagonal, F = E).
ReducedModel compute_reduced(const MarketInstance& instance, const Tolerances& tol = {});

/// Smallest eigenvalue via symmetric eigendecomposition. Throws kNotSymmetric.
PsdCertificate check_psd(const Matrix& M, const Tolerances& tol = {});
PsdCertificate check_psd(const BlockDiagonal& M, const Tolerances& tol = {});

/// PSD plus nonpositive off-diagonal entries. Throws kNotSymmetric.
MMatrixCertificate check_mmatrix(const Matrix& M, const Tolerances& tol = {});
MMatrixCertificate check_mmatrix(const BlockDiagonal& M, const Tolerances& tol = {});

/// F entrywise nonpositive, rows of F mutually orthogonal, R diagonal. When
/// these hold the reduced M is guaranteed to be an M-matrix.
bool check_structured_preconditions(const Matrix& R, const Matrix& F);

/// True when F is exactly -Iₙ ⊗ 1ᵀ for some K = cols / rows.
bool is_aggregation_pattern(const Matrix& F);

struct ReductionIdentities {
  double annihilation = 0.0;  // |M Fᵀ|∞
  double equality = 0.0;      // |F r - d|∞
};

ReductionIdentities reduction_identities(const ReducedModel& model, const Matrix& F, const Vector& d);
ReductionIdentities reduction_identities(const ReducedModel& model, const MarketInstance& instance);

/// Dense text dump: m rows of M, then one row holding r; space separated.
void write_dense(std::ostream& out, const ReducedModel& model);

}  // namespace rtm
