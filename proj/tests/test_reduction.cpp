#include "rtm/reduction.hpp"
#include "rtm/harness.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rtm;

namespace {

// Reference Schur complement evaluated with explicit inverses.
std::pair<Matrix, Vector> dense_reference(const Matrix& R, const Matrix& F, const Vector& c, const Vector& d) {
  const Matrix Ri = R.inverse();
  const Matrix Gi = (F * Ri * F.transpose()).inverse();
  const Matrix M = Ri - Ri * F.transpose() * Gi * F * Ri;
  const Vector r = Ri * F.transpose() * Gi * d - M * c;
  return {M, r};
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(ComputeReduced, FixtureA) {
  const MarketInstance inst = rtm::test::fixture_a();
  const ReducedModel red = compute_reduced(inst);
  const Matrix want = 0.25 * mat2(1, -1, -1, 1);
  EXPECT_LE((red.M.dense() - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(red.r(0), 0.0, 1e-15);
  EXPECT_NEAR(red.r(1), 2.0, 1e-15);
  EXPECT_TRUE(red.used_block_formula);

  const auto [M_ref, r_ref] = dense_reference(Matrix(inst.q.asDiagonal()), inst.E().dense(), inst.c, inst.d);
  EXPECT_LE((red.M.dense() - M_ref).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((red.r - r_ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ComputeReduced, DenseAndBlockPathsAgree) {
  const MarketInstance inst = rtm::test::fixture_a();
  const Matrix R = inst.q.asDiagonal();
  const Matrix F = inst.E().dense();
  const ReducedModel dense = compute_reduced(R, F, inst.c, inst.d, ReductionPath::kDense);
  const ReducedModel block = compute_reduced(R, F, inst.c, inst.d, ReductionPath::kBlock);
  EXPECT_FALSE(dense.used_block_formula);
  EXPECT_LE((dense.M.dense() - block.M.dense()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((dense.r - block.r).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ComputeReduced, ScalarBlockVanishes) {
  Matrix R(1, 1), F(1, 1);
  R << 3.0;
  F << -1.0;
  Vector c(1), d(1);
  c << 0.7;
  d << 1.5;
  const ReducedModel red = compute_reduced(R, F, c, d);
  EXPECT_NEAR(red.M.dense()(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(red.r(0), -1.5, 1e-15);
}

TEST(ComputeReduced, IdentityWeights) {
  const Matrix R = Matrix::Identity(2, 2);
  Matrix F(1, 2);
  F << -1, -1;
  const ReducedModel red = compute_reduced(R, F, Vector::Zero(2), Vector::Zero(1));
  EXPECT_LE((red.M.dense() - 0.5 * mat2(1, -1, -1, 1)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(red.r.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ComputeReduced, ErrorPaths) {
  Matrix F(1, 2);
  F << -1, -1;
  const Vector c = Vector::Zero(2);
  const Vector d = Vector::Zero(1);
  EXPECT_THROW(compute_reduced(mat2(1, 0, 0, -1), F, c, d), Error);
  Matrix Fdup(2, 2);
  Fdup << 1, 1, 1, 1;
  try {
    compute_reduced(Matrix::Identity(2, 2), Fdup, c, Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankDeficient);
  }
  EXPECT_THROW(compute_reduced(Matrix::Identity(3, 3), F, c, d), Error);
  Matrix Fpos(1, 2);
  Fpos << 1, -1;
  EXPECT_THROW(compute_reduced(Matrix::Identity(2, 2), Fpos, c, d, ReductionPath::kBlock), Error);
}

TEST(CheckPsd, Examples) {
  const PsdCertificate a = check_psd(Matrix(0.25 * mat2(1, -1, -1, 1)));
  EXPECT_TRUE(a.passed);
  EXPECT_NEAR(a.min_eigenvalue, 0.0, 1e-15);
  const PsdCertificate b = check_psd(mat2(1, 2, 2, 1));
  EXPECT_FALSE(b.passed);
  EXPECT_NEAR(b.min_eigenvalue, -1.0, 1e-12);
  EXPECT_TRUE(check_psd(Matrix(Matrix::Zero(3, 3))).passed);
  EXPECT_THROW(check_psd(mat2(1, 0, 1, 1)), Error);
}

TEST(CheckMMatrix, Examples) {
  EXPECT_TRUE(check_mmatrix(Matrix(0.25 * mat2(1, -1, -1, 1))).passed);
  const MMatrixCertificate b = check_mmatrix(mat2(1, 0.5, 0.5, 1));
  EXPECT_FALSE(b.passed);
  EXPECT_TRUE(b.psd.passed);
  EXPECT_NEAR(b.max_offdiagonal, 0.5, 0);
  EXPECT_TRUE(check_mmatrix(Matrix(Matrix::Zero(2, 2))).passed);
}

TEST(StructuredPreconditions, Examples) {
  const Matrix F = AggregationOperator(2, 3).dense();
  Vector q(6);
  q << 1, 2, 3, 0.5, 7, 1e-3;
  EXPECT_TRUE(check_structured_preconditions(q.asDiagonal(), F));
  EXPECT_TRUE(is_aggregation_pattern(F));
  Matrix G(2, 2);
  G << -1, 0, -1, -1;
  EXPECT_FALSE(check_structured_preconditions(Matrix::Identity(2, 2), G));
  Matrix H(1, 2);
  H << 1, -1;
  EXPECT_FALSE(check_structured_preconditions(Matrix::Identity(2, 2), H));
  EXPECT_FALSE(is_aggregation_pattern(G));
}

TEST(ComputeReduced, RandomDenseMatchesReference) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 6;
    const int k = 1 + trial % (m - 1);
    const Matrix A = Matrix::NullaryExpr(m, m, [&] { return rtm::test::uniform(rng, 1, -1, 1)(0); });
    const Matrix R = A * A.transpose() + 0.5 * Matrix::Identity(m, m);
    const Matrix F = Matrix::NullaryExpr(k, m, [&] { return rtm::test::uniform(rng, 1, -1, 1)(0); });
    const Vector c = rtm::test::uniform(rng, m, -1, 1);
    const Vector d = rtm::test::uniform(rng, k, -1, 1);
    const ReducedModel red = compute_reduced(R, F, c, d);
    const auto [M_ref, r_ref] = dense_reference(R, F, c, d);
    ASSERT_LE((red.M.dense() - M_ref).cwiseAbs().maxCoeff(), 1e-8) << trial;
    ASSERT_LE((red.r - r_ref).cwiseAbs().maxCoeff(), 1e-8) << trial;
    const ReductionIdentities ids = reduction_identities(red, F, d);
    ASSERT_LE(ids.annihilation, 1e-10);
    ASSERT_LE(ids.equality, 1e-10);
  }
}

TEST(ReductionIdentities, InstanceOverloadMatchesDense) {
  GeneratorConfig cfg;
  cfg.n = 4;
  cfg.K = 5;
  const MarketInstance inst = assemble(generate(cfg));
  const ReducedModel red = compute_reduced(inst);
  const ReductionIdentities a = reduction_identities(red, inst);
  const ReductionIdentities b = reduction_identities(red, inst.E().dense(), inst.d);
  EXPECT_LE(a.annihilation, 1e-12);
  EXPECT_LE(a.equality, 1e-12);
  EXPECT_NEAR(a.annihilation, b.annihilation, 1e-14);
  EXPECT_TRUE(red.cert_mmatrix.passed);
  EXPECT_TRUE(red.cert_structured);
}

TEST(WriteDense, FixtureA) {
  std::ostringstream os;
  write_dense(os, compute_reduced(rtm::test::fixture_a()));
  EXPECT_EQ(os.str(), "0.25 -0.25\n-0.25 0.25\n0 2\n");
}

TEST(BlockDiagonal, MultiplyAndEntry) {
  BlockDiagonal B({mat2(1, 2, 3, 4), Matrix::Constant(1, 1, 5.0)});
  EXPECT_EQ(B.dim(), 3);
  Vector x(3);
  x << 1, 1, 2;
  const Vector y = B.multiply(x);
  EXPECT_EQ(y, B.dense() * x);
  EXPECT_EQ(B.entry(1, 0), 3.0);
  EXPECT_EQ(B.entry(0, 2), 0.0);
  EXPECT_EQ(B.entry(2, 2), 5.0);
}
