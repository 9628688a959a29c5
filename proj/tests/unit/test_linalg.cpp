#include <gtest/gtest.h>

#include "cmmi/linalg.hpp"
#include "cmmi/random.hpp"
#include "support/oracles.hpp"

using namespace cmmi;

namespace {

// Compares the partial solver with the full one on a spectrum with clear gaps.
void check_against_full(Index n, Index top, Index bottom, std::uint64_t seed) {
  CounterRng rng(seed);
  Vector spectrum(n);
  for (Index k = 0; k < n; ++k) spectrum[k] = static_cast<double>(k) - 0.37 * static_cast<double>(n);
  const Matrix a = oracle::symmetric_with_spectrum(spectrum, rng);
  const auto got = linalg::symmetric_eigen(a, top, bottom);
  Eigen::SelfAdjointEigenSolver<Matrix> full(a);
  EXPECT_LT((got.values - full.eigenvalues()).cwiseAbs().maxCoeff(), 1e-9);
  for (Index k = 0; k < top; ++k) {
    EXPECT_NEAR(got.top_values[k], full.eigenvalues()[n - 1 - k], 1e-9);
    const Vector v = full.eigenvectors().col(n - 1 - k);
    EXPECT_NEAR(std::abs(v.dot(got.top_vectors.col(k))), 1.0, 1e-9);
  }
  for (Index k = 0; k < bottom; ++k) {
    EXPECT_NEAR(got.bottom_values[k], full.eigenvalues()[k], 1e-9);
    EXPECT_NEAR(std::abs(full.eigenvectors().col(k).dot(got.bottom_vectors.col(k))), 1.0, 1e-9);
  }
}

}  // namespace

TEST(SymmetricEigen, SmallMatrixUsesFullSolver) { check_against_full(20, 3, 2, 1); }

TEST(SymmetricEigen, LargeMatrixPartialVectorsMatchFullSolver) {
  check_against_full(150, 3, 0, 2);
  check_against_full(150, 2, 2, 3);
  check_against_full(131, 0, 4, 4);
}

TEST(SymmetricEigen, ResidualOfReturnedPairs) {
  CounterRng rng(9);
  const Matrix a = oracle::random_symmetric(200, rng);
  const auto got = linalg::symmetric_eigen(a, 4, 3);
  for (Index k = 0; k < 4; ++k)
    EXPECT_LT((a * got.top_vectors.col(k) - got.top_values[k] * got.top_vectors.col(k)).norm(), 1e-9);
  for (Index k = 0; k < 3; ++k)
    EXPECT_LT((a * got.bottom_vectors.col(k) - got.bottom_values[k] * got.bottom_vectors.col(k)).norm(), 1e-9);
}

TEST(NumericalRank, CountsSingularValuesAboveTolerance) {
  Matrix m = Matrix::Zero(4, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-3;
  EXPECT_EQ(linalg::numerical_rank(m, 1e-10), 2);
  EXPECT_EQ(linalg::numerical_rank(m, 1e-2), 1);
  EXPECT_EQ(linalg::numerical_rank(Matrix::Zero(3, 3), 1e-10), 0);
}

TEST(GatherRows, KeepsRequestedOrder) {
  Matrix m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  const Matrix g = linalg::gather_rows(m, std::vector<Index>{2, 0});
  Matrix want(2, 2);
  want << 5, 6, 1, 2;
  EXPECT_EQ(g, want);
}

TEST(FixColumnSigns, LargestEntryBecomesPositiveTiesGoToLowestRow) {
  Matrix m(3, 3);
  m << -3, 1, 2,
        1, -1, -2,
        2, 0, 0;
  const Vector s = linalg::fix_column_signs(m);
  EXPECT_EQ(s[0], -1.0);
  EXPECT_EQ(s[1], 1.0);  // tie between rows 0 and 1: row 0 already positive
  EXPECT_EQ(s[2], 1.0);
  EXPECT_EQ(m(0, 0), 3.0);
  EXPECT_EQ(m(0, 2), 2.0);
}
