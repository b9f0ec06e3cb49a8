// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <limits>

#include "mpolstm/error.hpp"
#include "mpolstm/svd.hpp"
#include "test_support.hpp"

using namespace mpolstm;
using namespace testing_support;

class SvdShapes : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(SvdShapes, SingularValuesMatchEigen) {
  const auto [r, c] = GetParam();
  std::mt19937_64 rng(r * 131 + c);
  const Matrix a = random_matrix(r, c, rng);
  const auto ours = singular_values(a);
  const auto ref = eigen_singular_values(a);
  ASSERT_EQ(ours.size(), ref.size());
  for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(ours[k], ref[k], 1e-12 * ref[0]);
}

TEST_P(SvdShapes, TruncationErrorEqualsEigenTail) {
  const auto [r, c] = GetParam();
  std::mt19937_64 rng(r * 17 + c);
  const Matrix a = random_matrix(r, c, rng);
  for (std::size_t rank = 1; rank < std::min(r, c); rank += 2) {
    const SvdResult s = truncated_svd(a, rank);
    const double err = distance(svd_reconstruct(s).data(), a.data());
    const double tail = eigen_tail_norm(a, rank);
    EXPECT_NEAR(err, tail, 1e-10 * tail);
    EXPECT_NEAR(s.discarded_norm, tail, 1e-10 * tail);
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, SvdShapes,
                         ::testing::Values(std::pair<std::size_t, std::size_t>{8, 8}, std::pair{20, 7},
                                           std::pair{7, 20}, std::pair{33, 31}, std::pair{2, 50}));

TEST(Svd, FactorsAreOrthonormal) {
  std::mt19937_64 rng(5);
  const Matrix a = random_matrix(30, 12, rng);
  const SvdResult s = truncated_svd(a, 12);
  const Matrix utu = matmul_tn(s.u, s.u), vvt = matmul_nt(s.vt, s.vt), eye = Matrix::identity(12);
  EXPECT_LT(distance(utu.data(), eye.data()), 1e-13);
  EXPECT_LT(distance(vvt.data(), eye.data()), 1e-13);
  for (std::size_t k = 1; k < s.s.size(); ++k) EXPECT_GE(s.s[k - 1], s.s[k]);
}

TEST(Svd, RankDeficientDropsNullDirections) {
  std::mt19937_64 rng(11);
  const Matrix a = matmul(random_matrix(15, 3, rng), random_matrix(3, 10, rng));
  const SvdResult s = truncated_svd(a, 10);
  EXPECT_EQ(s.rank(), 3u);
  EXPECT_LT(rel_distance(svd_reconstruct(s).data(), a.data()), 1e-13);
  EXPECT_EQ(truncated_svd(Matrix(4, 4), 4).rank(), 0u);
}

TEST(Svd, SignConventionAndDeterminism) {
  std::mt19937_64 rng(13);
  const Matrix a = random_matrix(9, 6, rng);
  const SvdResult s1 = truncated_svd(a, 6), s2 = truncated_svd(a, 6);
  EXPECT_EQ(s1.u, s2.u);
  EXPECT_EQ(s1.vt, s2.vt);
  EXPECT_EQ(s1.s, s2.s);
  for (std::size_t c = 0; c < s1.u.cols(); ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < s1.u.rows(); ++r)
      if (std::abs(s1.u(r, c)) > std::abs(s1.u(best, c))) best = r;
    EXPECT_GE(s1.u(best, c), 0.0);
  }
}

TEST(Svd, DiagonalExample) {
  const Matrix a(2, 2, {3.0, 0.0, 0.0, -4.0});
  const SvdResult s = truncated_svd(a, 1);
  ASSERT_EQ(s.rank(), 1u);
  EXPECT_NEAR(s.s[0], 4.0, 1e-15);
  EXPECT_NEAR(s.discarded_norm, 3.0, 1e-15);
}

TEST(Svd, Errors) {
  Matrix a(2, 2, {1.0, 2.0, 3.0, std::numeric_limits<double>::infinity()});
  EXPECT_THROW(truncated_svd(a, 2), NumericError);
  EXPECT_THROW(truncated_svd(Matrix::identity(2), 0), ExtentError);
}
