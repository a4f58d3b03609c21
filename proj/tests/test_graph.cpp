#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bgr/graph.hpp"
#include "bgr/instrument.hpp"

using namespace bgr;

namespace {

const Tensor2 kH = Tensor2::from_rows({{1, 2}, {3, 4}});
const Vector kB{0.5, 0.0};

struct Instance {
  Tensor2 H;
  Vector B;
};

Instance random_instance(std::uint64_t seed) {
  SplitMix64 r(seed);
  const std::size_t n = 2 + r.below(40), c = 1 + r.below(8);
  return {seeded_random(n, c, r.next()), seeded_uniform_vector(n, r.next(), 0.0, 1.0)};
}

double dot_rows(const Tensor2& H, std::size_t i, std::size_t j) {
  long double s = 0;
  for (std::size_t k = 0; k < H.cols(); ++k) s += (long double)H(i, k) * H(j, k);
  return double(s);
}

}  // namespace

TEST(Similarity, FixtureF1) {
  EXPECT_EQ(similarity(kH), Tensor2::from_rows({{5, 11}, {11, 25}}));
}

TEST(Similarity, ExactlySymmetricAndMatchesDotProducts) {
  for (std::uint64_t s = 1; s <= 30; ++s) {
    const auto in = random_instance(s);
    const Tensor2 A = similarity(in.H);
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) {
        ASSERT_EQ(A(i, j), A(j, i));
        ASSERT_NEAR(A(i, j), dot_rows(in.H, i, j), 1e-12);
      }
  }
}

TEST(Reweight, FixtureF1IsExact) {
  EXPECT_EQ(boundary_reweight_dense(similarity(kH), kB),
            Tensor2::from_rows({{15, 27.5}, {27.5, 50}}));
}

TEST(Reweight, ScalarLawProperty) {
  for (std::uint64_t s = 1; s <= 50; ++s) {
    const auto in = random_instance(s);
    const Tensor2 A_bw = boundary_reweight_dense(similarity(in.H), in.B);
    for (std::size_t i = 0; i < A_bw.rows(); ++i)
      for (std::size_t j = 0; j < A_bw.cols(); ++j)
        ASSERT_NEAR(A_bw(i, j), (2.0 + in.B[i] + in.B[j]) * dot_rows(in.H, i, j), 1e-10)
            << "seed " << s;
  }
}

TEST(Reweight, ZeroScoresDoubleTheAdjacency) {
  const auto in = random_instance(3);
  const Tensor2 A = similarity(in.H);
  const Tensor2 A_bw = boundary_reweight_dense(A, Vector(in.H.rows(), 0.0));
  for (std::size_t i = 0; i < A.size(); ++i) EXPECT_EQ(A_bw.values()[i], 2.0 * A.values()[i]);
}

TEST(Reweight, UnitScoresQuadrupleTheAdjacency) {
  const auto in = random_instance(4);
  const Tensor2 A = similarity(in.H);
  const Tensor2 A_bw = boundary_reweight_dense(A, Vector(in.H.rows(), 1.0));
  for (std::size_t i = 0; i < A.size(); ++i) EXPECT_EQ(A_bw.values()[i], 4.0 * A.values()[i]);
}

TEST(Reweight, RejectsOutOfRangeScores) {
  const Tensor2 A = similarity(kH);
  EXPECT_THROW(boundary_reweight_dense(A, Vector{1.5, 0.0}), DomainError);
  EXPECT_THROW(boundary_reweight_dense(A, Vector{-0.1, 0.0}), DomainError);
  EXPECT_THROW(boundary_reweight_dense(A, Vector{std::nan(""), 0.0}), DomainError);
  EXPECT_THROW(boundary_reweight_dense(A, Vector{0.5}), ShapeError);
  EXPECT_THROW(hat_features(kH, Vector{2.0, 0.0}), DomainError);
}

TEST(HatFeatures, FixtureF1) {
  EXPECT_EQ(hat_features(kH, kB), Tensor2::from_rows({{1.5, 3}, {3, 4}}));
}

TEST(Degree, FixtureF1) {
  const Vector expected{42.5, 77.5};
  EXPECT_EQ(degree_factorized(kH, hat_features(kH, kB)), expected);
  EXPECT_EQ(degree_dense(boundary_reweight_dense(similarity(kH), kB)), expected);
}

TEST(Degree, FactorizedMatchesDenseRowSums) {
  for (std::uint64_t s = 1; s <= 50; ++s) {
    const auto in = random_instance(s);
    const Tensor2 A_bw = boundary_reweight_dense(similarity(in.H), in.B);
    Vector oracle(A_bw.rows());
    for (std::size_t i = 0; i < A_bw.rows(); ++i) {
      long double r = 0;
      for (std::size_t j = 0; j < A_bw.cols(); ++j) r += A_bw(i, j);
      oracle[i] = double(r);
    }
    EXPECT_LT(max_abs_diff(degree_factorized(in.H, hat_features(in.H, in.B)), oracle), 1e-9);
  }
}

TEST(Degree, ShapeErrors) {
  EXPECT_THROW(degree_dense(Tensor2(2, 3)), ShapeError);
  EXPECT_THROW(degree_factorized(kH, Tensor2(2, 3)), ShapeError);
}

TEST(Degree, FactorizedNeverAllocatesNodeByNode) {
  const auto H = seeded_random(300, 4, 1);
  const auto B = seeded_uniform_vector(300, 2, 0.0, 1.0);
  AllocationScope scope;
  (void)degree_factorized(H, hat_features(H, B));
  EXPECT_LT(scope.stats().largest_elems, 300u * 300u);
}

TEST(Embedding, AffineRowsAndShapeChecks) {
  FeatureMap x(1, 2, 2, std::vector<double>{1, 2, 3, 4});
  EmbeddingParams p{Tensor2::from_rows({{1, 0, 1}, {0, 1, 1}}), Vector{0.5, 0, -1}};
  EXPECT_EQ(embed(x, p), Tensor2::from_rows({{1.5, 2, 2}, {3.5, 4, 6}}));
  EmbeddingParams bad{Tensor2(3, 3), Vector(3)};
  EXPECT_THROW(embed(x, bad), ShapeError);
  EmbeddingParams bad_bias{Tensor2(2, 3), Vector(2)};
  EXPECT_THROW(embed(x, bad_bias), ShapeError);
}

TEST(BuildGraph, CarriesFactorizedDegrees) {
  const auto g = build_graph(kH, kB);
  EXPECT_EQ(g.nodes(), 2u);
  EXPECT_EQ(g.degrees, (Vector{42.5, 77.5}));
  EXPECT_EQ(g.H_hat, hat_features(kH, kB));
}

TEST(Similarity, OrthogonalRowsHaveZeroOffDiagonal) {
  const Tensor2 A = similarity(Tensor2::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 3}}));
  EXPECT_EQ(A, Tensor2::from_rows({{1, 0, 0}, {0, 4, 0}, {0, 0, 9}}));
}

TEST(HatFeatures, ZeroScoresLeaveFeaturesUnchanged) {
  const auto in = random_instance(8);
  EXPECT_EQ(hat_features(in.H, Vector(in.H.rows(), 0.0)), in.H);
}

TEST(Degree, DenseSmallCases) {
  EXPECT_EQ(degree_dense(Tensor2(3, 3)), Vector(3, 0.0));
  EXPECT_EQ(degree_dense(Tensor2::identity(3)), Vector(3, 1.0));
}

TEST(Degree, ZeroScoresDoubleTheRowSums) {
  const auto in = random_instance(9);
  const Tensor2 A = similarity(in.H);
  const Vector d = degree_factorized(in.H, hat_features(in.H, Vector(in.H.rows(), 0.0)));
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double r = 0;
    for (std::size_t j = 0; j < A.cols(); ++j) r += A(i, j);
    EXPECT_NEAR(d[i], 2.0 * r, 1e-12 * std::max(1.0, std::abs(r)));
  }
}

TEST(Factorization, HatTimesHPlusTransposeIsTheReweightedAdjacency) {
  for (std::uint64_t s = 1; s <= 30; ++s) {
    SplitMix64 r(s);
    const std::size_t n = 1 + r.below(256), c = 1 + r.below(16);
    const Tensor2 H = seeded_random(n, c, r.next());
    const Vector B = seeded_uniform_vector(n, r.next(), 0.0, 1.0);
    const Tensor2 Hh = hat_features(H, B);
    const Tensor2 sum = add(matmul_nt(Hh, H), matmul_nt(H, Hh));
    EXPECT_LT(max_abs_diff(sum, boundary_reweight_dense(similarity(H), B)), 1e-10) << s;
  }
}

TEST(Factorization, PermutationEquivariance) {
  const auto in = random_instance(12);
  const std::size_t n = in.H.rows();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  SplitMix64 r(5);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[r.below(i)]);
  Tensor2 Hp(n, in.H.cols());
  Vector Bp(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < in.H.cols(); ++k) Hp(i, k) = in.H(perm[i], k);
    Bp[i] = in.B[perm[i]];
  }
  const Tensor2 A = boundary_reweight_dense(similarity(in.H), in.B);
  const Tensor2 Ap = boundary_reweight_dense(similarity(Hp), Bp);
  const Vector d = degree_factorized(in.H, hat_features(in.H, in.B));
  const Vector dp = degree_factorized(Hp, hat_features(Hp, Bp));
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(dp[i], d[perm[i]], 1e-12 * std::abs(d[perm[i]]) + 1e-12);
    for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(Ap(i, j), A(perm[i], perm[j]));
  }
}

TEST(Embedding, IdentityAndBiasOnly) {
  FeatureMap x(2, 1, 2, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(embed(x, {Tensor2::identity(2), Vector(2)}), reshape_hw_to_nodes(x));
  EXPECT_EQ(embed(x, {Tensor2::identity(2), Vector(2)}), kH);
  EXPECT_EQ(embed(x, {Tensor2(2, 3), Vector{1, -2, 3}}), Tensor2::from_rows({{1, -2, 3}, {1, -2, 3}}));
}
