#include "augca/spectral.hpp"
#include "augca/synthetic.hpp"

#include <gtest/gtest.h>

namespace augca {
namespace {

AugmentationMatrix hand_instance() {
  AugmentationMatrix a;
  a.domain = {2, 3, {}};
  a.p.resize(2, 3);
  a.p << 0.5, 0.5, 0.0, 0.0, 0.5, 0.5;
  return a;
}

struct Prepared {
  AugmentationMatrix a;
  MarginalWeights mw;
  NormalizedFeature nf;
  SpectralDecomposition dec;
};

Prepared prepare(AugmentationMatrix a) {
  Prepared p;
  p.a = std::move(a);
  p.mw = marginals(p.a);
  p.nf = normalize(p.a, p.mw);
  p.dec = decompose(p.nf);
  return p;
}

Matrix random_orthonormal(int k, Rng& rng) {
  Matrix g(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) g(i, j) = rng.normal();
  return Eigen::HouseholderQR<Matrix>(g).householderQ();
}

TEST(Spectral, IdentityHasUnitSpectrum) {
  const Prepared p = prepare(build_exact_matrix(IdentityModel{}, {3, 3, {}}));
  EXPECT_TRUE(p.dec.sigma.isApprox(Vector::Ones(3), 1e-12));
  EXPECT_EQ(p.dec.rank, 3);
}

TEST(Spectral, HandInstanceTopSingularValueIsOne) {
  const Prepared p = prepare(hand_instance());
  EXPECT_NEAR(p.dec.sigma[0], 1.0, 1e-8);
}

TEST(Spectral, ReconstructionAndOrthonormality) {
  const Prepared p = prepare(gen_random_instance(8, 20, 0.3, 11));
  const Matrix rebuilt = p.dec.u * p.dec.sigma.asDiagonal() * p.dec.v.transpose();
  EXPECT_LT((rebuilt - p.nf.a_hat).norm(), 1e-7);
  const int m = static_cast<int>(p.dec.sigma.size());
  EXPECT_LT((p.dec.u.transpose() * p.dec.u - Matrix::Identity(m, m)).norm(), 1e-8);
  EXPECT_LT((p.dec.v.transpose() * p.dec.v - Matrix::Identity(m, m)).norm(), 1e-8);
}

TEST(Spectral, SignConventionIsDeterministic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Prepared p = prepare(gen_random_instance(6, 14, 0.4, seed));
    for (int i = 0; i < p.dec.v.cols(); ++i) {
      for (int r = 0; r < p.dec.v.rows(); ++r) {
        if (std::abs(p.dec.v(r, i)) > 1e-12) {
          EXPECT_GT(p.dec.v(r, i), 0.0);
          break;
        }
      }
    }
  }
}

TEST(Spectral, OracleEmbeddingsOnIdentity) {
  const Prepared p = prepare(build_exact_matrix(IdentityModel{}, {4, 4, {}}));
  const OracleEmbeddings emb = oracle_embeddings(p.dec, p.nf, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      EXPECT_NEAR((emb.f_aug.row(i) - emb.f_aug.row(j)).squaredNorm(), 2.0, 1e-9);
    }
  }
}

TEST(Spectral, OracleEmbeddingsRejectsTooLargeK) {
  const Prepared p = prepare(hand_instance());
  EXPECT_EQ(p.dec.rank, 2);
  try {
    oracle_embeddings(p.dec, p.nf, 3);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("rank=2"), std::string::npos);
  }
}

TEST(Spectral, NaturalEmbeddingIsProjectedAugmentedEmbedding) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Prepared p = prepare(gen_random_instance(7, 15, 0.5, seed));
    for (int k = 1; k <= p.dec.rank; ++k)
      EXPECT_NO_THROW(oracle_embeddings(p.dec, p.nf, k));  // asserts f_nat = A f_aug inside
  }
}

TEST(Spectral, PosteriorDistanceHandValues) {
  const Prepared p = prepare(hand_instance());
  EXPECT_DOUBLE_EQ(posterior_distance_sq(p.a, p.mw, 1, 1), 0.0);
  // Posteriors over naturals: x1 -> [1,0], x2 -> [0.5,0.5], x3 -> [0,1].
  EXPECT_NEAR(posterior_distance_sq(p.a, p.mw, 0, 2), 2.0, 1e-12);
  EXPECT_NEAR(posterior_distance_sq(p.a, p.mw, 0, 1), 0.5, 1e-12);
}

TEST(Spectral, PosteriorDistanceRejectsZeroMarginalColumn) {
  AugmentationMatrix a;
  a.domain = {2, 3, {}};
  a.p.resize(2, 3);
  a.p << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0;
  const MarginalWeights mw = marginals(a);
  EXPECT_THROW(posterior_distance_sq(a, mw, 0, 2), ValidationError);
}

TEST(Spectral, WeightedAugDistanceHandValues) {
  const Prepared p = prepare(hand_instance());
  EXPECT_DOUBLE_EQ(weighted_aug_distance_sq(p.a, p.mw, 0, 0), 0.0);
  // (1/2) * (0.25/0.25 + 0 + 0.25/0.25) = 1.
  EXPECT_NEAR(weighted_aug_distance_sq(p.a, p.mw, 0, 1), 1.0, 1e-12);
}

TEST(Spectral, WeightedAugDistanceOnIdentity) {
  // Brute force from the definition and the spectral identity
  // sum_i sigma_i^2 (u_i(x1) - u_i(x2))^2 agree: distinct rows of A = I are
  // at squared distance 2 (each of the two support columns contributes
  // (1/N) * 1 / (1/N) = 1).
  for (int n : {3, 5, 8}) {
    const Prepared p = prepare(build_exact_matrix(IdentityModel{}, {n, n, {}}));
    const double direct = weighted_aug_distance_sq(p.a, p.mw, 0, 1);
    double spectral = 0.0;
    for (int i = 0; i < p.dec.sigma.size(); ++i) {
      const double diff = p.dec.u(0, i) - p.dec.u(1, i);
      spectral += p.dec.sigma[i] * p.dec.sigma[i] * diff * diff;
    }
    EXPECT_NEAR(direct, 2.0, 1e-10);
    EXPECT_NEAR(spectral, direct, 1e-10);
  }
}

TEST(Spectral, HellingerContract) {
  const AugmentationMatrix a = hand_instance();
  EXPECT_DOUBLE_EQ(hellinger_distance_sq(a, 0, 0), 0.0);
  // Cross term sum sqrt(p1 p2) = 0.5, so d^2 = 2 - 2 * 0.5 = 1.
  EXPECT_NEAR(hellinger_distance_sq(a, 0, 1), 1.0, 1e-12);
  EXPECT_NEAR(hellinger_distance_sq(a, 0, 1, /*with_prefactor=*/true), 0.5, 1e-12);

  AugmentationMatrix disjoint;
  disjoint.domain = {2, 4, {}};
  disjoint.p.resize(2, 4);
  disjoint.p << 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.3, 0.7;
  EXPECT_NEAR(hellinger_distance_sq(disjoint, 0, 1), 2.0, 1e-12);
}

TEST(Spectral, TheoremOneExactAtFullRank) {
  const Prepared p = prepare(hand_instance());
  const BoundReport report = theorem1_check(p.a, p.mw, p.nf, p.dec, p.dec.rank);
  EXPECT_LE(report.max_lower_violation, 1e-7);
  EXPECT_LE(report.max_upper_violation, 1e-7);
  for (double gap : report.gaps) EXPECT_NEAR(gap, 0.0, 1e-7);

  // Hand check of the theorem's equality: at full rank the embedding
  // distance reproduces d_post^2(x1, x3) = 2.
  const OracleEmbeddings emb = oracle_embeddings(p.dec, p.nf, p.dec.rank);
  EXPECT_NEAR((emb.f_aug.row(0) - emb.f_aug.row(2)).squaredNorm(), 2.0, 1e-9);
}

TEST(Spectral, TheoremTwoExactAtFullRank) {
  const Prepared p = prepare(hand_instance());
  const BoundReport report = theorem2_check(p.a, p.mw, p.dec, p.dec.rank);
  EXPECT_LE(report.max_lower_violation, 1e-7);
  EXPECT_LE(report.max_upper_violation, 1e-7);
  for (double gap : report.gaps) EXPECT_NEAR(gap, 0.0, 1e-7);
}

TEST(Spectral, TheoremSandwichesOnRandomInstances) {
  Rng rng(404);
  for (int instance = 0; instance < 40; ++instance) {
    const int n = 2 + static_cast<int>(rng.uniform_index(11));
    const int l = 2 + static_cast<int>(rng.uniform_index(35));
    const Prepared p =
        prepare(gen_random_instance(n, l, rng.uniform(0.0, 0.8), rng.next_u64()));
    for (int k = 1; k <= p.dec.rank; ++k) {
      const BoundReport t1 = theorem1_check(p.a, p.mw, p.nf, p.dec, k);
      EXPECT_TRUE(t1.ok(1e-7)) << "theorem 1, n=" << n << " l=" << l << " k=" << k
                               << " lower=" << t1.max_lower_violation
                               << " upper=" << t1.max_upper_violation;
      const BoundReport t2 = theorem2_check(p.a, p.mw, p.dec, k);
      EXPECT_TRUE(t2.ok(1e-7)) << "theorem 2, n=" << n << " l=" << l << " k=" << k;
      if (k == p.dec.rank) {
        EXPECT_LE(std::abs(t1.max_lower_violation), 1e-7);
        for (double gap : t2.gaps) EXPECT_NEAR(gap, 0.0, 1e-7);
      }
    }
  }
}

TEST(Spectral, BoundsCollapseForSamePair) {
  const Prepared p = prepare(gen_random_instance(10, 30, 0.5, 5));
  const BoundReport t1 = theorem1_check(p.a, p.mw, p.nf, p.dec, 1);
  // The first gap entry is the (0, 0) pair: 0 <= 0 <= 0.
  EXPECT_NEAR(t1.gaps.front(), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(posterior_distance_sq(p.a, p.mw, p.nf.column_map[0], p.nf.column_map[0]),
                   0.0);
}

TEST(Spectral, OracleQuantitiesAreRotationInvariant) {
  const Prepared p = prepare(gen_random_instance(9, 22, 0.4, 77));
  const int k = p.dec.rank;
  const OracleEmbeddings emb = oracle_embeddings(p.dec, p.nf, k);
  Rng rng(123);
  const Matrix q = random_orthonormal(k, rng);
  const Matrix rotated = emb.f_aug * q;
  EXPECT_LT((rotated * rotated.transpose() - emb.f_aug * emb.f_aug.transpose()).norm(), 1e-8);
  const Matrix rotated_nat = emb.f_nat * q;
  EXPECT_LT((rotated_nat * rotated_nat.transpose() - emb.f_nat * emb.f_nat.transpose()).norm(),
            1e-8);
}

TEST(Spectral, CorruptedInstanceReportsViolation) {
  Prepared p = prepare(gen_random_instance(8, 16, 0.3, 31));
  // Corrupt the distance side only; the stale decomposition must now violate
  // the sandwich, and the check reports rather than throws.
  AugmentationMatrix corrupted = p.a;
  corrupted.p(0, 0) += 0.4;
  corrupted.p.row(0) /= corrupted.p.row(0).sum();
  const MarginalWeights mw2 = marginals(corrupted);
  // At k = rank the sandwich is an equality, so the stale decomposition must
  // land outside it on some pair.
  const BoundReport t1 = theorem1_check(corrupted, mw2, p.nf, p.dec, p.dec.rank);
  EXPECT_FALSE(t1.ok(1e-7));
}

}  // namespace
}  // namespace augca
