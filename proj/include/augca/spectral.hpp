#pragma once

#include "augca/domain.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace augca {

inline constexpr double kRankTol = 1e-10;

/// Thin SVD of A_hat = U Sigma V^T with a deterministic sign convention:
/// the first entry of each right singular vector whose magnitude exceeds
/// 1e-12 is made positive (u flips with v).
struct SpectralDecomposition {
  Vector sigma;  // min(N, retained) values, descending
  Matrix u;      // natural_count x m
  Matrix v;      // retained x m
  int rank = 0;  // number of sigma above kRankTol

  /// sigma_{k+1} in the paper's 1-based indexing; 0 past the spectrum.
  double sigma_after(int k) const {
    return k < sigma.size() ? sigma[k] : 0.0;
  }
};

inline SpectralDecomposition decompose(const NormalizedFeature& nf) {
  Eigen::BDCSVD<Matrix> svd(nf.a_hat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SpectralDecomposition dec;
  dec.sigma = svd.singularValues();
  dec.u = svd.matrixU();
  dec.v = svd.matrixV();
  for (int i = 0; i < dec.v.cols(); ++i) {
    for (int r = 0; r < dec.v.rows(); ++r) {
      if (std::abs(dec.v(r, i)) > 1e-12) {
        if (dec.v(r, i) < 0.0) {
          dec.v.col(i) = -dec.v.col(i);
          dec.u.col(i) = -dec.u.col(i);
        }
        break;
      }
    }
  }
  dec.rank = 0;
  for (int i = 0; i < dec.sigma.size(); ++i) {
    if (dec.sigma[i] > kRankTol) ++dec.rank;
  }
  return dec;
}

/// Closed-form optimal embeddings (up to an orthonormal gauge, which every
/// consumer must treat as unresolved):
///   f_aug row x  = [sigma_1 v_1(x), ..., sigma_k v_k(x)] / sqrt(d_x)
///   f_nat row xb = [sigma_1^2 u_1(xb), ..., sigma_k^2 u_k(xb)]
/// and f_nat = A f_aug holds exactly; construction asserts it numerically.
struct OracleEmbeddings {
  int k = 0;
  Matrix f_aug;  // retained x k
  Matrix f_nat;  // natural_count x k
};

inline OracleEmbeddings oracle_embeddings(const SpectralDecomposition& dec,
                                          const NormalizedFeature& nf, int k) {
  if (k < 1 || k > dec.rank)
    throw ValidationError("oracle_embeddings: k=" + std::to_string(k) +
                          " must satisfy 1 <= k <= rank=" + std::to_string(dec.rank));
  OracleEmbeddings emb;
  emb.k = k;
  emb.f_aug.resize(nf.a_hat.cols(), k);
  for (int i = 0; i < k; ++i)
    emb.f_aug.col(i) = dec.sigma[i] * dec.v.col(i).array() / nf.d.array().sqrt();
  emb.f_nat.resize(nf.a_hat.rows(), k);
  for (int i = 0; i < k; ++i)
    emb.f_nat.col(i) = dec.sigma[i] * dec.sigma[i] * dec.u.col(i);

  // A restricted to retained columns equals A_hat D^{1/2}.
  const Matrix via_projection =
      nf.a_hat * (nf.d.array().sqrt().matrix().asDiagonal() * emb.f_aug);
  const double gap = (via_projection - emb.f_nat).norm();
  if (!(gap <= 1e-7 * std::max(1.0, emb.f_nat.norm())))
    throw PropertyViolation("oracle_embeddings: direct and projected natural embeddings differ by " +
                            std::to_string(gap));
  return emb;
}

/// Squared distance between posteriors p(xbar|x) = p(x|xbar)/d_x over
/// natural samples (uniform natural prior folded in).
inline double posterior_distance_sq(const AugmentationMatrix& a, const MarginalWeights& mw,
                                    int x1, int x2) {
  if (x1 < 0 || x1 >= a.domain.augmented_count || x2 < 0 || x2 >= a.domain.augmented_count)
    throw ValidationError("posterior_distance_sq: column index out of range");
  if (!(mw.d[x1] > 0.0) || !(mw.d[x2] > 0.0))
    throw ValidationError("posterior_distance_sq: undefined for a zero-marginal column");
  double acc = 0.0;
  for (int i = 0; i < a.domain.natural_count; ++i) {
    const double diff = a.p(i, x1) / mw.d[x1] - a.p(i, x2) / mw.d[x2];
    acc += diff * diff;
  }
  return acc;
}

/// (1/N) sum_x (p(x|xbar1) - p(x|xbar2))^2 / p_A(x), skipping columns with
/// zero marginal (their numerator is identically zero).
inline double weighted_aug_distance_sq(const AugmentationMatrix& a, const MarginalWeights& mw,
                                       int xbar1, int xbar2) {
  if (xbar1 < 0 || xbar1 >= a.domain.natural_count || xbar2 < 0 ||
      xbar2 >= a.domain.natural_count)
    throw ValidationError("weighted_aug_distance_sq: row index out of range");
  double acc = 0.0;
  for (int j = 0; j < a.domain.augmented_count; ++j) {
    if (!(mw.marginal[j] > 0.0)) continue;
    const double diff = a.p(xbar1, j) - a.p(xbar2, j);
    acc += diff * diff / mw.marginal[j];
  }
  return acc / static_cast<double>(a.domain.natural_count);
}

/// Squared Hellinger-style overlap distance between two augmentation rows,
/// sum_x (sqrt p1 - sqrt p2)^2, which lives in [0, 2]: 0 iff the rows match,
/// 2 iff their supports are disjoint. `with_prefactor` divides by N for
/// callers that want the averaged variant.
inline double hellinger_distance_sq(const AugmentationMatrix& a, int xbar1, int xbar2,
                                    bool with_prefactor = false) {
  if (xbar1 < 0 || xbar1 >= a.domain.natural_count || xbar2 < 0 ||
      xbar2 >= a.domain.natural_count)
    throw ValidationError("hellinger_distance_sq: row index out of range");
  double acc = 0.0;
  for (int j = 0; j < a.domain.augmented_count; ++j) {
    const double diff = std::sqrt(a.p(xbar1, j)) - std::sqrt(a.p(xbar2, j));
    acc += diff * diff;
  }
  if (with_prefactor) acc /= static_cast<double>(a.domain.natural_count);
  return acc;
}

/// Result of sweeping one isometry bound over all pairs. Violations are
/// reported, never thrown: a positive value is the worst overshoot of the
/// corresponding inequality. `gaps` holds d^2 - embedding distance^2 for
/// every unordered pair, in row-major pair order.
struct BoundReport {
  int k = 0;
  double slack = 0.0;  // the theorem's additive slack for distinct pairs
  double max_lower_violation = 0.0;
  double max_upper_violation = 0.0;
  std::vector<double> gaps;

  bool ok(double tol = 1e-7) const {
    return max_lower_violation <= tol && max_upper_violation <= tol;
  }
};

/// Sandwich check for posterior distances over every retained augmented pair:
///   d_post^2 - (2 sigma_{k+1}^2 / d_min)(1 - delta) <= |f(x1)-f(x2)|^2 <= d_post^2
inline BoundReport theorem1_check(const AugmentationMatrix& a, const MarginalWeights& mw,
                                  const NormalizedFeature& nf, const SpectralDecomposition& dec,
                                  int k) {
  const OracleEmbeddings emb = oracle_embeddings(dec, nf, k);
  BoundReport report;
  report.k = k;
  const double sig = dec.sigma_after(k);
  const double d_min = nf.d.minCoeff();
  report.slack = 2.0 * sig * sig / d_min;
  const int l = static_cast<int>(nf.column_map.size());
  report.gaps.reserve(static_cast<std::size_t>(l) * (l + 1) / 2);
  for (int i = 0; i < l; ++i) {
    for (int j = i; j < l; ++j) {
      const double d2 = posterior_distance_sq(a, mw, nf.column_map[i], nf.column_map[j]);
      const double e2 = (emb.f_aug.row(i) - emb.f_aug.row(j)).squaredNorm();
      const double allowed = i == j ? 0.0 : report.slack;
      report.max_lower_violation = std::max(report.max_lower_violation, (d2 - allowed) - e2);
      report.max_upper_violation = std::max(report.max_upper_violation, e2 - d2);
      report.gaps.push_back(d2 - e2);
    }
  }
  return report;
}

/// Sandwich check for weighted augmentation distances over natural pairs,
/// with the Sigma_k^{-2} Mahalanobis norm on g(xbar) = [sigma_i^2 u_i(xbar)]:
///   d_waug^2 - 2 sigma_{k+1}^2 (1 - delta) <= |g1-g2|^2_{Sigma_k^{-2}} <= d_waug^2
/// The Mahalanobis form reduces to sum_{i<=k} sigma_i^2 (u_i(x1)-u_i(x2))^2.
inline BoundReport theorem2_check(const AugmentationMatrix& a, const MarginalWeights& mw,
                                  const SpectralDecomposition& dec, int k) {
  if (k < 1 || k > dec.sigma.size())
    throw ValidationError("theorem2_check: k out of range");
  for (int i = 0; i < k; ++i) {
    if (!(dec.sigma[i] > kRankTol))
      throw ValidationError("theorem2_check: sigma_" + std::to_string(i + 1) +
                            " is zero; the Mahalanobis norm is undefined");
  }
  BoundReport report;
  report.k = k;
  const double sig = dec.sigma_after(k);
  report.slack = 2.0 * sig * sig;
  const int n = a.domain.natural_count;
  report.gaps.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double d2 = weighted_aug_distance_sq(a, mw, i, j);
      double e2 = 0.0;
      for (int s = 0; s < k; ++s) {
        const double diff = dec.u(i, s) - dec.u(j, s);
        e2 += dec.sigma[s] * dec.sigma[s] * diff * diff;
      }
      const double allowed = i == j ? 0.0 : report.slack;
      report.max_lower_violation = std::max(report.max_lower_violation, (d2 - allowed) - e2);
      report.max_upper_violation = std::max(report.max_upper_violation, e2 - d2);
      report.gaps.push_back(d2 - e2);
    }
  }
  return report;
}

}  // namespace augca
