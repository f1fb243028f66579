#pragma once

#include "augca/domain.hpp"
#include "augca/encoder.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace augca {

/// Which objective drives a training run. AcaPcPopulation is the exact
/// full-enumeration variant, only meaningful on instances with an exact
/// augmentation matrix; it exists so optimization can be checked against the
/// spectral optimum.
enum class Method { AcaFull, AcaPc, Spectral, InfoNce, AcaPcPopulation };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::AcaFull: return "aca_full";
    case Method::AcaPc: return "aca_pc";
    case Method::Spectral: return "spectral";
    case Method::InfoNce: return "infonce";
    case Method::AcaPcPopulation: return "aca_pc_population";
  }
  throw ValidationError("unknown method");
}

inline Method method_from_string(const std::string& s) {
  if (s == "aca_full") return Method::AcaFull;
  if (s == "aca_pc") return Method::AcaPc;
  if (s == "spectral") return Method::Spectral;
  if (s == "infonce") return Method::InfoNce;
  if (s == "aca_pc_population") return Method::AcaPcPopulation;
  throw ValidationError("unknown method: " + s);
}

struct LossBreakdown {
  double total = 0.0;
  double align = 0.0;
  double uniformity = 0.0;
  double projection = 0.0;
};

// ---------------------------------------------------------------------------
// Matrix-factorization objective and its exact low-rank optimum.
// ---------------------------------------------------------------------------

/// |A_hat^T A_hat - F F^T|_F^2 with F holding one embedding per row.
inline double mf_loss(const Matrix& a_hat, const Matrix& f) {
  if (f.rows() != a_hat.cols())
    throw ValidationError("mf_loss: F must have one row per augmented sample");
  const Matrix m = a_hat.transpose() * a_hat;
  return (m - f * f.transpose()).squaredNorm();
}

/// Gradient of mf_loss in F: 4 (F F^T - M) F.
inline Matrix mf_loss_grad(const Matrix& a_hat, const Matrix& f) {
  const Matrix m = a_hat.transpose() * a_hat;
  return 4.0 * (f * f.transpose() - m) * f;
}

// ---------------------------------------------------------------------------
// Population (exact enumeration) objectives. Embeddings are passed as
// k x L matrices with one column per augmented sample, matching the encoder
// output layout, and k x N for natural samples.
// ---------------------------------------------------------------------------

/// Exact enumeration of
///   -2 sum_xb p(xb) sum_{x1,x2} p(x1|xb) p(x2|xb) f(x1)^T f(x2)
///   + N sum_{x1,x2} p_A(x1) p_A(x2) (f(x1)^T f(x2))^2.
inline LossBreakdown aca_pc_population_loss(const AugmentationMatrix& a,
                                            const MarginalWeights& mw, const Matrix& f_aug) {
  const int n = a.domain.natural_count;
  const int l = a.domain.augmented_count;
  if (f_aug.cols() != l)
    throw ValidationError("aca_pc_population_loss: need one embedding per augmented sample");
  const Matrix gram = f_aug.transpose() * f_aug;  // f(x1)^T f(x2)
  LossBreakdown out;
  for (int xb = 0; xb < n; ++xb) {
    double term = 0.0;
    for (int x1 = 0; x1 < l; ++x1) {
      if (a.p(xb, x1) == 0.0) continue;
      for (int x2 = 0; x2 < l; ++x2) term += a.p(xb, x1) * a.p(xb, x2) * gram(x1, x2);
    }
    out.align += term;
  }
  out.align *= -2.0 / n;
  for (int x1 = 0; x1 < l; ++x1) {
    for (int x2 = 0; x2 < l; ++x2) {
      const double g = gram(x1, x2);
      out.uniformity += mw.marginal[x1] * mw.marginal[x2] * g * g;
    }
  }
  out.uniformity *= n;
  out.total = out.align + out.uniformity;
  return out;
}

/// Same value through the matrix identities
///   align = -(2/N) |A F|_F^2,  uniformity = (1/N) |(D^{1/2}F)(D^{1/2}F)^T|_F^2
/// (F arranged row-per-sample). Cross-checked against the enumeration in
/// tests; used for gradients.
inline LossBreakdown aca_pc_population_loss_fast(const AugmentationMatrix& a,
                                                 const MarginalWeights& mw,
                                                 const Matrix& f_aug) {
  const double n = a.domain.natural_count;
  const Matrix f_rows = f_aug.transpose();  // L x k
  const Matrix af = a.p * f_rows;           // N x k
  const Matrix g = mw.d.array().sqrt().matrix().asDiagonal() * f_rows;
  LossBreakdown out;
  out.align = -2.0 / n * af.squaredNorm();
  out.uniformity = (g * g.transpose()).squaredNorm() / n;
  out.total = out.align + out.uniformity;
  return out;
}

/// d loss / d f_aug for the population ACA-PC objective (k x L layout).
inline Matrix aca_pc_population_grad(const AugmentationMatrix& a, const MarginalWeights& mw,
                                     const Matrix& f_aug) {
  const double n = a.domain.natural_count;
  const Matrix f_rows = f_aug.transpose();
  const Matrix af = a.p * f_rows;
  Matrix grad_rows = -4.0 / n * a.p.transpose() * af;
  const Vector sqrt_d = mw.d.array().sqrt();
  const Matrix g = sqrt_d.asDiagonal() * f_rows;
  grad_rows.noalias() += 4.0 / n * sqrt_d.asDiagonal() * ((g * g.transpose()) * g);
  return grad_rows.transpose();
}

/// (1/N) sum_xb | f(xb) - sum_x p(x|xb) f(x) |^2.
inline double projection_population_loss(const AugmentationMatrix& a, const Matrix& f_nat,
                                         const Matrix& f_aug) {
  const int n = a.domain.natural_count;
  if (f_nat.cols() != n || f_aug.cols() != a.domain.augmented_count)
    throw ValidationError("projection_population_loss: embedding shape mismatch");
  const Matrix means = f_aug * a.p.transpose();  // k x N
  return (f_nat - means).squaredNorm() / n;
}

inline void projection_population_grad(const AugmentationMatrix& a, const Matrix& f_nat,
                                       const Matrix& f_aug, Matrix& g_nat, Matrix& g_aug) {
  const double n = a.domain.natural_count;
  const Matrix means = f_aug * a.p.transpose();
  const Matrix r = f_nat - means;
  g_nat = 2.0 / n * r;
  g_aug = -2.0 / n * r * a.p;
}

// ---------------------------------------------------------------------------
// Minibatch objectives. All embeddings are k x B, one column per sample.
// ---------------------------------------------------------------------------

/// Batch objective:
///   align      = -(2/B) sum_i f(x_i^1)^T f(x_i^2)
///   uniformity = K/(B(B-1)) sum_{i != j} (f(x_i^1)^T f(x_j^2))^2
///   projection = (1/B) sum_i | f(xb_i) - (f(x_i^1)+f(x_i^2))/2 |^2
///   total      = align + uniformity + alpha * projection
/// Cross pairs use view 1 of i against view 2 of j only. `f_nat` may be
/// empty when alpha == 0.
inline LossBreakdown batch_aca_loss(const Matrix& f_nat, const Matrix& f_v1, const Matrix& f_v2,
                                    double K, double alpha) {
  const int b = static_cast<int>(f_v1.cols());
  if (b < 2) throw ValidationError("batch_aca_loss: uniformity is undefined for B < 2");
  if (f_v2.cols() != b) throw ValidationError("batch_aca_loss: view batches disagree");
  LossBreakdown out;
  out.align = -2.0 / b * f_v1.cwiseProduct(f_v2).sum();
  const Matrix c = f_v1.transpose() * f_v2;
  out.uniformity = K / (static_cast<double>(b) * (b - 1)) *
                   (c.squaredNorm() - c.diagonal().squaredNorm());
  if (alpha != 0.0) {
    if (f_nat.cols() != b) throw ValidationError("batch_aca_loss: natural batch disagrees");
    out.projection = (f_nat - 0.5 * (f_v1 + f_v2)).squaredNorm() / b;
  }
  out.total = out.align + out.uniformity + alpha * out.projection;
  return out;
}

/// Gradients of batch_aca_loss in the three embedding blocks. Accumulators
/// must be pre-sized (g_nat may be empty when alpha == 0).
inline LossBreakdown batch_aca_loss_grad(const Matrix& f_nat, const Matrix& f_v1,
                                         const Matrix& f_v2, double K, double alpha,
                                         Matrix& g_nat, Matrix& g_v1, Matrix& g_v2) {
  const int b = static_cast<int>(f_v1.cols());
  const LossBreakdown out = batch_aca_loss(f_nat, f_v1, f_v2, K, alpha);
  g_v1 = -2.0 / b * f_v2;
  g_v2 = -2.0 / b * f_v1;
  Matrix c = f_v1.transpose() * f_v2;
  c.diagonal().setZero();
  const double lam = 2.0 * K / (static_cast<double>(b) * (b - 1));
  g_v1.noalias() += lam * f_v2 * c.transpose();
  g_v2.noalias() += lam * f_v1 * c;
  if (alpha != 0.0) {
    const Matrix r = f_nat - 0.5 * (f_v1 + f_v2);
    g_nat = 2.0 * alpha / b * r;
    g_v1.noalias() -= alpha / b * r;
    g_v2.noalias() -= alpha / b * r;
  } else {
    g_nat.resize(f_v1.rows(), 0);
  }
  return out;
}

/// Baseline: the batch objective with K = 1 and no projection term.
inline double spectral_batch_loss(const Matrix& f_v1, const Matrix& f_v2) {
  return batch_aca_loss(Matrix(), f_v1, f_v2, 1.0, 0.0).total;
}

inline double spectral_batch_loss_grad(const Matrix& f_v1, const Matrix& f_v2, Matrix& g_v1,
                                       Matrix& g_v2) {
  Matrix g_nat;
  return batch_aca_loss_grad(Matrix(), f_v1, f_v2, 1.0, 0.0, g_nat, g_v1, g_v2).total;
}

/// NT-Xent over the 2B views with the other view of the same natural sample
/// as the positive; similarities are inner products scaled by 1/temperature
/// (cosine when the encoder normalizes).
inline double infonce_batch_loss(const Matrix& f_v1, const Matrix& f_v2, double temperature) {
  if (temperature <= 0.0) throw ValidationError("infonce_batch_loss: temperature must be > 0");
  const int b = static_cast<int>(f_v1.cols());
  if (b < 2 || f_v2.cols() != b)
    throw ValidationError("infonce_batch_loss: need two views of B >= 2 samples");
  Matrix z(f_v1.rows(), 2 * b);
  z.leftCols(b) = f_v1;
  z.rightCols(b) = f_v2;
  const Matrix s = z.transpose() * z / temperature;
  const int m = 2 * b;
  double loss = 0.0;
  for (int u = 0; u < m; ++u) {
    const int pos = u < b ? u + b : u - b;
    double row_max = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < m; ++v)
      if (v != u) row_max = std::max(row_max, s(u, v));
    double denom = 0.0;
    for (int v = 0; v < m; ++v)
      if (v != u) denom += std::exp(s(u, v) - row_max);
    loss += -(s(u, pos) - row_max) + std::log(denom);
  }
  return loss / m;
}

inline double infonce_batch_loss_grad(const Matrix& f_v1, const Matrix& f_v2, double temperature,
                                      Matrix& g_v1, Matrix& g_v2) {
  if (temperature <= 0.0) throw ValidationError("infonce_batch_loss: temperature must be > 0");
  const int b = static_cast<int>(f_v1.cols());
  if (b < 2 || f_v2.cols() != b)
    throw ValidationError("infonce_batch_loss: need two views of B >= 2 samples");
  Matrix z(f_v1.rows(), 2 * b);
  z.leftCols(b) = f_v1;
  z.rightCols(b) = f_v2;
  const Matrix s = z.transpose() * z / temperature;
  const int m = 2 * b;
  Matrix ds = Matrix::Zero(m, m);
  double loss = 0.0;
  for (int u = 0; u < m; ++u) {
    const int pos = u < b ? u + b : u - b;
    double row_max = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < m; ++v)
      if (v != u) row_max = std::max(row_max, s(u, v));
    double denom = 0.0;
    for (int v = 0; v < m; ++v)
      if (v != u) denom += std::exp(s(u, v) - row_max);
    loss += -(s(u, pos) - row_max) + std::log(denom);
    for (int v = 0; v < m; ++v) {
      if (v == u) continue;
      ds(u, v) = (std::exp(s(u, v) - row_max) / denom - (v == pos ? 1.0 : 0.0)) / m;
    }
  }
  const Matrix dz = z * (ds + ds.transpose()) / temperature;
  g_v1 = dz.leftCols(b);
  g_v2 = dz.rightCols(b);
  return loss / m;
}

// ---------------------------------------------------------------------------
// Parameter-level gradients: couple a loss with an encoder's backward pass.
// ---------------------------------------------------------------------------

struct BatchInputs {
  SampleBatch naturals;
  SampleBatch view1;
  SampleBatch view2;
};

struct LossGrad {
  LossBreakdown breakdown;
  Vector grad;
};

/// Loss value and d loss / d params for one minibatch under `method`.
inline LossGrad batch_loss_param_grad(const EncoderSpec& spec, const Vector& params,
                                      const BatchInputs& batch, Method method, double K,
                                      double alpha, double temperature) {
  LossGrad out;
  out.grad = Vector::Zero(params.size());
  ForwardCache cache_v1, cache_v2;
  const Matrix f_v1 = encoder_forward(spec, params, batch.view1, &cache_v1);
  const Matrix f_v2 = encoder_forward(spec, params, batch.view2, &cache_v2);
  Matrix g_v1, g_v2;
  switch (method) {
    case Method::AcaFull:
    case Method::AcaPc: {
      const double eff_alpha = method == Method::AcaPc ? 0.0 : alpha;
      Matrix g_nat;
      if (eff_alpha != 0.0) {
        ForwardCache cache_nat;
        const Matrix f_nat = encoder_forward(spec, params, batch.naturals, &cache_nat);
        out.breakdown =
            batch_aca_loss_grad(f_nat, f_v1, f_v2, K, eff_alpha, g_nat, g_v1, g_v2);
        encoder_backward(spec, params, batch.naturals, cache_nat, g_nat, out.grad);
      } else {
        out.breakdown = batch_aca_loss_grad(Matrix(), f_v1, f_v2, K, 0.0, g_nat, g_v1, g_v2);
      }
      break;
    }
    case Method::Spectral: {
      Matrix g_nat;
      out.breakdown = batch_aca_loss_grad(Matrix(), f_v1, f_v2, 1.0, 0.0, g_nat, g_v1, g_v2);
      break;
    }
    case Method::InfoNce: {
      out.breakdown.total = infonce_batch_loss_grad(f_v1, f_v2, temperature, g_v1, g_v2);
      break;
    }
    case Method::AcaPcPopulation:
      throw ValidationError("batch_loss_param_grad: population method needs the exact instance");
  }
  encoder_backward(spec, params, batch.view1, cache_v1, g_v1, out.grad);
  encoder_backward(spec, params, batch.view2, cache_v2, g_v2, out.grad);
  return out;
}

/// Loss value and parameter gradient of the exact population ACA-PC
/// objective; `all_augmented` must address every augmented sample in order.
inline LossGrad aca_pc_population_param_grad(const EncoderSpec& spec, const Vector& params,
                                             const AugmentationMatrix& a,
                                             const MarginalWeights& mw,
                                             const SampleBatch& all_augmented) {
  LossGrad out;
  out.grad = Vector::Zero(params.size());
  ForwardCache cache;
  const Matrix f_aug = encoder_forward(spec, params, all_augmented, &cache);
  out.breakdown = aca_pc_population_loss_fast(a, mw, f_aug);
  const Matrix g = aca_pc_population_grad(a, mw, f_aug);
  encoder_backward(spec, params, all_augmented, cache, g, out.grad);
  return out;
}

/// Parameter gradient of the exact projection objective.
inline LossGrad projection_population_param_grad(const EncoderSpec& spec, const Vector& params,
                                                 const AugmentationMatrix& a,
                                                 const SampleBatch& all_naturals,
                                                 const SampleBatch& all_augmented) {
  LossGrad out;
  out.grad = Vector::Zero(params.size());
  ForwardCache cache_nat, cache_aug;
  const Matrix f_nat = encoder_forward(spec, params, all_naturals, &cache_nat);
  const Matrix f_aug = encoder_forward(spec, params, all_augmented, &cache_aug);
  out.breakdown.projection = projection_population_loss(a, f_nat, f_aug);
  out.breakdown.total = out.breakdown.projection;
  Matrix g_nat, g_aug;
  projection_population_grad(a, f_nat, f_aug, g_nat, g_aug);
  encoder_backward(spec, params, all_naturals, cache_nat, g_nat, out.grad);
  encoder_backward(spec, params, all_augmented, cache_aug, g_aug, out.grad);
  return out;
}

}  // namespace augca
