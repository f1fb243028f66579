#pragma once

#include "augca/domain.hpp"
#include "augca/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <vector>

namespace augca {

/// Mixture-of-Gaussians generator: c components with means equally spaced on
/// a circle, isotropic covariance scale_i * I, stratified sampling (exactly
/// samples_per_component points per component). Scales are covariance
/// multipliers by default; `scale_is_std` reinterprets them as standard
/// deviations.
struct MixtureConfig {
  int components = 4;
  std::vector<double> weights;  // empty = uniform; recorded, sampling is stratified
  double radius = 2.0;
  double component_scale = 1.0;  // s_i
  double noise_scale = 4.0;      // s_a, the augmentation noise
  bool scale_is_std = false;
  int samples_per_component = 200;
  int draws_per_sample = 2;
  std::uint64_t seed = 1;

  double component_std() const {
    return scale_is_std ? component_scale : std::sqrt(component_scale);
  }
  double noise_var() const { return scale_is_std ? noise_scale * noise_scale : noise_scale; }

  void validate() const {
    if (components < 1) throw ValidationError("mixture: components must be >= 1");
    if (!(component_scale > 0.0) || !(noise_scale > 0.0))
      throw ValidationError("mixture: scales must be > 0");
    if (samples_per_component < 1)
      throw ValidationError("mixture: samples_per_component must be >= 1");
    if (draws_per_sample < 1) throw ValidationError("mixture: draws_per_sample must be >= 1");
    if (!weights.empty()) {
      if (static_cast<int>(weights.size()) != components)
        throw ValidationError("mixture: weights must have one entry per component");
      double s = 0.0;
      for (double w : weights) {
        if (w < 0.0) throw ValidationError("mixture: weights must be nonnegative");
        s += w;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ValidationError("mixture: weights must sum to 1");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"components", components},
                     {"radius", radius},
                     {"component_scale", component_scale},
                     {"noise_scale", noise_scale},
                     {"scale_is_std", scale_is_std},
                     {"samples_per_component", samples_per_component},
                     {"draws_per_sample", draws_per_sample},
                     {"seed", seed}};
    if (!weights.empty()) j["weights"] = weights;
    return j;
  }

  static MixtureConfig from_json(const nlohmann::json& j) {
    MixtureConfig c;
    c.components = j.value("components", c.components);
    if (j.contains("weights")) c.weights = j["weights"].get<std::vector<double>>();
    c.radius = j.value("radius", c.radius);
    c.component_scale = j.value("component_scale", c.component_scale);
    c.noise_scale = j.value("noise_scale", c.noise_scale);
    c.scale_is_std = j.value("scale_is_std", c.scale_is_std);
    c.samples_per_component = j.value("samples_per_component", c.samples_per_component);
    c.draws_per_sample = j.value("draws_per_sample", c.draws_per_sample);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

struct MixtureData {
  Matrix points;  // 2 x N
  std::vector<int> labels;
};

inline MixtureData gen_mixture(const MixtureConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int n = cfg.components * cfg.samples_per_component;
  MixtureData data;
  data.points.resize(2, n);
  data.labels.resize(n);
  const double std_dev = cfg.component_std();
  int col = 0;
  for (int comp = 0; comp < cfg.components; ++comp) {
    const double angle = 2.0 * M_PI * comp / cfg.components;
    const double mx = cfg.radius * std::cos(angle);
    const double my = cfg.radius * std::sin(angle);
    for (int s = 0; s < cfg.samples_per_component; ++s, ++col) {
      data.points(0, col) = mx + std_dev * rng.normal();
      data.points(1, col) = my + std_dev * rng.normal();
      data.labels[col] = comp;
    }
  }
  return data;
}

struct AugmentedDraws {
  Matrix outcomes;  // 2 x (N * draws)
  std::vector<int> parent;
};

/// Each outcome is parent + xi with xi ~ N(0, noise_var * I).
inline AugmentedDraws augment_gaussian(const Matrix& points, double noise_var, int draws,
                                       std::uint64_t seed) {
  if (draws < 1) throw ValidationError("augment_gaussian: draws must be >= 1");
  if (!(noise_var >= 0.0)) throw ValidationError("augment_gaussian: negative noise variance");
  Rng rng(seed);
  const int n = static_cast<int>(points.cols());
  const double std_dev = std::sqrt(noise_var);
  AugmentedDraws out;
  out.outcomes.resize(points.rows(), n * draws);
  out.parent.resize(n * draws);
  int col = 0;
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < draws; ++d, ++col) {
      for (int r = 0; r < points.rows(); ++r)
        out.outcomes(r, col) = points(r, i) + std_dev * rng.normal();
      out.parent[col] = i;
    }
  }
  return out;
}

/// Density-weighted empirical matrix over the observed outcomes, the way the
/// pilot builds it: weight exp(-|x - xb|^2 / (2 s_a)) row-normalized.
inline EmpiricalMatrix gaussian_empirical_matrix(const Matrix& points,
                                                 const AugmentedDraws& draws, double noise_var,
                                                 std::vector<int> labels = {}) {
  std::vector<EmpiricalDraw> list;
  list.reserve(draws.parent.size());
  for (std::size_t i = 0; i < draws.parent.size(); ++i)
    list.push_back({draws.parent[i], draws.outcomes.col(static_cast<int>(i))});
  const double inv = 1.0 / (2.0 * noise_var);
  EmpiricalMatrix em = build_empirical_matrix(
      list, static_cast<int>(points.cols()), [&](int natural_id, const Vector& outcome) {
        return std::exp(-(outcome - points.col(natural_id)).squaredNorm() * inv);
      });
  em.a.domain.labels = std::move(labels);
  em.a.domain.validate();
  return em;
}

/// Random row-stochastic matrix for property tests. `sparsity` in [0, 1]
/// thins each row's support: entries survive with probability 1 - sparsity
/// (at least one per row), so sparsity = 0 is dense and sparsity = 1 gives
/// point-mass rows.
inline AugmentationMatrix gen_random_instance(int n, int l, double sparsity,
                                              std::uint64_t seed) {
  if (n < 1 || l < 1) throw ValidationError("gen_random_instance: n and l must be >= 1");
  if (sparsity < 0.0 || sparsity > 1.0)
    throw ValidationError("gen_random_instance: sparsity must be in [0, 1]");
  Rng rng(seed);
  AugmentationMatrix a;
  a.domain.natural_count = n;
  a.domain.augmented_count = l;
  a.p = Matrix::Zero(n, l);
  for (int i = 0; i < n; ++i) {
    bool any = false;
    for (int j = 0; j < l; ++j) {
      if (rng.uniform() >= sparsity) {
        a.p(i, j) = rng.uniform();
        any = any || a.p(i, j) > 0.0;
      }
    }
    if (!any) a.p(i, static_cast<int>(rng.uniform_index(l))) = 1.0;
    a.p.row(i) /= a.p.row(i).sum();
  }
  return a;
}

}  // namespace augca
