#pragma once

#include "augca/common.hpp"
#include "augca/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace augca {

inline constexpr double kSphereNormFloor = 1e-12;

enum class EncoderKind { Table, Linear, Mlp };

inline std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::Table: return "table";
    case EncoderKind::Linear: return "linear";
    case EncoderKind::Mlp: return "mlp";
  }
  throw ValidationError("unknown encoder kind");
}

inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "table") return EncoderKind::Table;
  if (s == "linear") return EncoderKind::Linear;
  if (s == "mlp") return EncoderKind::Mlp;
  throw ValidationError("unknown encoder kind: " + s);
}

/// Shape of a parameterized encoder f: sample -> R^k. A table encoder stores
/// one free vector per addressable id (naturals first, then augmented);
/// linear and mlp act on feature vectors. `normalize` projects outputs onto
/// the unit sphere.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::Mlp;
  int input_dim = 0;
  int k = 0;
  std::vector<int> hidden;  // mlp only
  bool normalize = false;
  int table_rows = 0;  // table only: natural_count + augmented_count

  /// Layer widths [input, hidden..., k] for linear/mlp.
  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim);
    if (kind == EncoderKind::Mlp)
      dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(k);
    return dims;
  }

  int param_count() const {
    validate();
    if (kind == EncoderKind::Table) return table_rows * k;
    const auto dims = layer_dims();
    int n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * dims[l] + dims[l + 1];
    return n;
  }

  void validate() const {
    if (k < 1) throw ValidationError("encoder: output dimension k must be >= 1");
    if (kind == EncoderKind::Table) {
      if (table_rows < 1) throw ValidationError("table encoder: needs a finite addressable domain");
    } else {
      if (input_dim < 1) throw ValidationError("encoder: input_dim must be >= 1");
      if (kind == EncoderKind::Mlp) {
        for (int h : hidden)
          if (h < 1) throw ValidationError("mlp encoder: hidden sizes must be >= 1");
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["k"] = k;
    j["normalize"] = normalize;
    if (kind == EncoderKind::Table) {
      j["table_rows"] = table_rows;
    } else {
      j["input_dim"] = input_dim;
      if (kind == EncoderKind::Mlp) j["hidden"] = hidden;
    }
    return j;
  }

  static EncoderSpec from_json(const nlohmann::json& j) {
    EncoderSpec spec;
    spec.kind = encoder_kind_from_string(j.at("kind").get<std::string>());
    spec.k = j.at("k").get<int>();
    spec.normalize = j.value("normalize", false);
    spec.table_rows = j.value("table_rows", 0);
    spec.input_dim = j.value("input_dim", 0);
    if (j.contains("hidden")) spec.hidden = j["hidden"].get<std::vector<int>>();
    spec.validate();
    return spec;
  }
};

/// A batch of encoder inputs: ids for the table kind, a column-per-sample
/// feature matrix for linear/mlp. Datasets fill whichever the encoder needs.
struct SampleBatch {
  std::vector<int> ids;
  Matrix features;  // input_dim x B

  int size() const {
    return ids.empty() ? static_cast<int>(features.cols()) : static_cast<int>(ids.size());
  }
};

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // inputs to each linear layer
  std::vector<Matrix> pre_acts;      // pre-activation z per layer
  Matrix out;                        // k x B, post-normalization
  Vector inv_norm;                   // per-sample 1/|z| when normalizing
};

namespace detail {

inline Eigen::Map<const Matrix> table_view(const EncoderSpec& spec, const Vector& params) {
  return Eigen::Map<const Matrix>(params.data(), spec.k, spec.table_rows);
}

inline Eigen::Map<Matrix> table_view(const EncoderSpec& spec, Vector& params) {
  return Eigen::Map<Matrix>(params.data(), spec.k, spec.table_rows);
}

struct LayerView {
  Eigen::Map<const Matrix> w;
  Eigen::Map<const Vector> b;
};

inline LayerView layer_view(const Vector& params, int& offset, int out_dim, int in_dim) {
  LayerView v{Eigen::Map<const Matrix>(params.data() + offset, out_dim, in_dim),
              Eigen::Map<const Vector>(params.data() + offset + out_dim * in_dim, out_dim)};
  offset += out_dim * in_dim + out_dim;
  return v;
}

}  // namespace detail

/// Deterministic initialization: linear/mlp weights ~ N(0, 1/fan_in) with
/// zero biases; table rows ~ N(0, 0.1^2).
inline Vector encoder_init(const EncoderSpec& spec, Rng& rng) {
  spec.validate();
  Vector params(spec.param_count());
  if (spec.kind == EncoderKind::Table) {
    for (int i = 0; i < params.size(); ++i) params[i] = rng.normal(0.0, 0.1);
    return params;
  }
  const auto dims = spec.layer_dims();
  int offset = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < fan_out * fan_in; ++i) params[offset + i] = rng.normal(0.0, scale);
    offset += fan_out * fan_in;
    for (int i = 0; i < fan_out; ++i) params[offset + i] = 0.0;
    offset += fan_out;
  }
  return params;
}

/// Batched forward pass; returns a k x B matrix (one embedding per column).
inline Matrix encoder_forward(const EncoderSpec& spec, const Vector& params,
                              const SampleBatch& batch, ForwardCache* cache = nullptr) {
  Matrix z;
  if (spec.kind == EncoderKind::Table) {
    const auto table = detail::table_view(spec, params);
    z.resize(spec.k, batch.size());
    for (int c = 0; c < batch.size(); ++c) {
      const int id = batch.ids.at(c);
      if (id < 0 || id >= spec.table_rows)
        throw ValidationError("table encoder: id " + std::to_string(id) + " is out of range");
      z.col(c) = table.col(id);
    }
  } else {
    if (batch.features.rows() != spec.input_dim)
      throw ValidationError("encoder: feature dimension mismatch");
    const auto dims = spec.layer_dims();
    Matrix a = batch.features;
    int offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const auto layer = detail::layer_view(params, offset, dims[l + 1], dims[l]);
      if (cache) cache->layer_inputs.push_back(a);
      z = (layer.w * a).colwise() + layer.b;
      if (cache) cache->pre_acts.push_back(z);
      if (l + 2 < dims.size()) a = z.cwiseMax(0.0);  // ReLU on hidden layers
    }
    if (dims.size() == 1) z = a;  // degenerate, unreachable for valid specs
  }
  if (!spec.normalize) {
    if (cache) cache->out = z;
    return z;
  }
  Vector inv_norm(z.cols());
  for (int c = 0; c < z.cols(); ++c)
    inv_norm[c] = 1.0 / std::max(z.col(c).norm(), kSphereNormFloor);
  Matrix out = z * inv_norm.asDiagonal();
  if (cache) {
    cache->out = out;
    cache->inv_norm = inv_norm;
  }
  return out;
}

/// Accumulates d loss / d params into `grad` given the upstream gradient on
/// the (possibly normalized) outputs. The sphere step contributes the
/// projection Jacobian (I - f f^T) / |z|.
inline void encoder_backward(const EncoderSpec& spec, const Vector& params,
                             const SampleBatch& batch, const ForwardCache& cache,
                             const Matrix& dout, Vector& grad) {
  if (grad.size() != params.size())
    throw ValidationError("encoder_backward: gradient accumulator has wrong size");
  Matrix dz = dout;
  if (spec.normalize) {
    for (int c = 0; c < dz.cols(); ++c) {
      const auto f = cache.out.col(c);
      dz.col(c) = (dout.col(c) - f * f.dot(dout.col(c))) * cache.inv_norm[c];
    }
  }
  if (spec.kind == EncoderKind::Table) {
    Eigen::Map<Matrix> table_grad(grad.data(), spec.k, spec.table_rows);
    for (int c = 0; c < batch.size(); ++c) table_grad.col(batch.ids[c]) += dz.col(c);
    return;
  }
  const auto dims = spec.layer_dims();
  const int layers = static_cast<int>(dims.size()) - 1;
  std::vector<int> offsets(layers);
  {
    int offset = 0;
    for (int l = 0; l < layers; ++l) {
      offsets[l] = offset;
      offset += dims[l + 1] * dims[l] + dims[l + 1];
    }
  }
  for (int l = layers - 1; l >= 0; --l) {
    const int out_dim = dims[l + 1], in_dim = dims[l];
    Eigen::Map<const Matrix> w(params.data() + offsets[l], out_dim, in_dim);
    Eigen::Map<Matrix> dw(grad.data() + offsets[l], out_dim, in_dim);
    Eigen::Map<Vector> db(grad.data() + offsets[l] + out_dim * in_dim, out_dim);
    dw.noalias() += dz * cache.layer_inputs[l].transpose();
    db.noalias() += dz.rowwise().sum();
    if (l > 0) {
      Matrix da = w.transpose() * dz;
      dz = da.cwiseProduct((cache.pre_acts[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
}

}  // namespace augca
