#pragma once

#include "augca/domain.hpp"
#include "augca/encoder.hpp"
#include "augca/losses.hpp"
#include "augca/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace augca {

struct TrainConfig {
  int batch_size = 128;
  int epochs = 500;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-6;
  double K = 2.0;
  double alpha = 1.0;
  double temperature = 0.5;
  int k = 16;
  std::uint64_t seed = 1;
  Method method = Method::AcaFull;
  bool normalize = true;
  double divergence_guard = 1e12;

  void validate() const {
    if (batch_size < 2) throw ValidationError("train: batch_size must be >= 2");
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (!(K > 0.0)) throw ValidationError("train: K must be > 0");
    if (alpha < 0.0) throw ValidationError("train: alpha must be >= 0");
    if (k < 1) throw ValidationError("train: k must be >= 1");
    if (!(temperature > 0.0)) throw ValidationError("train: temperature must be > 0");
  }

  nlohmann::json to_json() const {
    return {{"batch_size", batch_size},
            {"epochs", epochs},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"weight_decay", weight_decay},
            {"K", K},
            {"alpha", alpha},
            {"temperature", temperature},
            {"k", k},
            {"seed", seed},
            {"method", to_string(method)},
            {"normalize", normalize},
            {"divergence_guard", divergence_guard}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.K = j.value("K", c.K);
    c.alpha = j.value("alpha", c.alpha);
    c.temperature = j.value("temperature", c.temperature);
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
    if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
    c.normalize = j.value("normalize", c.normalize);
    c.divergence_guard = j.value("divergence_guard", c.divergence_guard);
    c.validate();
    return c;
  }
};

/// Bias-corrected Adam with plain L2 weight decay folded into the gradient.
struct AdamState {
  Vector m;
  Vector v;
  long t = 0;

  nlohmann::json to_json() const {
    return {{"m", std::vector<double>(m.data(), m.data() + m.size())},
            {"v", std::vector<double>(v.data(), v.data() + v.size())},
            {"t", t}};
  }

  static AdamState from_json(const nlohmann::json& j) {
    AdamState s;
    const auto mv = j.at("m").get<std::vector<double>>();
    const auto vv = j.at("v").get<std::vector<double>>();
    s.m = Eigen::Map<const Vector>(mv.data(), mv.size());
    s.v = Eigen::Map<const Vector>(vv.data(), vv.size());
    s.t = j.at("t").get<long>();
    return s;
  }
};

inline void adam_step(Vector& params, const Vector& grad, AdamState& state,
                      const TrainConfig& cfg) {
  if (state.t == 0) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  Vector g = grad;
  if (cfg.weight_decay != 0.0) g += cfg.weight_decay * params;
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params -= (cfg.learning_rate / bc1) * state.m.cwiseQuotient(
                ((state.v / bc2).cwiseSqrt().array() + cfg.adam_eps).matrix());
}

// ---------------------------------------------------------------------------
// Datasets: something the trainer can draw natural samples and views from.
// ---------------------------------------------------------------------------

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int natural_count() const = 0;
  virtual const std::vector<int>& labels() const = 0;
  virtual SampleBatch naturals(const std::vector<int>& idx) const = 0;
  virtual SampleBatch views(const std::vector<int>& idx, Rng& rng) const = 0;
  /// Non-null when the augmentation distribution is known exactly.
  virtual const AugmentationMatrix* exact() const { return nullptr; }
  virtual SampleBatch all_augmented() const {
    throw ValidationError("dataset: augmented space is not enumerable");
  }
};

/// A finite instance with a known augmentation matrix. Views are multinomial
/// draws from the matching row; table ids address naturals as [0, N) and
/// augmented samples as [N, N+L). Optional coordinates enable feature
/// encoders on the same instance.
class ExactDataset : public Dataset {
 public:
  explicit ExactDataset(AugmentationMatrix a, Matrix natural_features = {},
                        Matrix augmented_features = {})
      : a_(std::move(a)),
        natural_features_(std::move(natural_features)),
        augmented_features_(std::move(augmented_features)) {
    a_.validate();
  }

  int natural_count() const override { return a_.domain.natural_count; }
  const std::vector<int>& labels() const override { return a_.domain.labels; }
  const AugmentationMatrix* exact() const override { return &a_; }

  SampleBatch naturals(const std::vector<int>& idx) const override {
    SampleBatch batch;
    batch.ids.assign(idx.begin(), idx.end());
    if (natural_features_.size() > 0) {
      batch.features.resize(natural_features_.rows(), idx.size());
      for (std::size_t c = 0; c < idx.size(); ++c)
        batch.features.col(c) = natural_features_.col(idx[c]);
    }
    return batch;
  }

  SampleBatch views(const std::vector<int>& idx, Rng& rng) const override {
    SampleBatch batch;
    batch.ids.resize(idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
      const int j = rng.multinomial(a_.p.row(idx[c]).transpose());
      batch.ids[c] = a_.domain.natural_count + j;
    }
    if (augmented_features_.size() > 0) {
      batch.features.resize(augmented_features_.rows(), idx.size());
      for (std::size_t c = 0; c < idx.size(); ++c)
        batch.features.col(c) =
            augmented_features_.col(batch.ids[c] - a_.domain.natural_count);
    }
    return batch;
  }

  SampleBatch all_augmented() const override {
    SampleBatch batch;
    batch.ids.resize(a_.domain.augmented_count);
    std::iota(batch.ids.begin(), batch.ids.end(), a_.domain.natural_count);
    if (augmented_features_.size() > 0) batch.features = augmented_features_;
    return batch;
  }

  SampleBatch all_naturals() const {
    std::vector<int> idx(a_.domain.natural_count);
    std::iota(idx.begin(), idx.end(), 0);
    return naturals(idx);
  }

 private:
  AugmentationMatrix a_;
  Matrix natural_features_;
  Matrix augmented_features_;
};

/// 2-D points with additive Gaussian noise as the augmentation; views are
/// fresh draws, so the augmented space is continuous and not enumerable.
class GaussianPointDataset : public Dataset {
 public:
  GaussianPointDataset(Matrix points, std::vector<int> labels, double noise_var)
      : points_(std::move(points)), labels_(std::move(labels)), noise_std_(std::sqrt(noise_var)) {
    if (!(noise_var > 0.0)) throw ValidationError("gaussian dataset: noise variance must be > 0");
  }

  int natural_count() const override { return static_cast<int>(points_.cols()); }
  const std::vector<int>& labels() const override { return labels_; }

  SampleBatch naturals(const std::vector<int>& idx) const override {
    SampleBatch batch;
    batch.features.resize(points_.rows(), idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) batch.features.col(c) = points_.col(idx[c]);
    return batch;
  }

  SampleBatch views(const std::vector<int>& idx, Rng& rng) const override {
    SampleBatch batch;
    batch.features.resize(points_.rows(), idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
      for (int r = 0; r < points_.rows(); ++r)
        batch.features(r, c) = points_(r, idx[c]) + rng.normal(0.0, noise_std_);
    }
    return batch;
  }

 private:
  Matrix points_;
  std::vector<int> labels_;
  double noise_std_;
};

// ---------------------------------------------------------------------------
// Batch sampling and the training loop.
// ---------------------------------------------------------------------------

struct BatchDraw {
  std::vector<int> natural_indices;
  BatchInputs inputs;
};

/// Draws B distinct naturals uniformly, then two independent views of each
/// (view 1 of sample i before view 2 of sample i, in batch order).
inline BatchDraw sample_batch(const Dataset& data, int b, Rng& rng) {
  const int n = data.natural_count();
  if (n < 1) throw ValidationError("sample_batch: dataset is empty");
  if (b > n) throw ValidationError("sample_batch: batch size exceeds the number of naturals");
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < b; ++i) {
    const int j = i + static_cast<int>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  BatchDraw draw;
  draw.natural_indices.assign(pool.begin(), pool.begin() + b);
  draw.inputs.naturals = data.naturals(draw.natural_indices);
  Matrix v1_features, v2_features;
  SampleBatch& v1 = draw.inputs.view1;
  SampleBatch& v2 = draw.inputs.view2;
  // Interleave the per-sample draws: x_i^(1) then x_i^(2).
  for (int i = 0; i < b; ++i) {
    const std::vector<int> one{draw.natural_indices[i]};
    const SampleBatch a = data.views(one, rng);
    const SampleBatch c = data.views(one, rng);
    if (!a.ids.empty()) {
      v1.ids.push_back(a.ids[0]);
      v2.ids.push_back(c.ids[0]);
    }
    if (a.features.size() > 0) {
      if (v1_features.size() == 0) {
        v1_features.resize(a.features.rows(), b);
        v2_features.resize(a.features.rows(), b);
      }
      v1_features.col(i) = a.features.col(0);
      v2_features.col(i) = c.features.col(0);
    }
  }
  v1.features = v1_features;
  v2.features = v2_features;
  return draw;
}

struct TrainLogRow {
  int epoch = 0;
  LossBreakdown mean_loss;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::uint64_t config_hash = 0;
};

struct TrainResult {
  Vector params;
  AdamState adam;
  TrainLog log;
};

inline void guard_finite(double loss, const TrainConfig& cfg, int epoch) {
  if (!std::isfinite(loss) || std::abs(loss) > cfg.divergence_guard)
    throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                           " (loss=" + std::to_string(loss) + ")");
}

/// Algorithm: per epoch, shuffle the naturals, slice minibatches of B (a
/// trailing slice smaller than 2 is merged into the previous one), draw two
/// views per natural, update with Adam on the selected method's batch loss.
/// The population method runs one exact full-gradient step per epoch.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data, const EncoderSpec& spec) {
  cfg.validate();
  spec.validate();
  const int n = data.natural_count();
  if (cfg.method != Method::AcaPcPopulation && cfg.batch_size > n)
    throw ValidationError("train: batch_size exceeds the number of naturals");

  Rng root(cfg.seed);
  Rng init_rng = root.fork(0);
  Rng data_rng = root.fork(1);

  TrainResult result;
  result.params = encoder_init(spec, init_rng);
  result.log.config_hash = fnv1a64(cfg.to_json().dump());

  const AugmentationMatrix* exact = data.exact();
  MarginalWeights mw;
  SampleBatch all_augmented;
  if (cfg.method == Method::AcaPcPopulation) {
    if (!exact)
      throw ValidationError("train: the population method needs an exactly enumerable instance");
    mw = marginals(*exact);
    all_augmented = data.all_augmented();
  }

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    LossBreakdown sum;
    int steps = 0;

    if (cfg.method == Method::AcaPcPopulation) {
      LossGrad lg = aca_pc_population_param_grad(spec, result.params, *exact, mw, all_augmented);
      guard_finite(lg.breakdown.total, cfg, epoch);
      adam_step(result.params, lg.grad, result.adam, cfg);
      sum = lg.breakdown;
      steps = 1;
    } else {
      data_rng.shuffle(perm);
      int pos = 0;
      while (pos < n) {
        int take = std::min(cfg.batch_size, n - pos);
        if (n - pos - take == 1) take += 1;  // avoid a trailing batch of one
        std::vector<int> idx(perm.begin() + pos, perm.begin() + pos + take);
        pos += take;
        BatchInputs inputs;
        if (cfg.method == Method::AcaFull && cfg.alpha != 0.0)
          inputs.naturals = data.naturals(idx);
        inputs.view1 = data.views(idx, data_rng);
        inputs.view2 = data.views(idx, data_rng);
        LossGrad lg = batch_loss_param_grad(spec, result.params, inputs, cfg.method, cfg.K,
                                            cfg.alpha, cfg.temperature);
        guard_finite(lg.breakdown.total, cfg, epoch);
        adam_step(result.params, lg.grad, result.adam, cfg);
        sum.total += lg.breakdown.total;
        sum.align += lg.breakdown.align;
        sum.uniformity += lg.breakdown.uniformity;
        sum.projection += lg.breakdown.projection;
        ++steps;
      }
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.mean_loss = {sum.total / steps, sum.align / steps, sum.uniformity / steps,
                     sum.projection / steps};
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
    result.log.rows.push_back(row);
  }
  return result;
}

inline void save_train_log_csv(const std::filesystem::path& path, const TrainLog& log,
                               std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << "# config_hash=" << log.config_hash << " seed=" << seed << "\n";
  out << "epoch,total,align,uniformity,projection,wall_ms\n";
  for (const auto& row : log.rows) {
    out << row.epoch << "," << format_double(row.mean_loss.total) << ","
        << format_double(row.mean_loss.align) << "," << format_double(row.mean_loss.uniformity)
        << "," << format_double(row.mean_loss.projection) << ","
        << format_double(row.wall_ms) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: {version, spec, flat params, seed} plus optimizer state.
// ---------------------------------------------------------------------------

struct Checkpoint {
  EncoderSpec spec;
  Vector params;
  std::uint64_t seed = 0;
  AdamState adam;
  std::uint64_t config_hash = 0;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["version"] = 1;
  j["spec"] = ckpt.spec.to_json();
  j["params"] = std::vector<double>(ckpt.params.data(), ckpt.params.data() + ckpt.params.size());
  j["seed"] = ckpt.seed;
  j["config_hash"] = ckpt.config_hash;
  if (ckpt.adam.t > 0) j["adam"] = ckpt.adam.to_json();
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << j.dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint is not valid json: " + std::string(e.what()));
  }
  if (j.value("version", 0) != 1) throw ValidationError("checkpoint: unsupported version");
  Checkpoint ckpt;
  ckpt.spec = EncoderSpec::from_json(j.at("spec"));
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<int>(p.size()) != ckpt.spec.param_count())
    throw ValidationError("checkpoint: parameter count does not match the spec");
  ckpt.params = Eigen::Map<const Vector>(p.data(), p.size());
  ckpt.seed = j.value("seed", std::uint64_t{0});
  ckpt.config_hash = j.value("config_hash", std::uint64_t{0});
  if (j.contains("adam")) ckpt.adam = AdamState::from_json(j["adam"]);
  return ckpt;
}

}  // namespace augca
