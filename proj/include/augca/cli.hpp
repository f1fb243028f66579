#pragma once

#include "augca/domain.hpp"
#include "augca/eval.hpp"
#include "augca/losses.hpp"
#include "augca/spectral.hpp"
#include "augca/synthetic.hpp"
#include "augca/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace augca {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config plumbing: defaults <- config file <- --set overrides, hashed.
// ---------------------------------------------------------------------------

inline void deep_merge(json& base, const json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

/// Applies one "dotted.path=value" override; the value is parsed as JSON and
/// falls back to a plain string.
inline void apply_override(json& config, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ValidationError("--set expects key=value, got: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ValidationError("--set has an empty path segment: " + kv);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline json load_config(const std::string& path, json defaults,
                        const std::vector<std::string>& overrides) {
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json file_config;
    try {
      in >> file_config;
    } catch (const json::exception& e) {
      throw ValidationError("config is not valid json: " + std::string(e.what()));
    }
    deep_merge(defaults, file_config);
  }
  for (const auto& kv : overrides) apply_override(defaults, kv);
  return defaults;
}

inline std::uint64_t config_hash(const json& config) { return fnv1a64(config.dump()); }

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  return out;
}

// Derived seeds for the pilot, exposed so a train+eval pipeline can
// reproduce any single pilot run.
inline std::uint64_t pilot_mixture_seed(std::uint64_t seed, int seed_index) {
  return mix_seed(seed, 0x6d697800u + static_cast<std::uint64_t>(seed_index));
}
inline std::uint64_t pilot_split_seed(std::uint64_t seed, int seed_index) {
  return mix_seed(seed, 0x73706c00u + static_cast<std::uint64_t>(seed_index));
}
inline std::uint64_t pilot_run_seed(std::uint64_t seed, int seed_index, const std::string& method,
                                    int k) {
  return mix_seed(mix_seed(seed, fnv1a64(method) + static_cast<std::uint64_t>(k)),
                  0x72756e00u + static_cast<std::uint64_t>(seed_index));
}
inline std::uint64_t augmentation_seed(std::uint64_t mixture_seed) {
  return mix_seed(mixture_seed, 0x61756700u);
}

// ---------------------------------------------------------------------------
// Subcommand defaults.
// ---------------------------------------------------------------------------

inline json default_gen_config() {
  return json{{"seed", 1}, {"mixture", MixtureConfig{}.to_json()}};
}

inline json default_train_config() {
  json train = TrainConfig{}.to_json();
  return json{{"seed", 1},
              {"dataset", {{"type", "mixture"}, {"mixture", MixtureConfig{}.to_json()}}},
              {"encoder", {{"kind", "mlp"}, {"hidden", {64, 64}}}},
              {"train", train}};
}

inline json default_eval_config() {
  return json{{"seed", 1},
              {"checkpoint", ""},
              {"dataset", {{"type", "mixture"}, {"mixture", MixtureConfig{}.to_json()}}},
              {"eval", {{"knn_k", 5}, {"train_fraction", 0.8}, {"probe_l2", 1e-4},
                        {"probe_max_iters", 500}, {"probe_tol", 1e-6}}}};
}

inline json default_oracle_config() {
  return json{{"seed", 1},      {"instances", 100},     {"max_n", 12},
              {"max_l", 36},    {"min_n", 2},           {"min_l", 2},
              {"theta_samples", 20}, {"hellinger_pairs", 1000},
              {"corrupt", 0.0}, {"matrix", ""},         {"k", 0}};
}

inline json default_pilot_config() {
  json mixture = MixtureConfig{}.to_json();
  json train = TrainConfig{}.to_json();
  train.erase("K");      // pilot default: K = N, resolved at run time
  train.erase("seed");   // derived per run
  train.erase("method");
  train.erase("k");
  train["epochs"] = 100;
  return json{{"seed", 1},
              {"n_seeds", 5},
              {"k_sweep", {4, 8, 16, 32, 64, 128, 200}},
              {"methods", {"aca_full", "aca_pc", "spectral", "infonce"}},
              {"include_af", true},
              {"mixture", mixture},
              {"train", train},
              {"encoder", {{"hidden", {64, 64}}}},
              {"eval", {{"knn_k", 5}, {"train_fraction", 0.8}}},
              {"hist_bins", 50},
              {"hist_pairs_per_side", 1000},
              {"threads", 1}};
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

inline void cmd_gen(const json& config, const fs::path& out_dir) {
  json mixture_json = config.at("mixture");
  if (!mixture_json.contains("seed")) mixture_json["seed"] = config.at("seed");
  const MixtureConfig mixture = MixtureConfig::from_json(mixture_json);
  const std::uint64_t hash = config_hash(config);

  const MixtureData data = gen_mixture(mixture);
  const AugmentedDraws draws = augment_gaussian(data.points, mixture.noise_var(),
                                                mixture.draws_per_sample,
                                                augmentation_seed(mixture.seed));
  fs::create_directories(out_dir);
  {
    auto out = open_output(out_dir / "points.csv");
    out << "# config_hash=" << hash << " seed=" << mixture.seed << "\n";
    out << "x,y,label\n";
    for (int i = 0; i < data.points.cols(); ++i)
      out << format_double(data.points(0, i)) << "," << format_double(data.points(1, i)) << ","
          << data.labels[i] << "\n";
  }
  {
    auto out = open_output(out_dir / "outcomes.csv");
    out << "# config_hash=" << hash << " seed=" << mixture.seed << "\n";
    out << "parent,x,y\n";
    for (int i = 0; i < draws.outcomes.cols(); ++i)
      out << draws.parent[i] << "," << format_double(draws.outcomes(0, i)) << ","
          << format_double(draws.outcomes(1, i)) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Dataset construction shared by train/eval.
// ---------------------------------------------------------------------------

inline std::unique_ptr<Dataset> make_dataset(const json& dataset_json, std::uint64_t seed) {
  const std::string type = dataset_json.at("type").get<std::string>();
  if (type == "mixture") {
    json mixture_json = dataset_json.at("mixture");
    if (!mixture_json.contains("seed")) mixture_json["seed"] = seed;
    const MixtureConfig mixture = MixtureConfig::from_json(mixture_json);
    MixtureData data = gen_mixture(mixture);
    return std::make_unique<GaussianPointDataset>(std::move(data.points), std::move(data.labels),
                                                  mixture.noise_var());
  }
  if (type == "exact") {
    AugmentationMatrix a = load_from_descriptor(dataset_json.at("descriptor").get<std::string>());
    return std::make_unique<ExactDataset>(std::move(a));
  }
  throw ValidationError("dataset: unknown type \"" + type + "\"");
}

inline EncoderSpec make_encoder_spec(const json& encoder_json, const Dataset& data, int k,
                                     bool normalize) {
  EncoderSpec spec;
  const std::string default_kind = data.exact() ? "table" : "mlp";
  spec.kind = encoder_kind_from_string(encoder_json.value("kind", default_kind));
  spec.k = k;
  spec.normalize = normalize;
  if (spec.kind == EncoderKind::Table) {
    const AugmentationMatrix* a = data.exact();
    if (!a) throw ValidationError("table encoder needs an exactly enumerable dataset");
    spec.table_rows = a->domain.natural_count + a->domain.augmented_count;
  } else {
    spec.input_dim = encoder_json.value("input_dim", 2);
    if (spec.kind == EncoderKind::Mlp)
      spec.hidden = encoder_json.value("hidden", std::vector<int>{64, 64});
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline void cmd_train(const json& config, const fs::path& out_dir) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  json train_json = config.at("train");
  if (!train_json.contains("seed")) train_json["seed"] = seed;
  const TrainConfig tc = TrainConfig::from_json(train_json);
  const auto data = make_dataset(config.at("dataset"), seed);
  const EncoderSpec spec =
      make_encoder_spec(config.value("encoder", json::object()), *data, tc.k, tc.normalize);
  const std::uint64_t hash = config_hash(config);

  TrainResult result = train(tc, *data, spec);
  result.log.config_hash = hash;

  fs::create_directories(out_dir);
  save_train_log_csv(out_dir / "train_log.csv", result.log, tc.seed);
  Checkpoint ckpt{spec, result.params, tc.seed, result.adam, hash};
  save_checkpoint(out_dir / "checkpoint.json", ckpt);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline Matrix natural_embeddings(const EncoderSpec& spec, const Vector& params,
                                 const Dataset& data) {
  std::vector<int> idx(data.natural_count());
  std::iota(idx.begin(), idx.end(), 0);
  return encoder_forward(spec, params, data.naturals(idx));
}

inline EvalReport evaluate_embeddings(const Matrix& emb, const std::vector<int>& labels,
                                      const json& eval_json, std::uint64_t split_seed) {
  if (labels.empty()) throw ValidationError("eval: dataset has no labels");
  const Split split = seeded_split(static_cast<int>(labels.size()),
                                   eval_json.value("train_fraction", 0.8), split_seed);
  ProbeOptions probe;
  probe.l2 = eval_json.value("probe_l2", probe.l2);
  probe.max_iters = eval_json.value("probe_max_iters", probe.max_iters);
  probe.tol = eval_json.value("probe_tol", probe.tol);
  EvalReport report;
  const ProbeResult pr = linear_probe(emb, labels, split, probe);
  report.linear_probe_error = pr.error;
  report.per_class_probe_error = pr.per_class_error;
  report.knn_accuracy = knn_classify(emb, labels, split, eval_json.value("knn_k", 5));
  report.seed = split_seed;
  return report;
}

inline void cmd_eval(const json& config, const fs::path& out_dir) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const std::string ckpt_path = config.at("checkpoint").get<std::string>();
  if (ckpt_path.empty()) throw ValidationError("eval: config needs a checkpoint path");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto data = make_dataset(config.at("dataset"), seed);
  const json eval_json = config.value("eval", json::object());
  const std::uint64_t split_seed = eval_json.contains("split_seed")
                                       ? eval_json["split_seed"].get<std::uint64_t>()
                                       : mix_seed(seed, 0x65766100u);
  const Matrix emb = natural_embeddings(ckpt.spec, ckpt.params, *data);
  EvalReport report = evaluate_embeddings(emb, data->labels(), eval_json, split_seed);
  report.config_hash = config_hash(config);
  fs::create_directories(out_dir);
  auto out = open_output(out_dir / "eval_report.json");
  out << report.to_json().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

struct OracleOutcome {
  bool pass = true;
  json report;
};

inline OracleOutcome run_oracle_suite(const json& config) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const int instances = config.value("instances", 100);
  const int min_n = config.value("min_n", 2), max_n = config.value("max_n", 12);
  const int min_l = config.value("min_l", 2), max_l = config.value("max_l", 36);
  const int theta_samples = config.value("theta_samples", 20);
  const double corrupt = config.value("corrupt", 0.0);

  constexpr double kTheoremTol = 1e-7;
  constexpr double kLemmaTol = 1e-8;
  constexpr double kSigmaTol = 1e-8;

  OracleOutcome outcome;
  double theorem1_max = 0.0, theorem2_max = 0.0, sigma1_max = 0.0;
  double lemma_spread_max = 0.0, lemma_const_err_max = 0.0;
  int eq6_violations = 0, hellinger_violations = 0;
  Vector first_sigma;
  int first_k = 0;

  std::vector<AugmentationMatrix> inputs;
  const std::string matrix_path = config.value("matrix", std::string());
  if (!matrix_path.empty()) inputs.push_back(load_from_descriptor(matrix_path));
  Rng rng(mix_seed(seed, 0x6f726100u));
  for (int i = static_cast<int>(inputs.size()); i < instances; ++i) {
    const int n = min_n + static_cast<int>(rng.uniform_index(max_n - min_n + 1));
    const int l = min_l + static_cast<int>(rng.uniform_index(max_l - min_l + 1));
    inputs.push_back(gen_random_instance(n, l, rng.uniform(0.0, 0.8), rng.next_u64()));
  }

  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    AugmentationMatrix a = inputs[idx];
    const MarginalWeights mw = marginals(a);
    const NormalizedFeature nf = normalize(a, mw);
    const SpectralDecomposition dec = decompose(nf);
    if (first_sigma.size() == 0) {
      first_sigma = dec.sigma;
      first_k = dec.rank;
    }
    sigma1_max = std::max(sigma1_max, std::abs(dec.sigma[0] - 1.0));

    // Negative control: perturb the matrix used on the distance side only.
    AugmentationMatrix a_check = a;
    MarginalWeights mw_check = mw;
    if (corrupt > 0.0 && idx == 0) {
      a_check.p(0, 0) += corrupt;
      a_check.p.row(0) /= a_check.p.row(0).sum();
      mw_check = marginals(a_check);
    }

    try {
      for (int k = 1; k <= dec.rank; ++k) {
        const BoundReport t1 = theorem1_check(a_check, mw_check, nf, dec, k);
        theorem1_max = std::max({theorem1_max, t1.max_lower_violation, t1.max_upper_violation});
        const BoundReport t2 = theorem2_check(a_check, mw_check, dec, k);
        theorem2_max = std::max({theorem2_max, t2.max_lower_violation, t2.max_upper_violation});
      }
    } catch (const PropertyViolation&) {
      ++eq6_violations;
    }

    // Lemma 1 constancy: mf(A_hat, sqrt(D) f) - N * L_ACA-PC(f) is the same
    // for every encoder, and equals |A_hat^T A_hat|_F^2.
    {
      const int k = std::max(1, std::min(3, dec.rank));
      const double expected = (nf.a_hat.transpose() * nf.a_hat).squaredNorm();
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int t = 0; t < theta_samples; ++t) {
        Matrix f_aug(k, a.domain.augmented_count);
        for (int r = 0; r < f_aug.rows(); ++r)
          for (int c = 0; c < f_aug.cols(); ++c) f_aug(r, c) = rng.normal();
        Matrix f_rows(nf.a_hat.cols(), k);
        for (int c = 0; c < f_rows.rows(); ++c)
          f_rows.row(c) = std::sqrt(nf.d[c]) * f_aug.col(nf.column_map[c]).transpose();
        const double mf = mf_loss(nf.a_hat, f_rows);
        const double pc = aca_pc_population_loss(a, mw, f_aug).total;
        const double diff = mf - a.domain.natural_count * pc;
        lo = std::min(lo, diff);
        hi = std::max(hi, diff);
        lemma_const_err_max =
            std::max(lemma_const_err_max, std::abs(diff - expected) / std::max(1.0, expected));
      }
      lemma_spread_max = std::max(lemma_spread_max, (hi - lo) / std::max(1.0, std::abs(hi)));
    }

    // Overlap distance contract on random row pairs.
    for (int t = 0; t < 8; ++t) {
      const int r1 = static_cast<int>(rng.uniform_index(a.domain.natural_count));
      const int r2 = static_cast<int>(rng.uniform_index(a.domain.natural_count));
      const double h = hellinger_distance_sq(a, r1, r2);
      if (h < -1e-12 || h > 2.0 + 1e-12) ++hellinger_violations;
    }
  }

  outcome.pass = theorem1_max <= kTheoremTol && theorem2_max <= kTheoremTol &&
                 sigma1_max <= kSigmaTol && lemma_spread_max <= kLemmaTol &&
                 lemma_const_err_max <= 1e-6 && eq6_violations == 0 && hellinger_violations == 0;
  outcome.report = json{{"pass", outcome.pass},
                        {"instances", inputs.size()},
                        {"theorem1_max_violation", theorem1_max},
                        {"theorem2_max_violation", theorem2_max},
                        {"sigma1_max_error", sigma1_max},
                        {"lemma1_max_relative_spread", lemma_spread_max},
                        {"lemma1_max_constant_error", lemma_const_err_max},
                        {"eq6_violations", eq6_violations},
                        {"hellinger_range_violations", hellinger_violations},
                        {"singular_values", std::vector<double>(first_sigma.data(),
                                                                first_sigma.data() + first_sigma.size())},
                        {"k", first_k},
                        {"config_hash", config_hash(config)},
                        {"seed", seed}};
  return outcome;
}

inline bool cmd_oracle(const json& config, const fs::path& out_dir) {
  const OracleOutcome outcome = run_oracle_suite(config);
  fs::create_directories(out_dir);
  auto out = open_output(out_dir / "oracle_report.json");
  out << outcome.report.dump(2) << "\n";
  return outcome.pass;
}

// ---------------------------------------------------------------------------
// pilot
// ---------------------------------------------------------------------------

struct PilotRow {
  std::string method;
  int k = 0;
  int seed_index = 0;
  double probe_error = 0.0;
  double knn_accuracy = 0.0;
};

struct PilotSeedData {
  std::shared_ptr<GaussianPointDataset> dataset;
  Matrix points;
  std::vector<int> labels;
  double noise_var = 0.0;
};

inline void cmd_pilot(const json& config, const fs::path& out_dir, bool dry_run) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const int n_seeds = config.at("n_seeds").get<int>();
  const std::vector<int> k_sweep = config.at("k_sweep").get<std::vector<int>>();
  const std::vector<std::string> methods =
      config.at("methods").get<std::vector<std::string>>();
  const bool include_af = config.value("include_af", true);
  const json train_json = config.at("train");
  const json encoder_json = config.value("encoder", json::object());
  const json eval_json = config.value("eval", json::object());
  const int hist_bins = config.value("hist_bins", 50);
  const int hist_pairs = config.value("hist_pairs_per_side", 1000);
  const int threads = std::max(1, config.value("threads", 1));
  const std::uint64_t hash = config_hash(config);

  const int runs = n_seeds * static_cast<int>(methods.size()) * static_cast<int>(k_sweep.size());
  if (dry_run) {
    std::cout << "pilot plan:\n"
              << "  seeds: " << n_seeds << ", methods: " << methods.size()
              << ", embedding sizes: " << k_sweep.size() << " -> " << runs << " training runs"
              << (include_af ? " + af baseline" : "") << "\n"
              << "  threads: " << threads << "\n"
              << "  out: " << out_dir.string() << " (not written)\n";
    return;
  }
  fs::create_directories(out_dir);

  std::vector<PilotRow> rows;
  std::vector<PilotSeedData> seeds(n_seeds);

  auto means_csv = open_output(out_dir / "distance_means.csv");
  means_csv << "# config_hash=" << hash << " seed=" << seed << "\n";
  means_csv << "seed,post_intra_mean,post_inter_mean,waug_intra_mean,waug_inter_mean\n";

  for (int s = 0; s < n_seeds; ++s) {
    json mixture_json = config.at("mixture");
    mixture_json["seed"] = pilot_mixture_seed(seed, s);
    const MixtureConfig mixture = MixtureConfig::from_json(mixture_json);
    MixtureData data = gen_mixture(mixture);
    const AugmentedDraws draws =
        augment_gaussian(data.points, mixture.noise_var(), mixture.draws_per_sample,
                         augmentation_seed(mixture.seed));
    const EmpiricalMatrix em =
        gaussian_empirical_matrix(data.points, draws, mixture.noise_var(), data.labels);
    const MarginalWeights mw = marginals(em.a);
    const NormalizedFeature nf = normalize(em.a, mw);

    // Pairwise squared distances via Gram matrices:
    //   d_post(x1, x2)   = |col1/sqrt(d1) - col2/sqrt(d2)|^2 of A_hat
    //   d_waug(xb1, xb2) = |row1 - row2|^2 of A_hat
    const Matrix y = nf.a_hat * nf.d.array().rsqrt().matrix().asDiagonal();
    const Matrix g_post = y.transpose() * y;
    const Matrix g_waug = nf.a_hat * nf.a_hat.transpose();

    std::vector<int> aug_labels(nf.column_map.size());
    for (std::size_t j = 0; j < nf.column_map.size(); ++j)
      aug_labels[j] = data.labels[em.parent[nf.column_map[j]]];

    const auto pair_stats = [](const Matrix& gram, const std::vector<int>& labels) {
      double intra = 0.0, inter = 0.0;
      long intra_n = 0, inter_n = 0;
      const int n = static_cast<int>(gram.rows());
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double d = gram(i, i) + gram(j, j) - 2.0 * gram(i, j);
          if (labels[i] == labels[j]) {
            intra += d;
            ++intra_n;
          } else {
            inter += d;
            ++inter_n;
          }
        }
      }
      return std::pair<double, double>{intra / intra_n, inter / inter_n};
    };
    const auto [post_intra, post_inter] = pair_stats(g_post, aug_labels);
    const auto [waug_intra, waug_inter] = pair_stats(g_waug, data.labels);
    means_csv << s << "," << format_double(post_intra) << "," << format_double(post_inter) << ","
              << format_double(waug_intra) << "," << format_double(waug_inter) << "\n";

    // Balanced-pair histograms, mirroring the 1000/1000 protocol.
    Rng hist_rng(mix_seed(mixture.seed, 0x68697374u));
    const auto hist_for = [&](const Matrix& gram, const std::vector<int>& labels) {
      const auto pairs = sample_balanced_pairs(labels, hist_pairs, hist_rng);
      std::vector<PairDistance> dists;
      dists.reserve(pairs.size());
      for (const auto& [i, j] : pairs)
        dists.push_back({gram(i, i) + gram(j, j) - 2.0 * gram(i, j), labels[i] == labels[j]});
      return distance_histogram(dists, hist_bins);
    };
    save_histogram_csv(out_dir / ("hist_post_seed" + std::to_string(s) + ".csv"),
                       hist_for(g_post, aug_labels), hash, mixture.seed);
    save_histogram_csv(out_dir / ("hist_waug_seed" + std::to_string(s) + ".csv"),
                       hist_for(g_waug, data.labels), hash, mixture.seed);

    if (include_af) {
      // The raw augmentation feature of each natural sample is its row of A.
      const Matrix af = em.a.p.transpose();
      EvalReport report =
          evaluate_embeddings(af, data.labels, eval_json, pilot_split_seed(seed, s));
      rows.push_back({"af", em.a.domain.augmented_count, s, report.linear_probe_error,
                      report.knn_accuracy});
    }

    PilotSeedData& sd = seeds[s];
    sd.points = data.points;
    sd.labels = data.labels;
    sd.noise_var = mixture.noise_var();
    sd.dataset =
        std::make_shared<GaussianPointDataset>(sd.points, sd.labels, sd.noise_var);
  }

  struct RunTask {
    int seed_index;
    std::string method;
    int k;
  };
  std::vector<RunTask> tasks;
  for (int s = 0; s < n_seeds; ++s)
    for (const auto& method : methods)
      for (int k : k_sweep) tasks.push_back({s, method, k});

  std::vector<PilotRow> run_rows(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const RunTask& task = tasks[t];
      const PilotSeedData& sd = seeds[task.seed_index];

      json run_train = train_json;
      run_train["seed"] = pilot_run_seed(seed, task.seed_index, task.method, task.k);
      run_train["method"] = task.method;
      run_train["k"] = task.k;
      if (!run_train.contains("K") || run_train["K"].is_null())
        run_train["K"] = static_cast<double>(sd.dataset->natural_count());
      const TrainConfig tc = TrainConfig::from_json(run_train);
      const EncoderSpec spec = make_encoder_spec(encoder_json, *sd.dataset, tc.k, tc.normalize);

      const TrainResult result = train(tc, *sd.dataset, spec);
      const Matrix emb = natural_embeddings(spec, result.params, *sd.dataset);
      const EvalReport report = evaluate_embeddings(emb, sd.labels, eval_json,
                                                    pilot_split_seed(seed, task.seed_index));
      run_rows[t] = {task.method, task.k, task.seed_index, report.linear_probe_error,
                     report.knn_accuracy};
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  rows.insert(rows.end(), run_rows.begin(), run_rows.end());

  std::sort(rows.begin(), rows.end(), [](const PilotRow& a, const PilotRow& b) {
    return std::tie(a.method, a.k, a.seed_index) < std::tie(b.method, b.k, b.seed_index);
  });
  {
    auto out = open_output(out_dir / "results.csv");
    out << "# config_hash=" << hash << " seed=" << seed << "\n";
    out << "method,k,seed,probe_error,knn_acc\n";
    for (const auto& row : rows)
      out << row.method << "," << row.k << "," << row.seed_index << ","
          << format_double(row.probe_error) << "," << format_double(row.knn_accuracy) << "\n";
  }
  {
    // Mean probe error / knn accuracy per (method, k): the plot data behind
    // the embedding-size comparison.
    auto out = open_output(out_dir / "probe_vs_k.csv");
    out << "# config_hash=" << hash << " seed=" << seed << "\n";
    out << "method,k,mean_probe_error,mean_knn_acc\n";
    for (std::size_t i = 0; i < rows.size();) {
      std::size_t j = i;
      double err = 0.0, acc = 0.0;
      while (j < rows.size() && rows[j].method == rows[i].method && rows[j].k == rows[i].k) {
        err += rows[j].probe_error;
        acc += rows[j].knn_accuracy;
        ++j;
      }
      out << rows[i].method << "," << rows[i].k << "," << format_double(err / (j - i)) << ","
          << format_double(acc / (j - i)) << "\n";
      i = j;
    }
  }
}

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"augca: augmentation-distribution embeddings with an exact spectral oracle"};
  app.require_subcommand(1);

  struct CommonOpts {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    bool dry_run = false;
  };
  CommonOpts opts;

  const auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", opts.config, "json config file");
    sub->add_option("--set", opts.overrides, "override config values (dotted.path=value)");
    auto* out = sub->add_option("--out", opts.out, "output directory");
    if (needs_out) out->required();
    return sub;
  };

  auto* gen = add_common(app.add_subcommand("gen", "generate the synthetic mixture dataset"), true);
  auto* tr = add_common(app.add_subcommand("train", "train an encoder"), true);
  auto* ev = add_common(app.add_subcommand("eval", "evaluate a checkpoint"), true);
  auto* orc = add_common(
      app.add_subcommand("oracle", "run the spectral property suite and write a report"), true);
  orc->alias("oracle-report");
  auto* pilot = add_common(
      app.add_subcommand("pilot", "run the full synthetic pilot study"), true);
  pilot->add_flag("--dry-run", opts.dry_run, "print the plan and write nothing");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "augca");
  argv.reserve(storage.size());
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      cmd_gen(load_config(opts.config, default_gen_config(), opts.overrides), opts.out);
    } else if (tr->parsed()) {
      cmd_train(load_config(opts.config, default_train_config(), opts.overrides), opts.out);
    } else if (ev->parsed()) {
      cmd_eval(load_config(opts.config, default_eval_config(), opts.overrides), opts.out);
    } else if (orc->parsed()) {
      if (!cmd_oracle(load_config(opts.config, default_oracle_config(), opts.overrides),
                      opts.out))
        return 3;
    } else if (pilot->parsed()) {
      cmd_pilot(load_config(opts.config, default_pilot_config(), opts.overrides), opts.out,
                opts.dry_run);
    }
  } catch (const PropertyViolation& e) {
    std::cerr << "property violation: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace augca
