#pragma once

#include "augca/common.hpp"
#include "augca/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

namespace augca {

struct Split {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

/// Seeded shuffle split; train gets round(train_fraction * n) samples.
inline Split seeded_split(int n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw ValidationError("split: need at least two samples");
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
    throw ValidationError("split: train fraction must be in (0, 1)");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * n)), 1, n - 1);
  Split split;
  split.train_idx.assign(idx.begin(), idx.begin() + n_train);
  split.test_idx.assign(idx.begin() + n_train, idx.end());
  return split;
}

namespace detail {

inline int count_classes(const std::vector<int>& labels) {
  int c = 0;
  for (int lab : labels) {
    if (lab < 0) throw ValidationError("labels must be nonnegative class ids");
    c = std::max(c, lab + 1);
  }
  return c;
}

/// Mean softmax cross-entropy plus 0.5 * l2 * |W without bias column|^2.
/// x is (k+1) x n with the last row equal to 1.
inline double softmax_objective(const Matrix& w, const Matrix& x, const std::vector<int>& y,
                                double l2, Matrix* grad = nullptr) {
  const int n = static_cast<int>(x.cols());
  Matrix scores = w * x;  // c x n
  double loss = 0.0;
  Matrix probs(scores.rows(), scores.cols());
  for (int i = 0; i < n; ++i) {
    const double m = scores.col(i).maxCoeff();
    const Vector e = (scores.col(i).array() - m).exp();
    const double z = e.sum();
    probs.col(i) = e / z;
    loss += -(scores(y[i], i) - m) + std::log(z);
  }
  loss /= n;
  loss += 0.5 * l2 * w.leftCols(w.cols() - 1).squaredNorm();
  if (grad) {
    Matrix delta = probs;
    for (int i = 0; i < n; ++i) delta(y[i], i) -= 1.0;
    *grad = delta * x.transpose() / n;
    grad->leftCols(w.cols() - 1) += l2 * w.leftCols(w.cols() - 1);
  }
  return loss;
}

}  // namespace detail

struct ProbeOptions {
  double l2 = 1e-4;
  int max_iters = 500;
  double tol = 1e-6;  // stop when the loss decrease falls below this
};

struct ProbeResult {
  double error = 0.0;
  std::vector<double> per_class_error;
};

/// Multinomial logistic regression on frozen embeddings (columns of `emb`),
/// full-batch gradient descent with Armijo backtracking, deterministic.
inline ProbeResult linear_probe(const Matrix& emb, const std::vector<int>& labels,
                                const Split& split, const ProbeOptions& opts = {}) {
  if (static_cast<int>(labels.size()) != emb.cols())
    throw ValidationError("linear_probe: one label per embedding required");
  const int classes = detail::count_classes(labels);
  if (classes < 2) throw ValidationError("linear_probe: need at least two classes");

  const auto gather = [&](const std::vector<int>& idx, Matrix& x, std::vector<int>& y) {
    x.resize(emb.rows() + 1, idx.size());
    y.resize(idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
      x.col(c).head(emb.rows()) = emb.col(idx[c]);
      x(emb.rows(), c) = 1.0;
      y[c] = labels[idx[c]];
    }
  };
  Matrix x_train, x_test;
  std::vector<int> y_train, y_test;
  gather(split.train_idx, x_train, y_train);
  gather(split.test_idx, x_test, y_test);

  Matrix w = Matrix::Zero(classes, emb.rows() + 1);
  Matrix grad;
  double loss = detail::softmax_objective(w, x_train, y_train, opts.l2, &grad);
  double step = 1.0;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double g2 = grad.squaredNorm();
    if (g2 == 0.0) break;
    double next_loss;
    Matrix w_next;
    step *= 2.0;  // allow growth after successful iterations
    for (;;) {
      w_next = w - step * grad;
      next_loss = detail::softmax_objective(w_next, x_train, y_train, opts.l2);
      if (next_loss <= loss - 0.5 * step * g2 || step < 1e-16) break;
      step *= 0.5;
    }
    const double decrease = loss - next_loss;
    w = w_next;
    loss = detail::softmax_objective(w, x_train, y_train, opts.l2, &grad);
    if (decrease < opts.tol) break;
  }

  ProbeResult result;
  result.per_class_error.assign(classes, 0.0);
  std::vector<int> per_class_count(classes, 0);
  const Matrix scores = w * x_test;
  int wrong = 0;
  for (int i = 0; i < scores.cols(); ++i) {
    int best = 0;
    scores.col(i).maxCoeff(&best);
    per_class_count[y_test[i]] += 1;
    if (best != y_test[i]) {
      ++wrong;
      result.per_class_error[y_test[i]] += 1.0;
    }
  }
  for (int c = 0; c < classes; ++c) {
    if (per_class_count[c] > 0) result.per_class_error[c] /= per_class_count[c];
  }
  result.error = static_cast<double>(wrong) / scores.cols();
  return result;
}

/// Euclidean k-nearest-neighbor majority vote. When the vote ties, the tied
/// class with the closest representative wins (distance ties fall back to
/// the lower train index, so the result is deterministic).
inline double knn_classify(const Matrix& emb, const std::vector<int>& labels, const Split& split,
                           int k = 5) {
  if (static_cast<int>(labels.size()) != emb.cols())
    throw ValidationError("knn_classify: one label per embedding required");
  if (k < 1) throw ValidationError("knn_classify: k must be >= 1");
  const int n_train = static_cast<int>(split.train_idx.size());
  if (n_train < k) throw ValidationError("knn_classify: train split smaller than k");
  const int classes = detail::count_classes(labels);

  Matrix train(emb.rows(), n_train);
  for (int c = 0; c < n_train; ++c) train.col(c) = emb.col(split.train_idx[c]);
  const Vector train_sq = train.colwise().squaredNorm();

  int correct = 0;
  std::vector<std::pair<double, int>> order(n_train);
  for (int t : split.test_idx) {
    const Vector q = emb.col(t);
    const Vector dist =
        (train_sq.array() - 2.0 * (train.transpose() * q).array() + q.squaredNorm()).matrix();
    for (int c = 0; c < n_train; ++c) order[c] = {dist[c], c};
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    std::vector<int> votes(classes, 0);
    std::vector<double> best_dist(classes, std::numeric_limits<double>::infinity());
    for (int i = 0; i < k; ++i) {
      const int lab = labels[split.train_idx[order[i].second]];
      votes[lab] += 1;
      best_dist[lab] = std::min(best_dist[lab], order[i].first);
    }
    int winner = -1;
    for (int c = 0; c < classes; ++c) {
      if (votes[c] == 0) continue;
      if (winner < 0 || votes[c] > votes[winner] ||
          (votes[c] == votes[winner] && best_dist[c] < best_dist[winner]))
        winner = c;
    }
    if (winner == labels[t]) ++correct;
  }
  return static_cast<double>(correct) / split.test_idx.size();
}

// ---------------------------------------------------------------------------
// Distance diagnostics.
// ---------------------------------------------------------------------------

struct PairDistance {
  double distance = 0.0;
  bool same_class = false;
};

struct HistogramPair {
  std::vector<double> bin_lo;
  std::vector<double> bin_hi;
  std::vector<int> intra;
  std::vector<int> inter;
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  int intra_count = 0;
  int inter_count = 0;
};

/// Bins intra- and inter-class pair distances over a shared [0, max] range.
inline HistogramPair distance_histogram(const std::vector<PairDistance>& pairs, int bins) {
  if (pairs.empty()) throw ValidationError("distance_histogram: empty pair set");
  if (bins < 1) throw ValidationError("distance_histogram: bins must be >= 1");
  double max_d = 0.0;
  for (const auto& p : pairs) max_d = std::max(max_d, p.distance);
  if (max_d == 0.0) max_d = 1.0;  // degenerate: everything lands in bin 0
  HistogramPair h;
  h.bin_lo.resize(bins);
  h.bin_hi.resize(bins);
  h.intra.assign(bins, 0);
  h.inter.assign(bins, 0);
  const double width = max_d / bins;
  for (int b = 0; b < bins; ++b) {
    h.bin_lo[b] = b * width;
    h.bin_hi[b] = (b + 1) * width;
  }
  for (const auto& p : pairs) {
    int b = std::min(static_cast<int>(p.distance / width), bins - 1);
    if (p.same_class) {
      h.intra[b] += 1;
      h.intra_mean += p.distance;
      h.intra_count += 1;
    } else {
      h.inter[b] += 1;
      h.inter_mean += p.distance;
      h.inter_count += 1;
    }
  }
  if (h.intra_count > 0) h.intra_mean /= h.intra_count;
  if (h.inter_count > 0) h.inter_mean /= h.inter_count;
  return h;
}

inline void save_histogram_csv(const std::filesystem::path& path, const HistogramPair& h,
                               std::uint64_t config_hash, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << "# config_hash=" << config_hash << " seed=" << seed << "\n";
  out << "bin_lo,bin_hi,intra,inter\n";
  for (std::size_t b = 0; b < h.bin_lo.size(); ++b) {
    out << format_double(h.bin_lo[b]) << "," << format_double(h.bin_hi[b]) << "," << h.intra[b]
        << "," << h.inter[b] << "\n";
  }
}

/// Exactly `per_side` intra-class and `per_side` inter-class index pairs,
/// sampled uniformly with replacement over each side's pair population.
inline std::vector<std::pair<int, int>> sample_balanced_pairs(const std::vector<int>& labels,
                                                              int per_side, Rng& rng) {
  const int n = static_cast<int>(labels.size());
  if (n < 2) throw ValidationError("sample_balanced_pairs: need at least two samples");
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(2 * per_side);
  bool has_intra = false, has_inter = false;
  for (int i = 0; i < n && !(has_intra && has_inter); ++i)
    for (int j = i + 1; j < n && !(has_intra && has_inter); ++j)
      (labels[i] == labels[j] ? has_intra : has_inter) = true;
  if (!has_intra || !has_inter)
    throw ValidationError("sample_balanced_pairs: need both intra- and inter-class pairs");
  for (int side = 0; side < 2; ++side) {
    const bool want_same = side == 0;
    int got = 0;
    while (got < per_side) {
      const int i = static_cast<int>(rng.uniform_index(n));
      const int j = static_cast<int>(rng.uniform_index(n));
      if (i == j) continue;
      if ((labels[i] == labels[j]) != want_same) continue;
      pairs.emplace_back(std::min(i, j), std::max(i, j));
      ++got;
    }
  }
  return pairs;
}

struct EvalReport {
  double linear_probe_error = 0.0;
  double knn_accuracy = 0.0;
  std::vector<double> per_class_probe_error;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"linear_probe_error", linear_probe_error},
            {"knn_accuracy", knn_accuracy},
            {"per_class_probe_error", per_class_probe_error},
            {"config_hash", config_hash},
            {"seed", seed}};
  }
};

}  // namespace augca
