#pragma once

#include "augca/common.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace augca {

inline constexpr double kRowSumTol = 1e-9;
inline constexpr double kModelRowSumTol = 1e-6;
inline constexpr int kMaxAugmentedCount = 100000;

/// Finite sample spaces: N natural samples, L augmented samples, and optional
/// class labels on the naturals (evaluation only).
struct DiscreteDomain {
  int natural_count = 0;
  int augmented_count = 0;
  std::vector<int> labels;  // empty or size natural_count

  void validate() const {
    if (natural_count < 1) throw ValidationError("domain: natural_count must be >= 1");
    if (augmented_count < 1) throw ValidationError("domain: augmented_count must be >= 1");
    if (augmented_count > kMaxAugmentedCount)
      throw ValidationError("domain: augmented_count exceeds the desk-scale guard (" +
                            std::to_string(kMaxAugmentedCount) + ")");
    if (!labels.empty() && static_cast<int>(labels.size()) != natural_count)
      throw ValidationError("domain: labels must have one entry per natural sample");
  }
};

/// Row-stochastic N x L matrix with p[xbar, x] = p(x | xbar).
struct AugmentationMatrix {
  DiscreteDomain domain;
  Matrix p;  // natural_count x augmented_count

  void validate() const {
    domain.validate();
    if (p.rows() != domain.natural_count || p.cols() != domain.augmented_count)
      throw ValidationError("augmentation matrix: shape does not match domain");
    for (int i = 0; i < p.rows(); ++i) {
      if ((p.row(i).array() < 0.0).any())
        throw ValidationError("augmentation matrix: negative entry in row " + std::to_string(i));
      const double s = p.row(i).sum();
      if (std::abs(s - 1.0) > kRowSumTol)
        throw ValidationError("augmentation matrix: row " + std::to_string(i) +
                              " sums to " + std::to_string(s) + ", expected 1");
    }
  }
};

/// Column sums d[x] = sum_xbar p(x|xbar) and the augmented marginal d[x]/N.
struct MarginalWeights {
  Vector d;
  Vector marginal;
};

/// A_hat = A D^{-1/2} restricted to columns with d[x] > 0. `column_map` maps a
/// retained column back to its index in the original matrix.
struct NormalizedFeature {
  Matrix a_hat;                 // natural_count x retained
  Vector d;                     // retained marginals
  std::vector<int> column_map;  // retained -> original column index
};

/// Builds A from a model that can enumerate p(x|xbar) for every pair. Rows
/// are checked against 1 at the loose model tolerance, then renormalized so
/// the stored matrix satisfies the tight row-sum invariant.
template <class Model>
AugmentationMatrix build_exact_matrix(const Model& model, const DiscreteDomain& domain) {
  domain.validate();
  AugmentationMatrix out;
  out.domain = domain;
  out.p.resize(domain.natural_count, domain.augmented_count);
  for (int i = 0; i < domain.natural_count; ++i) {
    for (int j = 0; j < domain.augmented_count; ++j) {
      const double v = model(i, j);
      if (v < 0.0)
        throw ValidationError("build_exact_matrix: model returned negative probability");
      out.p(i, j) = v;
    }
    const double s = out.p.row(i).sum();
    if (std::abs(s - 1.0) > kModelRowSumTol)
      throw ValidationError("build_exact_matrix: row " + std::to_string(i) + " sums to " +
                            std::to_string(s) + "; model does not normalize");
    out.p.row(i) /= s;
  }
  return out;
}

/// Deterministic augmentation: L = N and A = I.
struct IdentityModel {
  double operator()(int i, int j) const { return i == j ? 1.0 : 0.0; }
};

struct EmpiricalDraw {
  int natural_id = 0;
  Vector outcome;
};

/// Result of build_empirical_matrix: the matrix plus per-column metadata
/// (distinct outcome coordinates, the first parent to draw the outcome, and
/// the merged draw count).
struct EmpiricalMatrix {
  AugmentationMatrix a;
  std::vector<Vector> outcomes;
  std::vector<int> parent;
  std::vector<int> multiplicity;
};

/// Builds A from observed augmentation draws. Columns are the distinct
/// outcomes under exact-equality dedup, in first-seen order. With no kernel,
/// A[i, j] is the draw count of outcome j from natural i, row-normalized.
/// With a kernel, A[i, j] is kernel(i, outcome_j) row-normalized: the
/// density-weighted form the Gaussian pilot uses.
inline EmpiricalMatrix build_empirical_matrix(
    const std::vector<EmpiricalDraw>& draws, int natural_count,
    const std::function<double(int, const Vector&)>& kernel = nullptr) {
  if (natural_count < 1) throw ValidationError("build_empirical_matrix: no natural samples");

  std::map<std::vector<double>, int> column_of;
  EmpiricalMatrix out;
  std::vector<int> draws_per_natural(natural_count, 0);
  std::vector<std::pair<int, int>> draw_columns;  // (natural_id, column)
  draw_columns.reserve(draws.size());

  for (const auto& draw : draws) {
    if (draw.natural_id < 0 || draw.natural_id >= natural_count)
      throw ValidationError("build_empirical_matrix: natural id out of range");
    std::vector<double> key(draw.outcome.data(), draw.outcome.data() + draw.outcome.size());
    auto [it, inserted] = column_of.try_emplace(std::move(key), static_cast<int>(out.outcomes.size()));
    if (inserted) {
      out.outcomes.push_back(draw.outcome);
      out.parent.push_back(draw.natural_id);
      out.multiplicity.push_back(0);
      if (static_cast<int>(out.outcomes.size()) > kMaxAugmentedCount)
        throw ValidationError("build_empirical_matrix: too many distinct outcomes");
    }
    out.multiplicity[it->second] += 1;
    draws_per_natural[draw.natural_id] += 1;
    draw_columns.emplace_back(draw.natural_id, it->second);
  }
  for (int i = 0; i < natural_count; ++i) {
    if (draws_per_natural[i] == 0)
      throw ValidationError("build_empirical_matrix: natural sample " + std::to_string(i) +
                            " has no augmentation draws");
  }

  const int l = static_cast<int>(out.outcomes.size());
  out.a.domain.natural_count = natural_count;
  out.a.domain.augmented_count = l;
  out.a.p = Matrix::Zero(natural_count, l);

  if (kernel) {
    for (int i = 0; i < natural_count; ++i)
      for (int j = 0; j < l; ++j) out.a.p(i, j) = kernel(i, out.outcomes[j]);
  } else {
    for (const auto& [i, j] : draw_columns) out.a.p(i, j) += 1.0;
  }
  for (int i = 0; i < natural_count; ++i) {
    const double s = out.a.p.row(i).sum();
    if (!(s > 0.0) || !std::isfinite(s))
      throw ValidationError("build_empirical_matrix: row " + std::to_string(i) +
                            " has no positive mass");
    out.a.p.row(i) /= s;
  }
  return out;
}

/// Column sums of A. Sum_x d[x] = N by row-stochasticity.
inline MarginalWeights marginals(const AugmentationMatrix& a) {
  MarginalWeights mw;
  mw.d = a.p.colwise().sum().transpose();
  mw.marginal = mw.d / static_cast<double>(a.domain.natural_count);
  return mw;
}

/// A_hat[xbar, x] = p(x|xbar) / sqrt(d[x]). Zero-marginal columns carry no
/// mass in any row and are dropped, with the index map recorded.
inline NormalizedFeature normalize(const AugmentationMatrix& a, const MarginalWeights& mw) {
  NormalizedFeature nf;
  const int l = a.domain.augmented_count;
  nf.column_map.reserve(l);
  for (int j = 0; j < l; ++j) {
    if (mw.d[j] > 0.0) nf.column_map.push_back(j);
  }
  const int retained = static_cast<int>(nf.column_map.size());
  if (retained == 0) throw ValidationError("normalize: all columns have zero marginal");
  nf.a_hat.resize(a.domain.natural_count, retained);
  nf.d.resize(retained);
  for (int jj = 0; jj < retained; ++jj) {
    const int j = nf.column_map[jj];
    nf.d[jj] = mw.d[j];
    nf.a_hat.col(jj) = a.p.col(j) / std::sqrt(mw.d[j]);
  }
  return nf;
}

// ---------------------------------------------------------------------------
// Matrix import/export.
//
// CSV layout: first line "N,L", then N rows of L comma-separated values.
// JSON descriptor: {natural_count, augmented_count, labels?, matrix_path}.
// ---------------------------------------------------------------------------

inline void save_matrix_csv(const std::filesystem::path& path, const AugmentationMatrix& a) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << a.domain.natural_count << "," << a.domain.augmented_count << "\n";
  for (int i = 0; i < a.p.rows(); ++i) {
    for (int j = 0; j < a.p.cols(); ++j) {
      if (j) out << ",";
      out << format_double(a.p(i, j));
    }
    out << "\n";
  }
}

inline AugmentationMatrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open matrix csv: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("matrix csv is empty: " + path.string());
  AugmentationMatrix a;
  {
    std::istringstream header(line);
    char comma = 0;
    if (!(header >> a.domain.natural_count >> comma >> a.domain.augmented_count) || comma != ',')
      throw ValidationError("matrix csv: malformed \"n,l\" header line");
  }
  a.domain.validate();
  a.p.resize(a.domain.natural_count, a.domain.augmented_count);
  for (int i = 0; i < a.domain.natural_count; ++i) {
    if (!std::getline(in, line))
      throw ValidationError("matrix csv: expected " + std::to_string(a.domain.natural_count) +
                            " rows");
    std::istringstream row(line);
    std::string cell;
    for (int j = 0; j < a.domain.augmented_count; ++j) {
      if (!std::getline(row, cell, ','))
        throw ValidationError("matrix csv: row " + std::to_string(i) + " is too short");
      a.p(i, j) = std::stod(cell);
    }
  }
  a.validate();
  return a;
}

inline void save_descriptor(const std::filesystem::path& path, const AugmentationMatrix& a,
                            const std::string& matrix_filename) {
  nlohmann::json j;
  j["natural_count"] = a.domain.natural_count;
  j["augmented_count"] = a.domain.augmented_count;
  if (!a.domain.labels.empty()) j["labels"] = a.domain.labels;
  j["matrix_path"] = matrix_filename;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  save_matrix_csv(path.parent_path() / matrix_filename, a);
}

inline AugmentationMatrix load_from_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open descriptor: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("descriptor is not valid json: " + std::string(e.what()));
  }
  AugmentationMatrix a = load_matrix_csv(path.parent_path() / j.at("matrix_path").get<std::string>());
  if (j.at("natural_count").get<int>() != a.domain.natural_count ||
      j.at("augmented_count").get<int>() != a.domain.augmented_count)
    throw ValidationError("descriptor counts do not match the matrix csv");
  if (j.contains("labels")) {
    a.domain.labels = j["labels"].get<std::vector<int>>();
    a.domain.validate();
  }
  return a;
}

}  // namespace augca
