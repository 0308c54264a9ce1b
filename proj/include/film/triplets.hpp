#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "film/common.hpp"
#include "film/rng.hpp"
#include "film/vectorizer.hpp"

namespace film {

// "anchor is more similar to positive than to negative".
struct Triplet {
  int anchor;
  int positive;
  int negative;

  bool operator==(const Triplet&) const = default;
};

struct TripletSet {
  std::vector<Triplet> items;
  std::unordered_map<int, std::vector<size_t>> per_anchor;  // anchor -> item indices

  size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  size_t anchor_count(int anchor) const {
    auto it = per_anchor.find(anchor);
    return it == per_anchor.end() ? 0 : it->second.size();
  }
};

inline TripletSet make_triplet_set(std::vector<Triplet> items) {
  for (const auto& t : items) {
    if (t.anchor == t.positive || t.anchor == t.negative || t.positive == t.negative)
      throw DataError("triplet with repeated index");
    if (t.anchor < 0 || t.positive < 0 || t.negative < 0)
      throw DataError("triplet with negative index");
  }
  TripletSet ts;
  ts.items = std::move(items);
  for (size_t idx = 0; idx < ts.items.size(); ++idx) {
    ts.per_anchor[ts.items[idx].anchor].push_back(idx);
  }
  return ts;
}

struct PairLabel {
  int i;
  int j;
  int label;  // 1 similar, 0 dissimilar
};

struct TripletGenConfig {
  int negatives_per_positive = 3;
  double hard_fraction = 0.5;  // share of negatives picked by tf-idf cosine
  uint64_t seed = 0;
};

struct GeneratedTriplets {
  TripletSet set;
  std::string warning;  // non-empty when no positive pairs were found
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<int> parent_;
};

}  // namespace detail

// Builds triplets from labeled pairs: positive pairs anchor both directions,
// and each (anchor, positive) draws `negatives_per_positive` negatives from
// outside the anchor's positive-transitive cluster -- a seeded mix of hard
// negatives (highest tf-idf cosine) and uniform ones. Deterministic for a
// fixed seed; each (anchor, positive) uses its own derived stream.
inline GeneratedTriplets generate_triplets(const std::vector<PairLabel>& pairs, int n,
                                           const TripletGenConfig& config,
                                           const FeatureMatrix* features = nullptr) {
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1) throw DataError("pair label must be 0 or 1");
    if (p.i < 0 || p.i >= n || p.j < 0 || p.j >= n) throw DataError("pair index out of range");
  }
  if (config.negatives_per_positive < 1)
    throw std::invalid_argument("negatives_per_positive must be >= 1");
  if (config.hard_fraction < 0.0 || config.hard_fraction > 1.0)
    throw std::invalid_argument("hard_fraction must lie in [0, 1]");
  if (config.hard_fraction > 0.0 && features == nullptr)
    throw std::invalid_argument("hard negatives need a feature matrix");
  if (features != nullptr && features->cols() != n)
    throw std::invalid_argument("feature matrix column count must equal n");

  detail::UnionFind clusters(n);
  std::vector<std::pair<int, int>> positives;
  for (const auto& p : pairs) {
    if (p.label == 1) {
      clusters.unite(p.i, p.j);
      positives.emplace_back(p.i, p.j);
    }
  }
  GeneratedTriplets out;
  if (positives.empty()) {
    out.warning = "no positive pairs; triplet set is empty";
    return out;
  }

  const int hard_per_positive = std::min(
      config.negatives_per_positive,
      static_cast<int>(std::lround(config.hard_fraction * config.negatives_per_positive)));

  // Hard-negative shortlists per anchor, shared across that anchor's positives.
  std::unordered_map<int, std::vector<int>> hard_lists;
  if (hard_per_positive > 0) {
    Eigen::VectorXd norms(n);
    for (int c = 0; c < n; ++c) norms[c] = features->col(c).norm();
    std::unordered_set<int> anchors;
    for (auto [i, j] : positives) {
      anchors.insert(i);
      anchors.insert(j);
    }
    Eigen::VectorXd scores(n);
    for (int a : anchors) {
      scores.setZero();
      if (norms[a] > 0.0) {
        scores = features->transpose() * features->col(a);
        for (int c = 0; c < n; ++c)
          scores[c] = norms[c] > 0.0 ? scores[c] / (norms[a] * norms[c]) : 0.0;
      }
      const int cluster = clusters.find(a);
      std::vector<int> order;
      order.reserve(static_cast<size_t>(n));
      for (int c = 0; c < n; ++c) {
        if (c != a && clusters.find(c) != cluster) order.push_back(c);
      }
      const size_t keep = std::min<size_t>(order.size(), static_cast<size_t>(hard_per_positive));
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                        [&](int lhs, int rhs) {
                          if (scores[lhs] != scores[rhs]) return scores[lhs] > scores[rhs];
                          return lhs < rhs;
                        });
      order.resize(keep);
      hard_lists.emplace(a, std::move(order));
    }
  }

  std::vector<Triplet> items;
  auto emit_for = [&](int anchor, int positive, size_t pair_idx, int direction) {
    const int cluster = clusters.find(anchor);
    std::vector<int> chosen;
    if (hard_per_positive > 0) {
      const auto& hard = hard_lists.at(anchor);
      for (int c : hard) {
        if (static_cast<int>(chosen.size()) >= hard_per_positive) break;
        chosen.push_back(c);
      }
    }
    std::vector<int> pool;
    pool.reserve(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
      if (c == anchor || clusters.find(c) == cluster) continue;
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
      pool.push_back(c);
    }
    Rng rng(derive_seed(config.seed, pair_idx * 2 + static_cast<size_t>(direction),
                        static_cast<uint64_t>(anchor)));
    const int want_random = config.negatives_per_positive - static_cast<int>(chosen.size());
    for (int k = 0; k < want_random && !pool.empty(); ++k) {
      const size_t pick = static_cast<size_t>(rng.below(pool.size()));
      chosen.push_back(pool[pick]);
      pool[pick] = pool.back();
      pool.pop_back();
    }
    for (int neg : chosen) items.push_back({anchor, positive, neg});
  };

  for (size_t p = 0; p < positives.size(); ++p) {
    auto [i, j] = positives[p];
    emit_for(i, j, p, 0);
    emit_for(j, i, p, 1);
  }
  out.set = make_triplet_set(std::move(items));
  return out;
}

// C = sum over triplets t of C^(t), where C^(t) has +1 at (positive, anchor)
// and -1 at (negative, anchor). Duplicate triplets accumulate.
inline Eigen::SparseMatrix<double> build_constraint_matrix(const TripletSet& ts, int n) {
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(ts.size() * 2);
  for (const auto& t : ts.items) {
    if (t.anchor >= n || t.positive >= n || t.negative >= n)
      throw DataError("triplet index out of bounds");
    entries.emplace_back(t.positive, t.anchor, 1.0);
    entries.emplace_back(t.negative, t.anchor, -1.0);
  }
  Eigen::SparseMatrix<double> c(n, n);
  c.setFromTriplets(entries.begin(), entries.end());
  c.makeCompressed();
  return c;
}

// Diagonal of T: entry i is 1 / (|T_i| + 1); anchors with no triplets get 1.
inline Eigen::VectorXd build_anchor_weights(const TripletSet& ts, int n) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (const auto& [anchor, indices] : ts.per_anchor) {
    if (anchor >= n) throw DataError("triplet anchor out of bounds");
    w[anchor] = 1.0 / (static_cast<double>(indices.size()) + 1.0);
  }
  return w;
}

inline void write_triplets(const std::string& path, const TripletSet& ts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  for (const auto& t : ts.items) out << t.anchor << '\t' << t.positive << '\t' << t.negative << '\n';
}

inline TripletSet read_triplets(const std::string& path, int n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<Triplet> items;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Triplet t{};
    if (std::sscanf(line.c_str(), "%d\t%d\t%d", &t.anchor, &t.positive, &t.negative) != 3)
      throw DataError(path + ": malformed triplet at line " + std::to_string(line_no));
    if (t.anchor >= n || t.positive >= n || t.negative >= n)
      throw DataError(path + ": triplet index out of bounds at line " + std::to_string(line_no));
    items.push_back(t);
  }
  return make_triplet_set(std::move(items));
}

inline void write_index_pairs(const std::string& path, const std::vector<PairLabel>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  for (const auto& p : pairs) out << p.i << '\t' << p.j << '\t' << p.label << '\n';
}

inline std::vector<PairLabel> read_index_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<PairLabel> pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    PairLabel p{};
    if (std::sscanf(line.c_str(), "%d\t%d\t%d", &p.i, &p.j, &p.label) != 3)
      throw DataError(path + ": malformed pair at line " + std::to_string(line_no));
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace film
