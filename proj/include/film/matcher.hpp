#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "film/common.hpp"
#include "film/solver.hpp"
#include "film/vectorizer.hpp"

namespace film {

enum class KnnRule { either, both };

inline KnnRule parse_rule(const std::string& name) {
  if (name == "either") return KnnRule::either;
  if (name == "both") return KnnRule::both;
  throw std::invalid_argument("unknown kNN rule: " + name);
}

inline const char* rule_name(KnnRule rule) { return rule == KnnRule::either ? "either" : "both"; }

// Learned map plus everything needed to score a sentence pair.
struct MatchModel {
  MetricMap map;
  Vocabulary vocab;
  int k = 1;
  double cal_a = 1.0;  // probability = sigmoid(cal_a * cosine + cal_b)
  double cal_b = 0.0;
  KnnRule rule = KnnRule::either;
};

// Y = L * transform(vocab, sentences); zero input columns stay zero.
inline Eigen::MatrixXd embed(const MetricMap& map, const Vocabulary& vocab,
                             std::span<const TokenList> sentences) {
  if (map.L.cols() != vocab.size())
    throw std::invalid_argument("embed: vocabulary does not match the metric map");
  const FeatureMatrix x = transform(vocab, sentences);
  return map.L * x;
}

inline Eigen::MatrixXd embed(const MatchModel& model, const std::vector<TokenList>& sentences) {
  return embed(model.map, model.vocab, std::span<const TokenList>(sentences));
}

struct PairIndices {
  int a;
  int b;
};

// Cosine rank of each pair member in the other's neighbor ordering
// (0 = nearest). Zero embeddings never qualify as neighbors, so ranks
// against or from them are "absent" (npos); cosine stores the pair score
// with the zero-vector convention sim = 0.
struct PairRank {
  static constexpr size_t npos = std::numeric_limits<size_t>::max();
  size_t rank_ab = npos;  // rank of b among a's neighbors
  size_t rank_ba = npos;
  double cosine = 0.0;
};

// Exact brute-force ranks; ties broken by lower candidate index. O(n d) per
// pair, independent of k, so one pass serves every k in a sweep.
inline std::vector<PairRank> compute_pair_ranks(const Eigen::MatrixXd& y,
                                                const std::vector<PairIndices>& pairs) {
  const Eigen::Index n = y.cols();
  Eigen::MatrixXd yn = y;
  std::vector<uint8_t> null_col(static_cast<size_t>(n), 0);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double norm = yn.col(c).norm();
    if (norm > 0.0) {
      yn.col(c) /= norm;
    } else {
      null_col[static_cast<size_t>(c)] = 1;
    }
  }
  auto rank_of = [&](int from, int to) -> size_t {
    if (null_col[static_cast<size_t>(from)] || null_col[static_cast<size_t>(to)])
      return PairRank::npos;
    const Eigen::VectorXd sims = yn.transpose() * yn.col(from);
    const double target = sims[to];
    size_t rank = 0;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (c == from || c == to || null_col[static_cast<size_t>(c)]) continue;
      if (sims[c] > target || (sims[c] == target && c < to)) ++rank;
    }
    return rank;
  };
  std::vector<PairRank> out;
  out.reserve(pairs.size());
  for (const auto& pr : pairs) {
    if (pr.a < 0 || pr.a >= n || pr.b < 0 || pr.b >= n)
      throw std::invalid_argument("pair index out of range");
    PairRank r;
    r.rank_ab = rank_of(pr.a, pr.b);
    r.rank_ba = rank_of(pr.b, pr.a);
    if (!null_col[static_cast<size_t>(pr.a)] && !null_col[static_cast<size_t>(pr.b)])
      r.cosine = yn.col(pr.a).dot(yn.col(pr.b));
    out.push_back(r);
  }
  return out;
}

inline int decide_from_rank(const PairRank& r, int k, KnnRule rule) {
  const size_t kk = static_cast<size_t>(k);
  const bool in_a = r.rank_ab < kk;
  const bool in_b = r.rank_ba < kk;
  return (rule == KnnRule::either ? (in_a || in_b) : (in_a && in_b)) ? 1 : 0;
}

// Pairwise kNN rule: a pair is similar when one member lies among the other's
// k cosine-nearest neighbors ("either"), or when both containments hold
// ("both").
inline std::vector<int> pairwise_knn_decide(const Eigen::MatrixXd& y,
                                            const std::vector<PairIndices>& pairs, int k,
                                            KnnRule rule) {
  if (k < 1) throw std::invalid_argument("pairwise_knn_decide: k must be >= 1");
  if (k >= y.cols()) throw std::invalid_argument("pairwise_knn_decide: k must be < n");
  const auto ranks = compute_pair_ranks(y, pairs);
  std::vector<int> labels;
  labels.reserve(ranks.size());
  for (const auto& r : ranks) labels.push_back(decide_from_rank(r, k, rule));
  return labels;
}

inline double log_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("log_loss: length mismatch");
  if (probs.empty()) throw std::invalid_argument("log_loss: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    const double p = clip_probability(probs[i]);
    acc += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / static_cast<double>(probs.size());
}

struct RateCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long positives() const { return tp + fn; }
  long negatives() const { return tn + fp; }
  double tpr() const { return positives() > 0 ? static_cast<double>(tp) / positives() : 0.0; }
  double tnr() const { return negatives() > 0 ? static_cast<double>(tn) / negatives() : 0.0; }
  double fpr() const { return negatives() > 0 ? static_cast<double>(fp) / negatives() : 0.0; }
  double fnr() const { return positives() > 0 ? static_cast<double>(fn) / positives() : 0.0; }
  double accuracy() const {
    const long total = tp + tn + fp + fn;
    return total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  }
};

inline RateCounts confusion_counts(const std::vector<int>& predictions,
                                   const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("confusion_counts: length mismatch");
  RateCounts rc;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (labels[i] == 1) {
      predictions[i] == 1 ? ++rc.tp : ++rc.fn;
    } else {
      predictions[i] == 1 ? ++rc.fp : ++rc.tn;
    }
  }
  return rc;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct KTableRow {
  int k = 0;
  double ce = 0.0;
  double tpr = 0.0, tnr = 0.0, fpr = 0.0, fnr = 0.0;
};

struct KSelection {
  int k = 1;
  std::vector<KTableRow> table;
};

// Sweeps k over k_range, evaluating the kNN decisions against the validation
// labels. Returns the elbow-rule k: the smallest k whose cross-entropy
// improvement over the next five values falls below 1% relative; if none
// qualifies, the k with minimal cross-entropy (smallest on ties).
inline KSelection select_k(const Eigen::MatrixXd& y, const std::vector<PairIndices>& pairs,
                           const std::vector<int>& labels, const std::vector<int>& k_range,
                           KnnRule rule) {
  if (pairs.empty()) throw std::invalid_argument("select_k: empty validation set");
  if (pairs.size() != labels.size()) throw std::invalid_argument("select_k: length mismatch");
  if (k_range.empty()) throw std::invalid_argument("select_k: empty k range");
  const auto ranks = compute_pair_ranks(y, pairs);
  KSelection sel;
  for (int k : k_range) {
    if (k < 1 || k >= y.cols()) throw std::invalid_argument("select_k: k out of range");
    std::vector<int> preds;
    std::vector<double> probs;
    preds.reserve(ranks.size());
    probs.reserve(ranks.size());
    for (const auto& r : ranks) {
      const int label = decide_from_rank(r, k, rule);
      preds.push_back(label);
      probs.push_back(static_cast<double>(label));
    }
    const RateCounts rc = confusion_counts(preds, labels);
    sel.table.push_back({k, log_loss(probs, labels), rc.tpr(), rc.tnr(), rc.fpr(), rc.fnr()});
  }
  const size_t rows = sel.table.size();
  size_t chosen = rows;  // sentinel: none qualified
  for (size_t i = 0; i < rows; ++i) {
    const double ce = sel.table[i].ce;
    double best_future = ce;
    for (size_t j = i + 1; j < std::min(rows, i + 6); ++j)
      best_future = std::min(best_future, sel.table[j].ce);
    const double improvement = ce > 0.0 ? (ce - best_future) / ce : 0.0;
    if (improvement < 0.01) {
      chosen = i;
      break;
    }
  }
  if (chosen == rows) {
    chosen = 0;
    for (size_t i = 1; i < rows; ++i)
      if (sel.table[i].ce < sel.table[chosen].ce) chosen = i;
  }
  sel.k = sel.table[chosen].k;
  return sel;
}

// Fits probability = sigmoid(a * score + b) by Newton iteration on the
// cross-entropy (convex in (a, b)); a is constrained non-negative. With a
// single class present, returns (0, logit(clipped base rate)).
inline std::pair<double, double> calibrate(const std::vector<double>& scores,
                                           const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("calibrate: length mismatch");
  if (scores.empty()) throw std::invalid_argument("calibrate: empty input");
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (int l : labels) mean += l;
  mean /= n;
  // logit of the clipped base rate, evaluated without cancellation.
  const double b_base =
      std::log(clip_probability(mean)) - std::log(clip_probability(1.0 - mean));
  if (mean == 0.0 || mean == 1.0) return {0.0, b_base};

  auto fit_with = [&](bool free_a) {
    double a = free_a ? 1.0 : 0.0;
    double b = b_base;
    for (int iter = 0; iter < 100; ++iter) {
      double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
      for (size_t i = 0; i < scores.size(); ++i) {
        const double p = sigmoid(a * scores[i] + b);
        const double r = p - static_cast<double>(labels[i]);
        const double w = std::max(p * (1.0 - p), 1e-12);
        ga += r * scores[i];
        gb += r;
        haa += w * scores[i] * scores[i];
        hab += w * scores[i];
        hbb += w;
      }
      double da, db;
      if (free_a) {
        const double det = haa * hbb - hab * hab;
        if (std::abs(det) < 1e-300) break;
        da = (hbb * ga - hab * gb) / det;
        db = (haa * gb - hab * ga) / det;
      } else {
        da = 0.0;
        db = gb / std::max(hbb, 1e-300);
      }
      a -= da;
      b -= db;
      if (std::abs(da) + std::abs(db) < 1e-12) break;
    }
    return std::make_pair(a, b);
  };

  auto [a, b] = fit_with(true);
  if (a < 0.0) return fit_with(false);
  return {a, b};
}

// Single fixed-key report; the pinned key order is what the report file uses.
struct MetricReport {
  double logloss = 0.0;
  double accuracy = 0.0;
  double tpr = 0.0, tnr = 0.0, fpr = 0.0, fnr = 0.0;
  double pearson = 0.0;
  long tp = 0, tn = 0, fp = 0, fn = 0;
};

inline MetricReport evaluate(const std::vector<double>& probs, const std::vector<int>& preds01,
                             const std::vector<int>& labels) {
  if (probs.size() != labels.size() || preds01.size() != labels.size())
    throw std::invalid_argument("evaluate: length mismatch");
  MetricReport rep;
  rep.logloss = log_loss(probs, labels);
  const RateCounts rc = confusion_counts(preds01, labels);
  rep.accuracy = rc.accuracy();
  rep.tpr = rc.tpr();
  rep.tnr = rc.tnr();
  rep.fpr = rc.fpr();
  rep.fnr = rc.fnr();
  rep.tp = rc.tp;
  rep.tn = rc.tn;
  rep.fp = rc.fp;
  rep.fn = rc.fn;
  std::vector<double> label_values(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) label_values[i] = labels[i];
  rep.pearson = labels.size() >= 2 ? pearson(probs, label_values) : 0.0;
  return rep;
}

}  // namespace film
