#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "film/common.hpp"

namespace film {

// Feature-by-sample matrix; columns are vectorized sentences.
using FeatureMatrix = Eigen::SparseMatrix<double>;

using TokenList = std::vector<std::string>;

// Fitted TF-IDF vocabulary. Feature indices are dense 0..D-1 assigned in
// lexicographic term order, so fitting is insensitive to document order.
struct Vocabulary {
  std::vector<std::string> terms;               // index -> term
  std::unordered_map<std::string, int> index;   // term -> index
  Eigen::VectorXd idf;                          // per-feature, always > 0
  int64_t doc_count = 0;

  int size() const { return static_cast<int>(terms.size()); }
};

// idf(t) = ln((1 + N) / (1 + df(t))) + 1, the smoothed variant; never zero and
// never divides by zero. tf is the raw in-sentence count.
inline Vocabulary fit_vocabulary(std::span<const TokenList> corpus, int min_df = 1) {
  if (corpus.empty()) throw std::invalid_argument("fit_vocabulary: empty corpus");
  std::map<std::string, int64_t> df;
  for (const auto& doc : corpus) {
    std::map<std::string, bool> seen;
    for (const auto& tok : doc) {
      if (tok.empty()) throw std::invalid_argument("fit_vocabulary: empty token");
      if (!seen[tok]) {
        seen[tok] = true;
        ++df[tok];
      }
    }
  }
  Vocabulary vocab;
  vocab.doc_count = static_cast<int64_t>(corpus.size());
  for (const auto& [term, count] : df) {
    if (count >= min_df) {
      vocab.index.emplace(term, static_cast<int>(vocab.terms.size()));
      vocab.terms.push_back(term);
    }
  }
  vocab.idf.resize(vocab.size());
  const double n_docs = static_cast<double>(vocab.doc_count);
  for (int f = 0; f < vocab.size(); ++f) {
    const double d = static_cast<double>(df.at(vocab.terms[f]));
    vocab.idf[f] = std::log((1.0 + n_docs) / (1.0 + d)) + 1.0;
  }
  return vocab;
}

// Transforms sentences into l2-normalized tf-idf columns. Out-of-vocabulary
// tokens are dropped; a sentence with no in-vocabulary tokens yields an
// all-zero column.
inline FeatureMatrix transform(const Vocabulary& vocab, std::span<const TokenList> sentences) {
  const int dim = vocab.size();
  const int n = static_cast<int>(sentences.size());
  std::vector<Eigen::Triplet<double>> entries;
  std::unordered_map<int, double> counts;
  for (int col = 0; col < n; ++col) {
    counts.clear();
    for (const auto& tok : sentences[col]) {
      auto it = vocab.index.find(tok);
      if (it != vocab.index.end()) counts[it->second] += 1.0;
    }
    double norm_sq = 0.0;
    for (const auto& [f, tf] : counts) {
      const double w = tf * vocab.idf[f];
      norm_sq += w * w;
    }
    if (norm_sq == 0.0) continue;
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (const auto& [f, tf] : counts) {
      entries.emplace_back(f, col, tf * vocab.idf[f] * inv_norm);
    }
  }
  FeatureMatrix X(dim, n);
  X.setFromTriplets(entries.begin(), entries.end());
  X.makeCompressed();
  return X;
}

inline FeatureMatrix transform(const Vocabulary& vocab, const std::vector<TokenList>& sentences) {
  return transform(vocab, std::span<const TokenList>(sentences));
}

inline constexpr const char* kVocabularyMagic = "FILMVOC";
inline constexpr int kVocabularyVersion = 1;

// File layout: `FILMVOC \t version \t D \t doc_count` header line, then one
// `term \t index \t idf` record per feature in index order, idf rendered with
// 17 significant digits.
inline void save_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << kVocabularyMagic << '\t' << kVocabularyVersion << '\t' << vocab.size() << '\t'
      << vocab.doc_count << '\n';
  for (int f = 0; f < vocab.size(); ++f) {
    out << vocab.terms[f] << '\t' << f << '\t' << format_g17(vocab.idf[f]) << '\n';
  }
}

inline void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  save_vocabulary(out, vocab);
  if (!out) throw DataError("write failed: " + path);
}

inline Vocabulary load_vocabulary(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("vocabulary: missing header");
  char magic[16] = {0};
  int version = 0;
  long long dim = 0, docs = 0;
  if (std::sscanf(line.c_str(), "%15[^\t]\t%d\t%lld\t%lld", magic, &version, &dim, &docs) != 4 ||
      std::string(magic) != kVocabularyMagic) {
    throw DataError("vocabulary: bad header");
  }
  if (version != kVocabularyVersion) throw DataError("vocabulary: unsupported version");
  Vocabulary vocab;
  vocab.doc_count = docs;
  vocab.terms.reserve(static_cast<size_t>(dim));
  vocab.idf.resize(dim);
  for (long long f = 0; f < dim; ++f) {
    if (!std::getline(in, line)) throw DataError("vocabulary: truncated record section");
    const size_t t1 = line.find('\t');
    const size_t t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw DataError("vocabulary: malformed record at feature " + std::to_string(f));
    const std::string term = line.substr(0, t1);
    const long long idx = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    const double idf = std::stod(line.substr(t2 + 1));
    if (idx != f) throw DataError("vocabulary: records out of index order");
    if (!(idf > 0.0)) throw DataError("vocabulary: non-positive idf for term " + term);
    vocab.index.emplace(term, static_cast<int>(f));
    vocab.terms.push_back(term);
    vocab.idf[f] = idf;
  }
  return vocab;
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return load_vocabulary(in);
}

}  // namespace film
