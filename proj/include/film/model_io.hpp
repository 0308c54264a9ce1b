#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "film/common.hpp"
#include "film/matcher.hpp"
#include "film/solver.hpp"
#include "film/tokenize.hpp"
#include "film/vectorizer.hpp"

namespace film {

inline constexpr const char* kModelMagic = "FILMMODEL";
inline constexpr int kModelVersion = 1;

// FNV-1a over a canonical rendering of the solver configuration; stored in
// the model header so mismatched artifacts are detectable.
inline uint64_t config_digest(const SolverConfig& cfg) {
  std::ostringstream canon;
  canon << cfg.d << '|' << format_g17(cfg.margin) << '|' << cfg.max_iters << '|'
        << format_g17(cfg.grad_tol) << '|' << format_g17(cfg.rank_tol) << '|' << cfg.seed << '|'
        << cfg.batch_size << '|' << cfg.epochs << '|' << cfg.max_rank;
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

struct LoadedModel {
  MetricMap map;
  Vocabulary vocab;
  uint64_t seed = 0;
  uint64_t digest = 0;
};

// Layout: text header `FILMMODEL \t version \t d \t D \t seed \t digest`,
// then d*D little-endian doubles (L row-major), then the vocabulary section.
inline void save_model(const std::string& path, const MetricMap& map, const Vocabulary& vocab,
                       uint64_t seed, uint64_t digest) {
  if (map.L.cols() != vocab.size())
    throw std::invalid_argument("save_model: map width does not match vocabulary");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot open for write: " + tmp);
    out << kModelMagic << '\t' << kModelVersion << '\t' << map.L.rows() << '\t' << map.L.cols()
        << '\t' << seed << '\t' << digest << '\n';
    for (Eigen::Index i = 0; i < map.L.rows(); ++i) {
      for (Eigen::Index j = 0; j < map.L.cols(); ++j) {
        const double value = map.L(i, j);
        out.write(reinterpret_cast<const char*>(&value), sizeof(value));
      }
    }
    save_vocabulary(out, vocab);
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("model: missing header");
  char magic[16] = {0};
  int version = 0;
  long long d = 0, dim = 0;
  unsigned long long seed = 0, digest = 0;
  if (std::sscanf(header.c_str(), "%15[^\t]\t%d\t%lld\t%lld\t%llu\t%llu", magic, &version, &d,
                  &dim, &seed, &digest) != 6 ||
      std::string(magic) != kModelMagic) {
    throw DataError("model: bad header");
  }
  if (version != kModelVersion) throw DataError("model: unsupported version");
  LoadedModel model;
  model.seed = seed;
  model.digest = digest;
  model.map.L.resize(d, dim);
  for (long long i = 0; i < d; ++i) {
    for (long long j = 0; j < dim; ++j) {
      double value = 0.0;
      in.read(reinterpret_cast<char*>(&value), sizeof(value));
      if (!in) throw DataError("model: truncated weight block");
      model.map.L(i, j) = value;
    }
  }
  model.vocab = load_vocabulary(in);
  if (model.vocab.size() != dim) throw DataError("model: vocabulary size mismatch");
  return model;
}

inline constexpr const char* kParamsMagic = "FILMPARAMS";

// Decision parameters produced by select-k (k, rule, calibration).
inline void save_match_params(const std::string& path, int k, KnnRule rule, double cal_a,
                              double cal_b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  out << kParamsMagic << "\t1\n";
  out << "k\t" << k << '\n';
  out << "rule\t" << rule_name(rule) << '\n';
  out << "cal_a\t" << format_g17(cal_a) << '\n';
  out << "cal_b\t" << format_g17(cal_b) << '\n';
}

struct MatchParams {
  int k = 1;
  KnnRule rule = KnnRule::either;
  double cal_a = 1.0;
  double cal_b = 0.0;
};

inline MatchParams load_match_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kParamsMagic, 0) != 0)
    throw DataError("params: bad header");
  MatchParams params;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("params: malformed line");
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (key == "k") params.k = std::stoi(value);
    else if (key == "rule") params.rule = parse_rule(value);
    else if (key == "cal_a") params.cal_a = std::stod(value);
    else if (key == "cal_b") params.cal_b = std::stod(value);
    else throw DataError("params: unknown key " + key);
  }
  return params;
}

// One record per iteration: iter, f2, grad_norm, tau, active_count, ms.
inline void write_trace(const std::string& path, const TrainingTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  for (const auto& row : trace) {
    out << row.iter << '\t' << format_g17(row.f2) << '\t' << format_g17(row.grad_norm) << '\t'
        << format_g17(row.tau) << '\t' << format_g17(row.active_count) << '\t'
        << format_g17(row.ms) << '\n';
  }
}

// One record per pair: pair_id, probability, label01.
inline void write_predictions(const std::string& path, const std::vector<double>& probs,
                              const std::vector<int>& labels01) {
  if (probs.size() != labels01.size())
    throw std::invalid_argument("write_predictions: length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  for (size_t i = 0; i < probs.size(); ++i) {
    out << i << '\t' << format_g17(probs[i]) << '\t' << labels01[i] << '\n';
  }
}

struct PredictionFile {
  std::vector<double> probs;
  std::vector<int> labels01;
};

inline PredictionFile read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  PredictionFile pf;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    long long id = 0;
    double prob = 0.0;
    int label = 0;
    if (std::sscanf(line.c_str(), "%lld\t%lf\t%d", &id, &prob, &label) != 3)
      throw DataError(path + ": malformed prediction at line " + std::to_string(line_no));
    pf.probs.push_back(prob);
    pf.labels01.push_back(label);
  }
  return pf;
}

inline void write_report(const std::string& path, const MetricReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  out << "logloss\t" << format_g17(rep.logloss) << '\n';
  out << "accuracy\t" << format_g17(rep.accuracy) << '\n';
  out << "tpr\t" << format_g17(rep.tpr) << '\n';
  out << "tnr\t" << format_g17(rep.tnr) << '\n';
  out << "fpr\t" << format_g17(rep.fpr) << '\n';
  out << "fnr\t" << format_g17(rep.fnr) << '\n';
  out << "pearson\t" << format_g17(rep.pearson) << '\n';
  out << "tp_count\t" << rep.tp << '\n';
  out << "tn_count\t" << rep.tn << '\n';
  out << "fp_count\t" << rep.fp << '\n';
  out << "fn_count\t" << rep.fn << '\n';
}

// k-sweep table: k, ce, tpr, tnr, fpr, fnr per row, plus the chosen k.
inline void write_k_table(const std::string& path, const KSelection& sel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  out << "k\tce\ttpr\ttnr\tfpr\tfnr\n";
  for (const auto& row : sel.table) {
    out << row.k << '\t' << format_g17(row.ce) << '\t' << format_g17(row.tpr) << '\t'
        << format_g17(row.tnr) << '\t' << format_g17(row.fpr) << '\t' << format_g17(row.fnr)
        << '\n';
  }
  out << "selected_k\t" << sel.k << '\n';
}

// Labeled sentence-pair dataset: `id1 \t id2 \t sent1 \t sent2 \t label` rows.
// Sentences are keyed by id in first-appearance order; pairs refer to those
// indices. The first text seen for an id wins.
struct PairDataset {
  std::vector<std::string> ids;
  std::vector<TokenList> sentences;     // tokenized, aligned with ids
  std::vector<std::string> raw;         // raw text, aligned with ids
  std::vector<PairIndices> pairs;
  std::vector<int> labels;

  int sample_count() const { return static_cast<int>(ids.size()); }
};

inline PairDataset load_pair_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  PairDataset ds;
  std::unordered_map<std::string, int> id_index;
  auto intern = [&](const std::string& id, const std::string& text) {
    auto it = id_index.find(id);
    if (it != id_index.end()) return it->second;
    const int idx = static_cast<int>(ds.ids.size());
    id_index.emplace(id, idx);
    ds.ids.push_back(id);
    ds.raw.push_back(text);
    ds.sentences.push_back(tokenize(text));
    return idx;
  };
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (fields.size() < 4) {
      const size_t tab = line.find('\t', start);
      if (tab == std::string::npos) break;
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 5)
      throw DataError(path + ": expected 5 tab-separated fields at line " +
                      std::to_string(line_no));
    const std::string& label_str = fields[4];
    if (label_str != "0" && label_str != "1")
      throw DataError(path + ": label must be 0 or 1 at line " + std::to_string(line_no));
    const int a = intern(fields[0], fields[2]);
    const int b = intern(fields[1], fields[3]);
    ds.pairs.push_back({a, b});
    ds.labels.push_back(label_str == "1" ? 1 : 0);
  }
  return ds;
}

}  // namespace film
