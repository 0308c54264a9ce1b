#pragma once

// Deterministic synthetic duplicate-question corpus used by the CLI tests and
// the scaled pipeline checks. Questions are bags of topic words plus a rare
// instance-specific token; paraphrases of the same question share most
// content words, negatives pair different questions (half of them from the
// same topic, which makes them lexically hard).

#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "film/rng.hpp"

namespace film::testsupport {

struct CorpusSpec {
  int n_pairs = 1000;
  double positive_fraction = 0.36;
  uint64_t seed = 0;
};

inline void write_question_corpus(const std::string& path, const CorpusSpec& spec) {
  film::Rng rng(film::derive_seed(spec.seed, 0x636f7270ULL));  // 'corp'
  const int n_topics = std::max(4, spec.n_pairs / 100);
  const int n_instances = std::max(8, spec.n_pairs / 2);
  const int words_per_topic = 40;
  const int content_per_instance = 7;
  const int variants_per_instance = 3;

  std::vector<int> instance_topic(n_instances);
  std::vector<std::vector<int>> topic_instances(n_topics);
  std::vector<std::vector<std::string>> variant_text(n_instances);
  for (int inst = 0; inst < n_instances; ++inst) {
    const int topic = static_cast<int>(rng.below(n_topics));
    instance_topic[inst] = topic;
    topic_instances[topic].push_back(inst);
    std::vector<std::string> content;
    for (int w = 0; w < content_per_instance; ++w) {
      content.push_back("t" + std::to_string(topic) + "w" +
                        std::to_string(rng.below(words_per_topic)));
    }
    content.push_back("q" + std::to_string(inst));  // rare identifying token
    for (int v = 0; v < variants_per_instance; ++v) {
      std::vector<std::string> words;
      const size_t drop = rng.below(3);  // paraphrases lose up to two words
      for (size_t w = 0; w < content.size(); ++w) {
        if (w < drop && w + 1 < content.size()) continue;  // never drop the rare token
        words.push_back(content[w]);
      }
      const int extras = 2 + static_cast<int>(rng.below(3));
      for (int e = 0; e < extras; ++e) words.push_back("f" + std::to_string(rng.below(24)));
      rng.shuffle(words);
      std::string text;
      for (size_t w = 0; w < words.size(); ++w) {
        if (w) text += ' ';
        text += words[w];
      }
      variant_text[inst].push_back(text);
    }
  }

  const int n_pos = static_cast<int>(std::llround(spec.positive_fraction * spec.n_pairs));
  struct Row {
    int inst_a, var_a, inst_b, var_b, label;
  };
  std::vector<Row> rows;
  rows.reserve(static_cast<size_t>(spec.n_pairs));
  for (int p = 0; p < n_pos; ++p) {
    const int inst = static_cast<int>(rng.below(n_instances));
    const int va = static_cast<int>(rng.below(variants_per_instance));
    int vb = static_cast<int>(rng.below(variants_per_instance));
    while (vb == va) vb = static_cast<int>(rng.below(variants_per_instance));
    rows.push_back({inst, va, inst, vb, 1});
  }
  for (int p = n_pos; p < spec.n_pairs; ++p) {
    const int inst_a = static_cast<int>(rng.below(n_instances));
    int inst_b = inst_a;
    if (rng.uniform() < 0.5) {
      const auto& mates = topic_instances[instance_topic[inst_a]];
      if (mates.size() > 1) {
        while (inst_b == inst_a) inst_b = mates[rng.below(mates.size())];
      }
    }
    while (inst_b == inst_a) inst_b = static_cast<int>(rng.below(n_instances));
    rows.push_back({inst_a, static_cast<int>(rng.below(variants_per_instance)), inst_b,
                    static_cast<int>(rng.below(variants_per_instance)), 0});
  }
  rng.shuffle(rows);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& row : rows) {
    const std::string id_a = "s" + std::to_string(row.inst_a) + "_" + std::to_string(row.var_a);
    const std::string id_b = "s" + std::to_string(row.inst_b) + "_" + std::to_string(row.var_b);
    out << id_a << '\t' << id_b << '\t' << variant_text[row.inst_a][row.var_a] << '\t'
        << variant_text[row.inst_b][row.var_b] << '\t' << row.label << '\n';
  }
}

}  // namespace film::testsupport
