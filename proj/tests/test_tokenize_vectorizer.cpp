#include <catch2/catch.hpp>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "film/rng.hpp"
#include "film/tokenize.hpp"
#include "film/vectorizer.hpp"

using film::FeatureMatrix;
using film::TokenList;

TEST_CASE("tokenize lowercases and splits on non-alphanumeric runs") {
  CHECK(film::tokenize("What is C++?!") == std::vector<std::string>{"what", "is", "c"});
  CHECK(film::tokenize("a-b_c 42x") == std::vector<std::string>{"a", "b", "c", "42x"});
  CHECK(film::tokenize("...") == std::vector<std::string>{});
  CHECK(film::tokenize("") == std::vector<std::string>{});
}

TEST_CASE("fit_vocabulary computes smoothed idf") {
  const std::vector<TokenList> corpus{{"a", "b"}, {"a"}};
  const auto vocab = film::fit_vocabulary(corpus);
  REQUIRE(vocab.size() == 2);
  CHECK(vocab.idf[vocab.index.at("a")] == Approx(1.0).margin(1e-15));
  CHECK(vocab.idf[vocab.index.at("b")] == Approx(std::log(3.0 / 2.0) + 1.0).margin(1e-12));
  CHECK(vocab.doc_count == 2);
}

TEST_CASE("fit_vocabulary single document collapses to idf 1") {
  const std::vector<TokenList> corpus{{"x"}};
  const auto vocab = film::fit_vocabulary(corpus);
  REQUIRE(vocab.size() == 1);
  CHECK(vocab.idf[0] == Approx(1.0).margin(1e-15));
}

TEST_CASE("fit_vocabulary rejects an empty corpus") {
  CHECK_THROWS_AS(film::fit_vocabulary(std::vector<TokenList>{}), std::invalid_argument);
}

TEST_CASE("fit_vocabulary honors min_df") {
  const std::vector<TokenList> corpus{{"a", "b"}, {"a"}, {"a", "c"}};
  const auto vocab = film::fit_vocabulary(corpus, 2);
  CHECK(vocab.size() == 1);
  CHECK(vocab.index.count("a") == 1);
}

TEST_CASE("transform normalizes columns and drops OOV tokens") {
  const std::vector<TokenList> corpus{{"a", "b"}, {"a"}};
  const auto vocab = film::fit_vocabulary(corpus);

  SECTION("single in-vocabulary token yields a unit entry") {
    const FeatureMatrix x = film::transform(vocab, std::vector<TokenList>{{"a"}});
    REQUIRE(x.nonZeros() == 1);
    CHECK(x.coeff(vocab.index.at("a"), 0) == Approx(1.0).margin(1e-15));
  }

  SECTION("OOV-only sentence yields a zero column") {
    const FeatureMatrix x = film::transform(vocab, std::vector<TokenList>{{"z"}});
    CHECK(x.nonZeros() == 0);
    CHECK(x.cols() == 1);
  }

  SECTION("tf scales raw counts before normalization") {
    const FeatureMatrix x = film::transform(vocab, std::vector<TokenList>{{"a", "b", "a"}});
    const double wa = x.coeff(vocab.index.at("a"), 0);
    const double wb = x.coeff(vocab.index.at("b"), 0);
    const double idf_b = std::log(3.0 / 2.0) + 1.0;
    CHECK(wa / wb == Approx(2.0 * 1.0 / (1.0 * idf_b)).epsilon(1e-12));
    CHECK(std::sqrt(wa * wa + wb * wb) == Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("transform is deterministic and columns are unit norm") {
  film::Rng rng(7);
  std::vector<TokenList> corpus;
  const std::vector<std::string> words{"red", "green", "blue", "cyan", "teal", "gray"};
  for (int doc = 0; doc < 40; ++doc) {
    TokenList sentence;
    const int len = 1 + static_cast<int>(rng.below(6));
    for (int t = 0; t < len; ++t) sentence.push_back(words[rng.below(words.size())]);
    corpus.push_back(sentence);
  }
  const auto vocab = film::fit_vocabulary(corpus);
  const FeatureMatrix x1 = film::transform(vocab, corpus);
  const FeatureMatrix x2 = film::transform(vocab, corpus);
  REQUIRE(x1.nonZeros() == x2.nonZeros());
  for (int c = 0; c < x1.outerSize(); ++c) {
    FeatureMatrix::InnerIterator it1(x1, c), it2(x2, c);
    double norm_sq = 0.0;
    for (; it1 && it2; ++it1, ++it2) {
      CHECK(it1.row() == it2.row());
      CHECK(it1.value() == it2.value());  // bit-identical
      norm_sq += it1.value() * it1.value();
    }
    if (norm_sq > 0.0) CHECK(std::abs(std::sqrt(norm_sq) - 1.0) <= 1e-12);
  }
}

TEST_CASE("fit_vocabulary is insensitive to document order") {
  const std::vector<TokenList> corpus{{"w", "q"}, {"q"}, {"p", "w", "w"}, {"z"}};
  std::vector<TokenList> permuted{corpus[2], corpus[0], corpus[3], corpus[1]};
  const auto a = film::fit_vocabulary(corpus);
  const auto b = film::fit_vocabulary(permuted);
  REQUIRE(a.terms == b.terms);
  for (int f = 0; f < a.size(); ++f) CHECK(a.idf[f] == b.idf[f]);
}

TEST_CASE("vocabulary serialization round-trips exactly") {
  const std::vector<TokenList> corpus{{"alpha", "beta"}, {"alpha", "gamma", "gamma"}};
  const auto vocab = film::fit_vocabulary(corpus);
  std::stringstream buffer;
  film::save_vocabulary(buffer, vocab);
  const auto loaded = film::load_vocabulary(buffer);
  REQUIRE(loaded.terms == vocab.terms);
  REQUIRE(loaded.doc_count == vocab.doc_count);
  for (int f = 0; f < vocab.size(); ++f) CHECK(loaded.idf[f] == vocab.idf[f]);
}

TEST_CASE("load_vocabulary rejects corrupted headers") {
  std::stringstream buffer("NOTVOC\t1\t0\t0\n");
  CHECK_THROWS_AS(film::load_vocabulary(buffer), film::DataError);
}
