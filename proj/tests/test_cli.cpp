#include <catch2/catch.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "film/matcher.hpp"
#include "film/model_io.hpp"
#include "film/solver.hpp"
#include "support/synth_corpus.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("FILM_CLI");
  REQUIRE(env != nullptr);
  return env;
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& file) const { return (path / file).string(); }
};

}  // namespace

TEST_CASE("cli split is deterministic and validates its input") {
  TempDir dir("film_cli_split");
  film::testsupport::CorpusSpec spec;
  spec.n_pairs = 10;
  spec.seed = 4;
  film::testsupport::write_question_corpus(dir / "pairs.tsv", spec);

  const std::string base = "split --input " + (dir / "pairs.tsv") + " --train " +
                           (dir / "train.tsv") + " --val " + (dir / "val.tsv") + " --seed 7";
  REQUIRE(run_cli(base) == 0);
  int train_rows = 0, val_rows = 0;
  for (char c : slurp(dir / "train.tsv"))
    if (c == '\n') ++train_rows;
  for (char c : slurp(dir / "val.tsv"))
    if (c == '\n') ++val_rows;
  CHECK(train_rows == 8);
  CHECK(val_rows == 2);

  const std::string first_train = slurp(dir / "train.tsv");
  const std::string first_val = slurp(dir / "val.tsv");
  REQUIRE(run_cli(base) == 0);
  CHECK(slurp(dir / "train.tsv") == first_train);
  CHECK(slurp(dir / "val.tsv") == first_val);

  CHECK(run_cli(base + " --ratio 1.0") == 1);
  CHECK(run_cli("split --input " + (dir / "absent.tsv") + " --train " + (dir / "t.tsv") +
                " --val " + (dir / "v.tsv")) == 2);
  CHECK_FALSE(fs::exists(dir / "t.tsv"));
}

TEST_CASE("cli rejects unknown flags with a usage exit") {
  CHECK(run_cli("split --bogus x") == 1);
}

TEST_CASE("cli train produces a byte-identical model on rerun") {
  TempDir dir("film_cli_train");
  film::testsupport::CorpusSpec spec;
  spec.n_pairs = 50;
  spec.seed = 11;
  film::testsupport::write_question_corpus(dir / "train.tsv", spec);

  const std::string train_cmd = "train --input " + (dir / "train.tsv") + " --model " +
                                (dir / "model.film") + " --trace " + (dir / "trace.tsv") +
                                " -d 4 --max-iters 40 --seed 9";
  REQUIRE(run_cli(train_cmd) == 0);
  const std::string model_a = slurp(dir / "model.film");
  REQUIRE(run_cli(train_cmd) == 0);
  CHECK(slurp(dir / "model.film") == model_a);

  // Trace rows carry the six specified fields and f2 trends downward.
  std::istringstream trace(slurp(dir / "trace.tsv"));
  std::string line;
  int rows = 0;
  double first_f2 = 0.0, last_f2 = 0.0;
  while (std::getline(trace, line)) {
    ++rows;
    int tabs = 0;
    for (char c : line)
      if (c == '\t') ++tabs;
    CHECK(tabs == 5);
    std::istringstream fields(line);
    std::string iter, f2;
    std::getline(fields, iter, '\t');
    std::getline(fields, f2, '\t');
    last_f2 = std::stod(f2);
    if (rows == 1) first_f2 = last_f2;
  }
  CHECK(rows >= 1);
  CHECK(last_f2 <= first_f2);

  CHECK(run_cli("train --input " + (dir / "missing.tsv") + " --model " + (dir / "m.film")) == 2);
  CHECK_FALSE(fs::exists(dir / "m.film"));
}

TEST_CASE("cli pipeline matches the in-process pipeline bit for bit") {
  TempDir dir("film_cli_pipe");
  film::testsupport::CorpusSpec spec;
  spec.n_pairs = 120;
  spec.seed = 23;
  film::testsupport::write_question_corpus(dir / "all.tsv", spec);

  REQUIRE(run_cli("split --input " + (dir / "all.tsv") + " --train " + (dir / "train.tsv") +
                  " --val " + (dir / "val.tsv") + " --seed 3") == 0);
  REQUIRE(run_cli("vectorize --input " + (dir / "train.tsv") + " --vocab " +
                  (dir / "vocab.tsv")) == 0);
  REQUIRE(run_cli("triplets --input " + (dir / "train.tsv") + " --vocab " + (dir / "vocab.tsv") +
                  " --out " + (dir / "triplets.tsv") + " --seed 5") == 0);
  REQUIRE(run_cli("train --input " + (dir / "train.tsv") + " --vocab-in " + (dir / "vocab.tsv") +
                  " --triplets-in " + (dir / "triplets.tsv") + " --model " + (dir / "model.film") +
                  " -d 4 --max-iters 30 --seed 9") == 0);
  REQUIRE(run_cli("select-k --model " + (dir / "model.film") + " --input " + (dir / "val.tsv") +
                  " --table " + (dir / "perk.tsv") + " --params " + (dir / "params.tsv") +
                  " --k-min 1 --k-max 8") == 0);
  REQUIRE(run_cli("predict --model " + (dir / "model.film") + " --params " + (dir / "params.tsv") +
                  " --input " + (dir / "val.tsv") + " --out " + (dir / "preds.tsv")) == 0);
  REQUIRE(run_cli("evaluate --predictions " + (dir / "preds.tsv") + " --input " +
                  (dir / "val.tsv") + " --report " + (dir / "report.tsv")) == 0);

  // In-process replica of predict, written through the same formatting path.
  const film::LoadedModel model = film::load_model(dir / "model.film");
  const film::MatchParams params = film::load_match_params(dir / "params.tsv");
  const film::PairDataset val = film::load_pair_tsv(dir / "val.tsv");
  const Eigen::MatrixXd y =
      film::embed(model.map, model.vocab, std::span<const film::TokenList>(val.sentences));
  const auto ranks = film::compute_pair_ranks(y, val.pairs);
  std::vector<int> labels(ranks.size());
  std::vector<double> probs(ranks.size());
  for (size_t i = 0; i < ranks.size(); ++i) {
    labels[i] = film::decide_from_rank(ranks[i], params.k, params.rule);
    probs[i] = film::sigmoid(params.cal_a * ranks[i].cosine + params.cal_b);
  }
  film::write_predictions(dir / "preds_inproc.tsv", probs, labels);
  CHECK(slurp(dir / "preds.tsv") == slurp(dir / "preds_inproc.tsv"));

  const film::MetricReport rep = film::evaluate(probs, labels, val.labels);
  film::write_report(dir / "report_inproc.tsv", rep);
  CHECK(slurp(dir / "report.tsv") == slurp(dir / "report_inproc.tsv"));

  // The per-k table ends with the selected k and has one row per k.
  std::istringstream table(slurp(dir / "perk.tsv"));
  std::string line;
  int rows = 0;
  bool saw_selected = false;
  while (std::getline(table, line)) {
    ++rows;
    if (line.rfind("selected_k\t", 0) == 0) saw_selected = true;
  }
  CHECK(rows == 1 + 8 + 1);  // header + k rows + selected_k
  CHECK(saw_selected);
}

TEST_CASE("cli evaluate reports perfect accuracy on a perfect prediction file") {
  TempDir dir("film_cli_eval");
  film::testsupport::CorpusSpec spec;
  spec.n_pairs = 30;
  spec.seed = 31;
  film::testsupport::write_question_corpus(dir / "pairs.tsv", spec);
  const film::PairDataset ds = film::load_pair_tsv(dir / "pairs.tsv");
  std::vector<double> probs;
  for (int l : ds.labels) probs.push_back(l == 1 ? 0.99 : 0.01);
  film::write_predictions(dir / "preds.tsv", probs, ds.labels);
  REQUIRE(run_cli("evaluate --predictions " + (dir / "preds.tsv") + " --input " +
                  (dir / "pairs.tsv") + " --report " + (dir / "report.tsv")) == 0);
  const std::string report = slurp(dir / "report.tsv");
  CHECK(report.find("accuracy\t1\n") != std::string::npos);

  // Prediction/pair count mismatch is a data error.
  film::write_predictions(dir / "short.tsv", {0.5}, {1});
  CHECK(run_cli("evaluate --predictions " + (dir / "short.tsv") + " --input " +
                (dir / "pairs.tsv") + " --report " + (dir / "r2.tsv")) == 2);
}
