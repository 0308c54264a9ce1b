// film: end-to-end pipeline driver for low-rank metric learning on sentence
// pairs. Subcommands mirror the pipeline stages: split, vectorize, triplets,
// train, select-k, predict, evaluate, bench.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "film/bench.hpp"
#include "film/common.hpp"
#include "film/matcher.hpp"
#include "film/model_io.hpp"
#include "film/oracle.hpp"
#include "film/solver.hpp"
#include "film/triplets.hpp"
#include "film/vectorizer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct SplitArgs {
  std::string input, train_out, val_out;
  double ratio = 0.8;
  uint64_t seed = 42;
};

void run_split(const SplitArgs& args) {
  if (args.ratio <= 0.0 || args.ratio >= 1.0)
    throw std::invalid_argument("split ratio must lie strictly inside (0, 1)");
  std::ifstream in(args.input, std::ios::binary);
  if (!in) throw film::DataError("cannot open: " + args.input);
  std::vector<std::string> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t tabs = 0;
    for (char c : line)
      if (c == '\t') ++tabs;
    if (tabs != 4)
      throw film::DataError(args.input + ": expected 5 tab-separated fields at line " +
                            std::to_string(line_no));
    rows.push_back(line);
  }
  if (rows.empty()) throw film::DataError(args.input + ": no pairs");
  const size_t n = rows.size();
  const size_t train_count = static_cast<size_t>(std::llround(args.ratio * static_cast<double>(n)));
  if (train_count == 0 || train_count >= n)
    throw std::invalid_argument("split would leave an empty train or validation set");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  film::Rng rng(film::derive_seed(args.seed, 0x73706c74ULL));  // 'splt'
  rng.shuffle(order);
  std::vector<uint8_t> is_train(n, 0);
  for (size_t i = 0; i < train_count; ++i) is_train[order[i]] = 1;
  std::ofstream train_out(args.train_out, std::ios::binary);
  std::ofstream val_out(args.val_out, std::ios::binary);
  if (!train_out) throw film::DataError("cannot open for write: " + args.train_out);
  if (!val_out) throw film::DataError("cannot open for write: " + args.val_out);
  for (size_t i = 0; i < n; ++i) (is_train[i] ? train_out : val_out) << rows[i] << '\n';
  std::cout << "split: " << train_count << " train pairs, " << (n - train_count)
            << " validation pairs\n";
}

struct TrainArgs {
  std::string input, model_out;
  std::string vocab_in, triplets_in, trace_out;
  film::SolverConfig solver;
  film::TripletGenConfig gen;
  int min_df = 1;
  bool print_costs = false;
};

film::FitResult train_pipeline(const TrainArgs& args, film::Vocabulary& vocab_out) {
  const film::PairDataset ds = film::load_pair_tsv(args.input);
  vocab_out = args.vocab_in.empty()
                  ? film::fit_vocabulary(ds.sentences, args.min_df)
                  : film::load_vocabulary(args.vocab_in);
  const film::FeatureMatrix x = film::transform(vocab_out, ds.sentences);

  film::TripletSet triplets;
  if (args.triplets_in.empty()) {
    std::vector<film::PairLabel> pairs;
    pairs.reserve(ds.pairs.size());
    for (size_t i = 0; i < ds.pairs.size(); ++i)
      pairs.push_back({ds.pairs[i].a, ds.pairs[i].b, ds.labels[i]});
    film::TripletGenConfig gen = args.gen;
    gen.seed = film::derive_seed(args.solver.seed, 0x74726970ULL);  // 'trip'
    auto generated = film::generate_triplets(pairs, ds.sample_count(), gen, &x);
    if (!generated.warning.empty()) std::cerr << "warning: " << generated.warning << '\n';
    triplets = std::move(generated.set);
  } else {
    triplets = film::read_triplets(args.triplets_in, ds.sample_count());
  }
  if (triplets.empty()) throw film::DataError("no triplets to train on");

  return args.solver.batch_size > 0 ? film::fit_minibatch(x, triplets, args.solver)
                                    : film::fit(x, triplets, args.solver);
}

void run_train(const TrainArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  film::Vocabulary vocab;
  const film::FitResult result = train_pipeline(args, vocab);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (result.status == film::FitStatus::diverged)
    throw film::NumericalError("training diverged (non-finite objective); trace has " +
                               std::to_string(result.trace.size()) + " rows");
  film::save_model(args.model_out, result.map, vocab, args.solver.seed,
                   film::config_digest(args.solver));
  if (!args.trace_out.empty()) film::write_trace(args.trace_out, result.trace);
  const char* status = result.status == film::FitStatus::converged ? "converged"
                       : result.status == film::FitStatus::stalled ? "stalled"
                                                                   : "max-iters";
  std::cout << "train: " << result.iterations << " iterations (" << status << "), rank "
            << result.rank << ", wall " << film::format_g17(seconds) << " s\n";
  if (args.print_costs) {
    const film::CostReport costs = film::per_iteration_costs(result.trace);
    std::cout << "median ms per update: lambda " << costs.median_lambda_ms << ", K "
              << costs.median_k_ms << ", grad " << costs.median_grad_ms << ", P "
              << costs.median_p_ms << ", S " << costs.median_s_ms << '\n';
  }
}

struct SelectKArgs {
  std::string model, input, table_out, params_out;
  int k_min = 1, k_max = 55;
  std::string rule = "either";
};

void run_select_k(const SelectKArgs& args) {
  const film::LoadedModel model = film::load_model(args.model);
  const film::PairDataset ds = film::load_pair_tsv(args.input);
  const Eigen::MatrixXd y =
      film::embed(model.map, model.vocab, std::span<const film::TokenList>(ds.sentences));
  if (args.k_min < 1 || args.k_max < args.k_min)
    throw std::invalid_argument("need 1 <= k-min <= k-max");
  std::vector<int> k_range;
  for (int k = args.k_min; k <= std::min<long>(args.k_max, y.cols() - 1); ++k)
    k_range.push_back(k);
  if (k_range.empty()) throw film::DataError("validation set too small for any k");
  const film::KnnRule rule = film::parse_rule(args.rule);
  const film::KSelection sel = film::select_k(y, ds.pairs, ds.labels, k_range, rule);

  const auto ranks = film::compute_pair_ranks(y, ds.pairs);
  std::vector<double> scores(ranks.size());
  for (size_t i = 0; i < ranks.size(); ++i) scores[i] = ranks[i].cosine;
  const auto [cal_a, cal_b] = film::calibrate(scores, ds.labels);

  film::write_k_table(args.table_out, sel);
  film::save_match_params(args.params_out, sel.k, rule, cal_a, cal_b);
  std::cout << "select-k: k=" << sel.k << ", calibration a=" << film::format_g17(cal_a)
            << " b=" << film::format_g17(cal_b) << '\n';
}

struct PredictArgs {
  std::string model, params, input, out;
  int k_override = 0;
  std::string rule_override;
};

void run_predict(const PredictArgs& args) {
  const film::LoadedModel model = film::load_model(args.model);
  film::MatchParams params;
  if (!args.params.empty()) params = film::load_match_params(args.params);
  if (args.k_override > 0) params.k = args.k_override;
  if (!args.rule_override.empty()) params.rule = film::parse_rule(args.rule_override);
  const film::PairDataset ds = film::load_pair_tsv(args.input);
  const Eigen::MatrixXd y =
      film::embed(model.map, model.vocab, std::span<const film::TokenList>(ds.sentences));
  if (params.k >= y.cols())
    throw film::DataError("k=" + std::to_string(params.k) + " is not below the corpus size");
  const auto ranks = film::compute_pair_ranks(y, ds.pairs);
  std::vector<int> labels(ranks.size());
  std::vector<double> probs(ranks.size());
  for (size_t i = 0; i < ranks.size(); ++i) {
    labels[i] = film::decide_from_rank(ranks[i], params.k, params.rule);
    probs[i] = film::sigmoid(params.cal_a * ranks[i].cosine + params.cal_b);
  }
  film::write_predictions(args.out, probs, labels);
  std::cout << "predict: " << ranks.size() << " pairs -> " << args.out << '\n';
}

struct EvaluateArgs {
  std::string predictions, input, report_out;
};

void run_evaluate(const EvaluateArgs& args) {
  const film::PredictionFile preds = film::read_predictions(args.predictions);
  const film::PairDataset ds = film::load_pair_tsv(args.input);
  if (preds.probs.size() != ds.labels.size())
    throw film::DataError("prediction count does not match pair count");
  const film::MetricReport rep = film::evaluate(preds.probs, preds.labels01, ds.labels);
  film::write_report(args.report_out, rep);
  std::cout << "evaluate: logloss " << film::format_g17(rep.logloss) << ", accuracy "
            << film::format_g17(rep.accuracy) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("FILM_THREADS")) {
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));
  }

  CLI::App app{"low-rank metric learning for sentence-pair matching"};
  app.require_subcommand(1);
  app.set_config("--config");

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "split a labeled pair file into train/validation");
  split->add_option("--input", split_args.input, "pairs tsv: id1, id2, sent1, sent2, label")
      ->required();
  split->add_option("--train", split_args.train_out, "output train tsv")->required();
  split->add_option("--val", split_args.val_out, "output validation tsv")->required();
  split->add_option("--ratio", split_args.ratio, "train fraction, in (0,1)");
  split->add_option("--seed", split_args.seed, "shuffle seed");

  struct {
    std::string input, vocab_out;
    int min_df = 1;
  } vec_args;
  auto* vectorize = app.add_subcommand("vectorize", "fit the tf-idf vocabulary on a pair file");
  vectorize->add_option("--input", vec_args.input, "pairs tsv")->required();
  vectorize->add_option("--vocab", vec_args.vocab_out, "output vocabulary file")->required();
  vectorize->add_option("--min-df", vec_args.min_df, "minimum document frequency");

  struct {
    std::string input, vocab_in, out, pairs_out;
    film::TripletGenConfig gen;
  } tri_args;
  auto* triplets_cmd = app.add_subcommand("triplets", "generate triplet constraints from pairs");
  triplets_cmd->add_option("--input", tri_args.input, "pairs tsv")->required();
  triplets_cmd->add_option("--vocab", tri_args.vocab_in,
                           "vocabulary for hard-negative mining (needed when hard-fraction > 0)");
  triplets_cmd->add_option("--out", tri_args.out, "output triplet file")->required();
  triplets_cmd->add_option("--pairs-out", tri_args.pairs_out, "also write index pairs");
  triplets_cmd->add_option("--negatives-per-positive", tri_args.gen.negatives_per_positive,
                           "negatives drawn per (anchor, positive)");
  triplets_cmd->add_option("--hard-fraction", tri_args.gen.hard_fraction,
                           "share of negatives picked by tf-idf cosine");
  triplets_cmd->add_option("--seed", tri_args.gen.seed, "sampling seed");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "learn the metric map");
  train->add_option("--input", train_args.input, "train pairs tsv")->required();
  train->add_option("--model", train_args.model_out, "output model file")->required();
  train->add_option("--vocab-in", train_args.vocab_in, "reuse a fitted vocabulary");
  train->add_option("--triplets-in", train_args.triplets_in, "reuse generated triplets");
  train->add_option("--trace", train_args.trace_out, "write the training trace");
  train->add_option("-d,--dim", train_args.solver.d, "representation dimension");
  train->add_option("--margin", train_args.solver.margin, "hinge margin");
  train->add_option("--max-iters", train_args.solver.max_iters, "iteration cap");
  train->add_option("--grad-tol", train_args.solver.grad_tol, "gradient tolerance");
  train->add_option("--rank-tol", train_args.solver.rank_tol, "relative rank cutoff");
  train->add_option("--seed", train_args.solver.seed, "training seed");
  train->add_option("--batch-size", train_args.solver.batch_size,
                    "minibatch size (0 = full batch)");
  train->add_option("--epochs", train_args.solver.epochs, "minibatch epochs");
  train->add_option("--max-rank", train_args.solver.max_rank,
                    "rank budget; > 0 switches to the randomized truncated SVD");
  train->add_option("--min-df", train_args.min_df, "minimum document frequency");
  train->add_option("--negatives-per-positive", train_args.gen.negatives_per_positive,
                    "negatives drawn per (anchor, positive)");
  train->add_option("--hard-fraction", train_args.gen.hard_fraction,
                    "share of negatives picked by tf-idf cosine");
  train->add_flag("--timing", train_args.print_costs, "print median per-update costs");

  SelectKArgs select_args;
  auto* select = app.add_subcommand("select-k", "sweep k on validation and fit calibration");
  select->add_option("--model", select_args.model, "model file")->required();
  select->add_option("--input", select_args.input, "validation pairs tsv")->required();
  select->add_option("--table", select_args.table_out, "output per-k metric table")->required();
  select->add_option("--params", select_args.params_out, "output decision parameters")->required();
  select->add_option("--k-min", select_args.k_min, "smallest k");
  select->add_option("--k-max", select_args.k_max, "largest k");
  select->add_option("--rule", select_args.rule, "containment rule: either | both");

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "label pairs with the pairwise kNN rule");
  predict->add_option("--model", predict_args.model, "model file")->required();
  predict->add_option("--params", predict_args.params, "decision parameters from select-k");
  predict->add_option("--input", predict_args.input, "pairs tsv")->required();
  predict->add_option("--out", predict_args.out, "output predictions")->required();
  predict->add_option("--k", predict_args.k_override, "override k");
  predict->add_option("--rule", predict_args.rule_override, "override rule");

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against labels");
  evaluate->add_option("--predictions", eval_args.predictions, "prediction file")->required();
  evaluate->add_option("--input", eval_args.input, "pairs tsv with ground-truth labels")
      ->required();
  evaluate->add_option("--report", eval_args.report_out, "output metric report")->required();

  struct {
    uint64_t seed = 0;
    std::string out;
  } bench_args;
  auto* bench = app.add_subcommand("bench", "per-update cost scaling study");
  bench->add_option("--seed", bench_args.seed, "instance seed");
  bench->add_option("--out", bench_args.out, "also write the report to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (split->parsed()) run_split(split_args);
    if (vectorize->parsed()) {
      const film::PairDataset ds = film::load_pair_tsv(vec_args.input);
      const film::Vocabulary vocab = film::fit_vocabulary(ds.sentences, vec_args.min_df);
      film::save_vocabulary(vec_args.vocab_out, vocab);
      std::cout << "vectorize: " << vocab.size() << " features over " << vocab.doc_count
                << " sentences\n";
    }
    if (triplets_cmd->parsed()) {
      const film::PairDataset ds = film::load_pair_tsv(tri_args.input);
      std::vector<film::PairLabel> pairs;
      for (size_t i = 0; i < ds.pairs.size(); ++i)
        pairs.push_back({ds.pairs[i].a, ds.pairs[i].b, ds.labels[i]});
      film::FeatureMatrix x;
      const film::FeatureMatrix* x_ptr = nullptr;
      if (tri_args.gen.hard_fraction > 0.0) {
        if (tri_args.vocab_in.empty())
          throw std::invalid_argument("--vocab is required when hard-fraction > 0");
        const film::Vocabulary vocab = film::load_vocabulary(tri_args.vocab_in);
        x = film::transform(vocab, ds.sentences);
        x_ptr = &x;
      }
      auto generated = film::generate_triplets(pairs, ds.sample_count(), tri_args.gen, x_ptr);
      if (!generated.warning.empty()) std::cerr << "warning: " << generated.warning << '\n';
      film::write_triplets(tri_args.out, generated.set);
      if (!tri_args.pairs_out.empty()) film::write_index_pairs(tri_args.pairs_out, pairs);
      std::cout << "triplets: " << generated.set.size() << " constraints\n";
    }
    if (train->parsed()) run_train(train_args);
    if (select->parsed()) run_select_k(select_args);
    if (predict->parsed()) run_predict(predict_args);
    if (evaluate->parsed()) run_evaluate(eval_args);
    if (bench->parsed()) {
      const film::bench::ScalingReport rep = film::bench::scaling_study(bench_args.seed);
      const std::string text = film::bench::format_report(rep);
      std::cout << text;
      if (!bench_args.out.empty()) {
        std::ofstream out(bench_args.out, std::ios::binary);
        if (!out) throw film::DataError("cannot open for write: " + bench_args.out);
        out << text;
      }
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const film::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const film::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
