// citriage: command-line driver for corpus generation, training, prediction,
// sifting and MCCV experiments.
//
// Exit status: 0 success, 1 usage error, 2 data or validation error,
// 3 internal error. Diagnostics go to stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "citriage/citriage.hpp"

namespace fs = std::filesystem;
using namespace citriage;

namespace {

struct Args {
  std::string corpus;
  std::string registry;
  std::string model;
  std::string log;
  std::string out;
  std::string config;
  std::string registry_out;
  std::uint64_t seed = 0;
  std::size_t shots = 8;
  std::size_t iterations = 30;
  std::size_t trials = 5;
  std::size_t tau = 2;
  std::size_t topk = 3;
  std::string k_sets = "1-8;1-10;1-13";
  std::size_t jobs = 1;
  bool merge = false;

  // training knobs
  double lr = 1e-4;
  int epochs = 1;
  std::size_t batch_size = 4;
  int max_iter = 300;
  std::size_t pair_rounds = 20;
  std::size_t hash_dim = std::size_t{1} << 18;
  std::size_t embed_dim = 256;

  // generator knobs
  std::size_t per_category = 60;
  std::size_t min_lines = 50;
  std::size_t max_lines = 800;
  double noise_rate = 0.1;
  double duplicate_rate = 0.1;
};

// Records go to --out when given, else to stdout. The summary goes wherever
// the records do not.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw IoError("cannot write output file '" + path + "'");
    }
  }
  std::ostream& records() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  std::ostream& summary() { return file_.is_open() ? std::cout : std::cerr; }

 private:
  std::ofstream file_;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::optional<CategoryRegistry> registry_arg(const Args& a) {
  if (a.registry.empty()) return std::nullopt;
  return load_registry(a.registry);
}

Corpus corpus_arg(const Args& a) {
  if (a.corpus.empty()) throw ValidationError("--corpus is required");
  return load_corpus(a.corpus, registry_arg(a));
}

PipelineOptions pipeline_options(const Args& a) {
  PipelineOptions o;
  o.hash_dim = a.hash_dim;
  o.embed_dim = a.embed_dim;
  return o;
}

MccvConfig mccv_config(const Args& a) {
  MccvConfig cfg;
  cfg.iterations = a.iterations;
  cfg.trials = a.trials;
  cfg.shots = a.shots;
  cfg.base_seed = a.seed;
  cfg.pair_rounds = a.pair_rounds;
  cfg.pipeline = pipeline_options(a);
  cfg.jobs = a.jobs;
  return cfg;
}

void print_metrics_table(std::ostream& out, const MccvResult& r) {
  const auto& m = r.aggregate.mean;
  const auto& s = r.aggregate.std;
  out << "metric           mean     std\n";
  auto row = [&](const char* name, double mean, double sd) {
    out << std::left << std::setw(15) << name << "  " << fixed(mean) << "  " << fixed(sd) << '\n';
  };
  row("macro_f1", m.macro_f1, s.macro_f1);
  row("macro_precision", m.macro_precision, s.macro_precision);
  row("macro_recall", m.macro_recall, s.macro_recall);
  row("mcc", m.mcc, s.mcc);
  row("top1", m.top1, s.top1);
  row("top2", m.top2, s.top2);
  row("top3", m.top3, s.top3);
}

int cmd_gen_corpus(const Args& a) {
  if (a.out.empty()) throw ValidationError("--out is required");
  GenConfig g;
  g.per_category = a.per_category;
  g.min_lines = a.min_lines;
  g.max_lines = a.max_lines;
  g.noise_rate = a.noise_rate;
  g.duplicate_rate = a.duplicate_rate;
  g.seed = a.seed;
  const auto templates = templates_default();
  const auto registry = registry_from_templates(templates);
  const auto examples = generate_corpus(templates, g);
  save_corpus(a.out, registry, examples);
  if (!a.registry_out.empty()) save_registry(a.registry_out, registry);
  std::cout << "wrote " << examples.size() << " logs over " << registry.size() << " categories to " << a.out << '\n';
  return 0;
}

int cmd_preprocess(const Args& a) {
  Sink sink(a.out);
  if (!a.log.empty()) {
    const auto raw = load_raw_log(a.log);
    const auto processed = preprocess_log(raw);
    for (const auto& line : processed.lines) sink.records() << line << '\n';
    sink.summary() << "lines " << raw.lines.size() << " -> " << processed.lines.size() << ", characters reduced by "
                   << fixed(100.0 * reduction_percent(raw, processed), 1) << "%\n";
    return 0;
  }
  const auto corpus = corpus_arg(a);
  double total = 0.0;
  for (const auto& e : corpus.examples) {
    const auto processed = preprocess_log(e.raw);
    total += reduction_percent(e.raw, processed);
    nlohmann::ordered_json rec;
    rec["id"] = e.id;
    rec["category"] = corpus.registry.name(e.category);
    rec["log"] = join_lines(processed.lines);
    sink.records() << rec.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  if (!corpus.examples.empty()) {
    sink.summary() << corpus.examples.size() << " logs, mean character reduction "
                   << fixed(100.0 * total / static_cast<double>(corpus.examples.size()), 1) << "%\n";
  }
  return 0;
}

int cmd_train(const Args& a) {
  if (a.model.empty()) throw ValidationError("--model is required");
  const auto corpus = corpus_arg(a);
  std::vector<LabeledExample> train = corpus.examples;
  if (a.shots > 0) train = sample_shots(corpus.examples, {a.shots, derive_seed(a.seed, 11)}, corpus.registry);
  TrainConfig tc;
  tc.body_learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.pair_rounds = a.pair_rounds;
  tc.seed = derive_seed(a.seed, 12);
  const auto model = train_pipeline(train, tc, a.max_iter, corpus.registry, pipeline_options(a));
  save_model(model, a.model);
  std::cout << "trained on " << train.size() << " logs, " << corpus.registry.size() << " categories; model written to "
            << a.model << '\n';
  return 0;
}

int cmd_predict(const Args& a) {
  if (a.model.empty() || a.log.empty()) throw ValidationError("--model and --log are required");
  const auto model = load_model(a.model);
  if (a.topk < 1 || a.topk > model.registry.size()) {
    throw ValidationError("--topk must be between 1 and " + std::to_string(model.registry.size()));
  }
  const auto p = predict(load_raw_log(a.log), model, a.topk);
  Sink sink(a.out);
  sink.records() << prediction_record(p, model.registry).dump() << '\n';
  for (std::size_t r = 0; r < p.topk.size(); ++r) {
    const auto id = p.topk[r];
    sink.summary() << (r + 1) << ". " << std::left << std::setw(34) << model.registry.name(id)
                   << fixed(p.proba[static_cast<Eigen::Index>(id)]) << '\n';
  }
  return 0;
}

int cmd_sift(const Args& a) {
  if (a.model.empty()) throw ValidationError("--model is required");
  const auto model = load_model(a.model);
  SiftConfig cfg{a.tau, a.merge};
  Sink sink(a.out);
  if (!a.log.empty()) {
    const auto raw = load_raw_log(a.log);
    const auto started = std::chrono::steady_clock::now();
    SegmentClassifier classify(model, raw);
    auto result = logsift(std::span<const std::string>(raw.lines), classify, cfg);
    result.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started);
    auto rec = sift_record(fs::path(a.log).filename().string(), raw.lines.size(), result, model.registry);
    nlohmann::json segments = nlohmann::json::array();
    for (const auto& seg : extract_segments(raw.lines, result)) {
      segments.push_back({{"start", seg.range.start}, {"end", seg.range.end}, {"lines", seg.lines}});
    }
    rec["segments"] = segments;
    sink.records() << rec.dump() << '\n';
    auto& s = sink.summary();
    s << "category " << model.registry.name(result.original_category) << ", kept " << result.covered_lines() << " of "
      << raw.lines.size() << " lines in " << result.ranges.size() << " segment(s), "
      << result.classifier_calls << " classifier calls, "
      << fixed(std::chrono::duration<double, std::milli>(result.elapsed).count(), 2) << " ms\n";
    for (const auto& seg : extract_segments(raw.lines, result)) {
      s << "--- lines " << seg.range.start << "-" << seg.range.end << '\n';
      for (const auto& line : seg.lines) s << line << '\n';
    }
    return 0;
  }
  if (a.corpus.empty()) throw ValidationError("sift needs --log or --corpus");
  const auto corpus = load_corpus(a.corpus, model.registry);
  const auto report = run_sift_sweep(corpus.examples, model, cfg);
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    const auto& e = corpus.examples[i];
    auto rec = sift_record(e.id, e.raw.lines.size(), report.results[i], model.registry);
    rec["true_category"] = model.registry.name(e.category);
    sink.records() << rec.dump() << '\n';
  }
  sink.records() << sift_sweep_record(report).dump() << '\n';
  auto& s = sink.summary();
  s << "logs              " << report.logs << '\n'
    << "reduction         " << fixed(report.mean_reduction) << " +/- " << fixed(report.std_reduction) << '\n'
    << "2-consistency     " << fixed(report.consistency_2) << '\n'
    << "10-consistency    " << fixed(report.consistency_10) << '\n'
    << "30-consistency    " << fixed(report.consistency_30) << '\n'
    << "mean elapsed ms   " << fixed(report.mean_elapsed_ms, 3) << '\n'
    << "mean calls        " << fixed(report.mean_calls, 1) << '\n';
  return 0;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

int cmd_evaluate(const Args& a) {
  const auto corpus = corpus_arg(a);
  const auto result = run_mccv(corpus.examples, mccv_config(a), corpus.registry);
  std::ostringstream records;
  for (const auto& it : result.iterations) records << iteration_record(it, corpus.registry).dump() << '\n';
  records << aggregate_record(result, corpus.registry).dump() << '\n';
  std::ostringstream table;
  print_metrics_table(table, result);
  if (a.out.empty()) {
    std::cout << records.str();
    std::cerr << table.str();
  } else {
    ensure_dir(a.out);
    std::ofstream(fs::path(a.out) / "mccv.jsonl", std::ios::binary) << records.str();
    std::ofstream(fs::path(a.out) / "summary.txt", std::ios::binary) << table.str();
    std::cout << table.str();
  }
  return 0;
}

int cmd_experiment_k(const Args& a) {
  const auto corpus = corpus_arg(a);
  const auto k_sets = parse_k_sets(a.k_sets, corpus.registry);
  const auto reports = run_incremental_k(corpus.examples, mccv_config(a), corpus.registry, k_sets);
  std::ostringstream records;
  for (const auto& r : reports) {
    for (const auto& it : r.result.iterations) {
      auto rec = iteration_record(it, r.registry);
      rec["k"] = r.registry.size();
      records << rec.dump() << '\n';
    }
    auto rec = aggregate_record(r.result, r.registry);
    rec["k"] = r.registry.size();
    records << rec.dump() << '\n';
  }
  const auto table = per_class_f1_table(reports, corpus.registry);
  if (a.out.empty()) {
    std::cout << records.str();
    std::cerr << table;
  } else {
    ensure_dir(a.out);
    std::ofstream(fs::path(a.out) / "incremental_k.jsonl", std::ios::binary) << records.str();
    std::ofstream(fs::path(a.out) / "per_class_f1.txt", std::ios::binary) << table;
    std::cout << table;
  }
  return 0;
}

// Values from --config fill every option that was not given on the command
// line.
void apply_config(CLI::App& sub, Args& a) {
  if (a.config.empty()) return;
  const auto cfg = load_experiment_config(a.config);
  auto unset = [&](const char* name) {
    const auto* opt = sub.get_option_no_throw(name);
    return opt == nullptr || opt->count() == 0;
  };
  if (unset("--corpus")) a.corpus = cfg.corpus.string();
  if (unset("--registry") && cfg.registry) a.registry = cfg.registry->string();
  if (unset("--shots")) a.shots = cfg.shots;
  if (unset("--iterations")) a.iterations = cfg.iterations;
  if (unset("--trials")) a.trials = cfg.trials;
  if (unset("--seed")) a.seed = cfg.seed;
  if (unset("--k-sets") && !cfg.k_sets.empty()) {
    a.k_sets.clear();
    for (const auto& k : cfg.k_sets) a.k_sets += (a.k_sets.empty() ? "" : ";") + k;
  }
  if (unset("--tau")) a.tau = cfg.tau;
  if (unset("--out")) a.out = cfg.output_dir.string();
  if (unset("--jobs")) a.jobs = cfg.jobs;
}

}  // namespace

int main(int argc, char** argv) {
  Args a;
  CLI::App app{"Few-shot CI failure triage: preprocessing, classification, sifting and evaluation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic labeled corpus");
  gen->add_option("--out", a.out, "Corpus file (JSON lines)")->required();
  gen->add_option("--registry-out", a.registry_out, "Also write the category registry here");
  gen->add_option("--seed", a.seed, "Generator seed");
  gen->add_option("--per-category", a.per_category, "Logs per category");
  gen->add_option("--min-lines", a.min_lines, "Shortest log");
  gen->add_option("--max-lines", a.max_lines, "Longest log");
  gen->add_option("--noise-rate", a.noise_rate, "Probability of an injected noise line");
  gen->add_option("--duplicate-rate", a.duplicate_rate, "Probability of repeating an earlier line");

  auto* pre = app.add_subcommand("preprocess", "Normalize a log file or every log of a corpus");
  pre->add_option("--log", a.log, "Raw log file");
  pre->add_option("--corpus", a.corpus, "Corpus file");
  pre->add_option("--registry", a.registry, "Category registry file");
  pre->add_option("--out", a.out, "Output file");

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  train->add_option("--corpus", a.corpus, "Corpus file")->required();
  train->add_option("--registry", a.registry, "Category registry file");
  train->add_option("--model", a.model, "Model file to write")->required();
  train->add_option("--seed", a.seed, "Seed");
  train->add_option("--shots", a.shots, "Shots per category; 0 trains on the whole corpus")->default_val(0);
  train->add_option("--lr", a.lr, "Encoder learning rate");
  train->add_option("--epochs", a.epochs, "Encoder epochs");
  train->add_option("--batch-size", a.batch_size, "Pairs per encoder batch");
  train->add_option("--max-iter", a.max_iter, "Head iterations");
  train->add_option("--pair-rounds", a.pair_rounds, "Pair sampling rounds");
  train->add_option("--hash-dim", a.hash_dim, "Feature hashing buckets");
  train->add_option("--embed-dim", a.embed_dim, "Embedding dimension");

  auto* pred = app.add_subcommand("predict", "Classify one log file");
  pred->add_option("--model", a.model, "Model file")->required();
  pred->add_option("--log", a.log, "Raw log file")->required();
  pred->add_option("--topk", a.topk, "Number of candidate categories");
  pred->add_option("--out", a.out, "Output file");

  auto* sift = app.add_subcommand("sift", "Isolate the lines that drive a prediction");
  sift->add_option("--model", a.model, "Model file")->required();
  sift->add_option("--log", a.log, "Raw log file");
  sift->add_option("--corpus", a.corpus, "Corpus file to sweep instead of a single log");
  sift->add_option("--tau", a.tau, "Minimum segment size");
  sift->add_flag("--merge", a.merge, "Fuse adjacent ranges");
  sift->add_option("--out", a.out, "Output file");

  auto add_mccv = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "Experiment config (JSON)");
    sub->add_option("--corpus", a.corpus, "Corpus file");
    sub->add_option("--registry", a.registry, "Category registry file");
    sub->add_option("--seed", a.seed, "Base seed");
    sub->add_option("--shots", a.shots, "Shots per category");
    sub->add_option("--iterations", a.iterations, "MCCV iterations");
    sub->add_option("--trials", a.trials, "Hyperparameter trials per iteration");
    sub->add_option("--pair-rounds", a.pair_rounds, "Pair sampling rounds");
    sub->add_option("--hash-dim", a.hash_dim, "Feature hashing buckets");
    sub->add_option("--embed-dim", a.embed_dim, "Embedding dimension");
    sub->add_option("--jobs", a.jobs, "Parallel iterations (0 = all cores)");
    sub->add_option("--tau", a.tau, "Minimum segment size (config compatibility)");
    sub->add_option("--out", a.out, "Output directory");
  };
  auto* eval = app.add_subcommand("evaluate", "Monte Carlo cross-validation with hyperparameter search");
  add_mccv(eval);
  auto* expk = app.add_subcommand("experiment-k", "MCCV for growing category subsets");
  add_mccv(expk);
  expk->add_option("--k-sets", a.k_sets, "Rank subsets, e.g. \"1-8;1-10;1-13\"");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_corpus(a);
    if (*pre) return cmd_preprocess(a);
    if (*train) return cmd_train(a);
    if (*pred) return cmd_predict(a);
    if (*sift) return cmd_sift(a);
    if (*eval) {
      apply_config(*eval, a);
      return cmd_evaluate(a);
    }
    if (*expk) {
      apply_config(*expk, a);
      return cmd_experiment_k(a);
    }
  } catch (const citriage::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
