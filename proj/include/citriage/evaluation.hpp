#pragma once

// Monte Carlo cross-validation with random hyperparameter search, plus the
// incremental-K and sift-sweep experiment drivers.
//
// Seeds for iteration i are derived from s = base_seed + i:
//   split            s
//   shot sample      derive_seed(s, 11)
//   training         derive_seed(s, 12)       (shared by every trial)
//   trial t params   derive_seed(s, 100 + t)

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "citriage/dataset.hpp"
#include "citriage/errors.hpp"
#include "citriage/logsift.hpp"
#include "citriage/metrics.hpp"
#include "citriage/pipeline.hpp"
#include "citriage/random.hpp"

namespace citriage {

inline constexpr double kMinBodyLearningRate = 1e-6;
inline constexpr double kMaxBodyLearningRate = 1e-3;

struct HyperParams {
  double body_learning_rate = 1e-3;
  int epochs = 1;
  std::size_t batch_size = 4;
  int max_iter = 100;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Learning rate log-uniform in [1e-6, 1e-3]; epochs, batch size and head
/// iterations uniform over {1,2}, {2,4,8} and {50,100,...,300}.
[[nodiscard]] inline HyperParams sample_hyperparams(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> exponent(std::log10(kMinBodyLearningRate), std::log10(kMaxBodyLearningRate));
  HyperParams hp;
  hp.body_learning_rate = std::clamp(std::pow(10.0, exponent(rng)), kMinBodyLearningRate, kMaxBodyLearningRate);
  hp.epochs = 1 + static_cast<int>(uniform_index(rng, 2));
  hp.batch_size = std::size_t{2} << uniform_index(rng, 3);
  hp.max_iter = 50 * (1 + static_cast<int>(uniform_index(rng, 6)));
  return hp;
}

struct MccvConfig {
  std::size_t iterations = 30;
  std::size_t trials = 5;
  std::size_t shots = 8;
  SplitSpec split;
  std::uint64_t base_seed = 0;
  std::size_t pair_rounds = 20;
  PipelineOptions pipeline;
  /// Worker threads for independent iterations; 0 means hardware
  /// concurrency.
  std::size_t jobs = 1;
};

inline void validate(const MccvConfig& cfg) {
  if (cfg.iterations < 1) throw ValidationError("MCCV needs at least one iteration");
  if (cfg.trials < 1) throw ValidationError("MCCV needs at least one trial");
  if (cfg.shots < 1) throw ValidationError("MCCV needs at least one shot per category");
}

/// Trains and scores the reference pipeline. Any type with the same two
/// members can stand in for it.
struct PipelineLearner {
  using Model = PipelineModel;

  PipelineOptions options;
  std::size_t pair_rounds = 20;

  [[nodiscard]] Model fit(std::span<const ProcessedLog> logs, std::span<const CategoryId> labels,
                          const HyperParams& hp, std::uint64_t seed, const CategoryRegistry& registry) const {
    TrainConfig tc;
    tc.body_learning_rate = hp.body_learning_rate;
    tc.epochs = hp.epochs;
    tc.batch_size = hp.batch_size;
    tc.pair_rounds = pair_rounds;
    tc.seed = seed;
    return train_pipeline_processed(logs, labels, tc, hp.max_iter, registry, options);
  }

  [[nodiscard]] std::vector<ProbVector> predict_proba(const Model& m, std::span<const ProcessedLog> logs) const {
    std::vector<ProbVector> out;
    out.reserve(logs.size());
    for (const auto& log : logs) out.push_back(predict_processed(log, m).proba);
    return out;
  }
};

struct TrialResult {
  HyperParams params;
  double valid_macro_f1 = 0.0;
};

struct IterationSummary {
  std::size_t iteration = 0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t valid_size = 0;
  std::size_t test_size = 0;
  std::vector<TrialResult> trials;
  std::size_t best_trial = 0;
  MetricsReport test;
};

template <typename Model>
struct IterationOutcome {
  IterationSummary summary;
  Model model;
};

struct MccvResult {
  AggregateReport aggregate;
  std::vector<IterationSummary> iterations;
};

namespace detail {

struct PreparedSet {
  std::vector<ProcessedLog> logs;
  std::vector<CategoryId> labels;
};

[[nodiscard]] inline PreparedSet prepare(const std::vector<LabeledExample>& examples, const PreprocessConfig& cfg) {
  PreparedSet out;
  out.logs.reserve(examples.size());
  out.labels.reserve(examples.size());
  for (const auto& e : examples) {
    out.logs.push_back(preprocess_log(e.raw, cfg));
    out.labels.push_back(e.category);
  }
  return out;
}

inline void require_4n(const std::vector<LabeledExample>& data, std::size_t shots, const CategoryRegistry& registry) {
  const auto excluded = check_4n(data, shots, registry);
  if (excluded.empty()) return;
  std::string msg = "categories with fewer than " + std::to_string(4 * shots) + " examples:";
  for (const auto& name : excluded) msg += " " + name;
  throw ValidationError(msg);
}

}  // namespace detail

/// Split, sample shots, search `trials` hyperparameter draws on the shared
/// shot sample, keep the trial with the best validation Macro F1 (earliest
/// on ties) and score that model on the test split.
template <typename Learner>
[[nodiscard]] IterationOutcome<typename Learner::Model> mccv_iteration(const std::vector<LabeledExample>& data,
                                                                       std::size_t i, const MccvConfig& cfg,
                                                                       const CategoryRegistry& registry,
                                                                       const Learner& learner) {
  validate(cfg);
  detail::require_4n(data, cfg.shots, registry);
  const std::uint64_t seed = cfg.base_seed + i;
  SplitSpec split_spec = cfg.split;
  split_spec.seed = seed;
  const auto split = stratified_split(data, split_spec, registry);
  const auto shots = sample_shots(split.learn, {cfg.shots, derive_seed(seed, 11)}, registry);

  const auto& pre = cfg.pipeline.preprocess;
  const auto train = detail::prepare(shots, pre);
  const auto valid = detail::prepare(split.valid, pre);
  const auto test = detail::prepare(split.test, pre);

  IterationSummary summary;
  summary.iteration = i;
  summary.seed = seed;
  summary.train_size = train.logs.size();
  summary.valid_size = valid.logs.size();
  summary.test_size = test.logs.size();

  std::optional<typename Learner::Model> best;
  double best_f1 = -1.0;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const auto hp = sample_hyperparams(derive_seed(seed, 100 + t));
    auto model = learner.fit(train.logs, train.labels, hp, derive_seed(seed, 12), registry);
    double f1 = 0.0;
    if (!valid.logs.empty()) {
      const auto probas = learner.predict_proba(model, valid.logs);
      f1 = evaluate_predictions(probas, valid.labels, registry.size()).macro_f1;
    }
    summary.trials.push_back({hp, f1});
    if (f1 > best_f1) {
      best_f1 = f1;
      summary.best_trial = t;
      best = std::move(model);
    }
  }
  if (test.logs.empty()) throw ValidationError("MCCV iteration has an empty test split");
  const auto probas = learner.predict_proba(*best, test.logs);
  summary.test = evaluate_predictions(probas, test.labels, registry.size());
  return {std::move(summary), std::move(*best)};
}

[[nodiscard]] inline IterationOutcome<PipelineModel> mccv_iteration(const std::vector<LabeledExample>& data,
                                                                    std::size_t i, const MccvConfig& cfg,
                                                                    const CategoryRegistry& registry) {
  return mccv_iteration(data, i, cfg, registry, PipelineLearner{cfg.pipeline, cfg.pair_rounds});
}

/// Runs task(0..n-1) on up to `jobs` threads and returns results by index.
/// The first exception (by index) is rethrown after all workers finish.
template <typename Task>
[[nodiscard]] auto run_indexed(std::size_t n, std::size_t jobs, Task&& task) {
  using Result = std::invoke_result_t<Task&, std::size_t>;
  std::vector<std::optional<Result>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(task(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<Result> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// i_max independent iterations aggregated fieldwise (mean and population
/// std). Models are discarded; only per-iteration summaries are kept.
template <typename Learner>
[[nodiscard]] MccvResult run_mccv(const std::vector<LabeledExample>& data, const MccvConfig& cfg,
                                  const CategoryRegistry& registry, const Learner& learner) {
  validate(cfg);
  detail::require_4n(data, cfg.shots, registry);
  MccvResult out;
  out.iterations = run_indexed(cfg.iterations, cfg.jobs, [&](std::size_t i) {
    return mccv_iteration(data, i, cfg, registry, learner).summary;
  });
  std::vector<MetricsReport> reports;
  reports.reserve(out.iterations.size());
  for (const auto& it : out.iterations) reports.push_back(it.test);
  out.aggregate = aggregate(reports);
  return out;
}

[[nodiscard]] inline MccvResult run_mccv(const std::vector<LabeledExample>& data, const MccvConfig& cfg,
                                         const CategoryRegistry& registry) {
  return run_mccv(data, cfg, registry, PipelineLearner{cfg.pipeline, cfg.pair_rounds});
}

struct KReport {
  CategoryRegistry registry;  // the subset, relabeled in rank order
  MccvResult result;
};

/// One independent MCCV run per category subset, each on the examples of
/// that subset only.
template <typename Learner>
[[nodiscard]] std::vector<KReport> run_incremental_k(const std::vector<LabeledExample>& data, const MccvConfig& cfg,
                                                     const CategoryRegistry& registry,
                                                     const std::vector<std::vector<CategoryId>>& k_sets,
                                                     const Learner& learner) {
  if (k_sets.empty()) throw ValidationError("no category subsets given");
  std::vector<KReport> out;
  for (const auto& subset : k_sets) {
    for (const auto c : subset) {
      if (c >= registry.size()) throw ValidationError("category id " + std::to_string(c) + " outside the registry");
    }
    auto restricted = restrict_categories(data, registry, subset);
    if (restricted.registry.size() < 2) throw ValidationError("a category subset needs at least 2 categories");
    auto result = run_mccv(restricted.examples, cfg, restricted.registry, learner);
    out.push_back({std::move(restricted.registry), std::move(result)});
  }
  return out;
}

[[nodiscard]] inline std::vector<KReport> run_incremental_k(const std::vector<LabeledExample>& data,
                                                            const MccvConfig& cfg, const CategoryRegistry& registry,
                                                            const std::vector<std::vector<CategoryId>>& k_sets) {
  return run_incremental_k(data, cfg, registry, k_sets, PipelineLearner{cfg.pipeline, cfg.pair_rounds});
}

/// Mean per-class F1 for each subset, one row per category of `registry`
/// and one column per subset; "-" where a category is not in the subset.
[[nodiscard]] inline std::string per_class_f1_table(const std::vector<KReport>& reports,
                                                    const CategoryRegistry& registry) {
  std::size_t width = 8;
  for (const auto& e : registry.entries()) width = std::max(width, e.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "category";
  for (const auto& r : reports) out << "  " << std::right << std::setw(7) << ("K=" + std::to_string(r.registry.size()));
  out << '\n';
  auto row = [&](const std::string& label, auto&& cell) {
    out << std::left << std::setw(static_cast<int>(width)) << label;
    for (const auto& r : reports) out << "  " << std::right << std::setw(7) << cell(r);
    out << '\n';
  };
  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << v;
    return s.str();
  };
  for (const auto& e : registry.entries()) {
    row(e.name, [&](const KReport& r) -> std::string {
      const auto id = r.registry.find(e.name);
      return id ? fmt(r.result.aggregate.mean.per_class_f1[*id]) : "-";
    });
  }
  row("macro_f1", [&](const KReport& r) { return fmt(r.result.aggregate.mean.macro_f1); });
  return out.str();
}

struct SiftSweepReport {
  std::size_t logs = 0;
  double mean_reduction = 0.0;
  double std_reduction = 0.0;
  double consistency_2 = 0.0;
  double consistency_10 = 0.0;
  double consistency_30 = 0.0;
  double mean_elapsed_ms = 0.0;
  double mean_calls = 0.0;
  std::vector<SiftResult> results;
  std::vector<double> reductions;
};

/// Sifts every log. `make_classifier(raw_log)` returns the segment
/// classifier for one log; its construction counts toward elapsed time.
template <typename Factory>
[[nodiscard]] SiftSweepReport run_sift_sweep(const std::vector<LabeledExample>& logs, Factory&& make_classifier,
                                             const SiftConfig& cfg) {
  if (logs.empty()) throw ValidationError("sift sweep over an empty test set");
  SiftSweepReport out;
  out.logs = logs.size();
  double elapsed_ms = 0.0;
  double calls = 0.0;
  for (const auto& example : logs) {
    const auto started = std::chrono::steady_clock::now();
    auto classifier = make_classifier(example.raw);
    auto result = logsift(std::span<const std::string>(example.raw.lines), classifier, cfg);
    result.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started);
    elapsed_ms += std::chrono::duration<double, std::milli>(result.elapsed).count();
    calls += static_cast<double>(result.classifier_calls);
    out.reductions.push_back(sift_reduction_ratio(example.raw.lines.size(), result));
    out.results.push_back(std::move(result));
  }
  const auto n = static_cast<double>(logs.size());
  double sum = 0.0;
  for (const double r : out.reductions) sum += r;
  out.mean_reduction = sum / n;
  double sq = 0.0;
  for (const double r : out.reductions) sq += (r - out.mean_reduction) * (r - out.mean_reduction);
  out.std_reduction = std::sqrt(sq / n);
  out.consistency_2 = n_consistency(out.results, 2);
  out.consistency_10 = n_consistency(out.results, 10);
  out.consistency_30 = n_consistency(out.results, 30);
  out.mean_elapsed_ms = elapsed_ms / n;
  out.mean_calls = calls / n;
  return out;
}

[[nodiscard]] inline SiftSweepReport run_sift_sweep(const std::vector<LabeledExample>& logs, const PipelineModel& m,
                                                    const SiftConfig& cfg) {
  return run_sift_sweep(logs, [&m](const RawLog& log) { return SegmentClassifier(m, log); }, cfg);
}

}  // namespace citriage
