#pragma once

// JSON records for predictions, metrics, MCCV runs and sift results, plus
// the experiment config file and the category-subset syntax.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "citriage/dataset.hpp"
#include "citriage/errors.hpp"
#include "citriage/evaluation.hpp"
#include "citriage/logsift.hpp"
#include "citriage/metrics.hpp"
#include "citriage/pipeline.hpp"

namespace citriage {

using nlohmann::json;

[[nodiscard]] inline json metrics_record(const MetricsReport& r, const CategoryRegistry& registry) {
  json per_class = json::object();
  for (std::size_t k = 0; k < r.per_class_f1.size() && k < registry.size(); ++k) {
    per_class[registry.name(k)] = r.per_class_f1[k];
  }
  return {{"macro_f1", r.macro_f1}, {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall}, {"mcc", r.mcc},
          {"top1", r.top1}, {"top2", r.top2}, {"top3", r.top3}, {"per_class_f1", per_class}};
}

[[nodiscard]] inline json hyperparams_record(const HyperParams& hp) {
  return {{"body_learning_rate", hp.body_learning_rate},
          {"epochs", hp.epochs},
          {"batch_size", hp.batch_size},
          {"max_iter", hp.max_iter}};
}

[[nodiscard]] inline json iteration_record(const IterationSummary& it, const CategoryRegistry& registry) {
  json trials = json::array();
  for (const auto& t : it.trials) {
    auto rec = hyperparams_record(t.params);
    rec["valid_macro_f1"] = t.valid_macro_f1;
    trials.push_back(std::move(rec));
  }
  return {{"type", "iteration"},     {"iteration", it.iteration},   {"seed", it.seed},
          {"train_size", it.train_size}, {"valid_size", it.valid_size}, {"test_size", it.test_size},
          {"trials", trials},        {"best_trial", it.best_trial}, {"test", metrics_record(it.test, registry)}};
}

[[nodiscard]] inline json aggregate_record(const MccvResult& r, const CategoryRegistry& registry) {
  json categories = json::array();
  for (const auto& name : registry.names()) categories.push_back(name);
  return {{"type", "aggregate"},
          {"iterations", r.iterations.size()},
          {"categories", categories},
          {"mean", metrics_record(r.aggregate.mean, registry)},
          {"std", metrics_record(r.aggregate.std, registry)},
          {"std_kind", "population"}};
}

[[nodiscard]] inline json prediction_record(const Prediction& p, const CategoryRegistry& registry) {
  json topk = json::array();
  for (const auto id : p.topk) topk.push_back(registry.name(id));
  json proba = json::object();
  for (Eigen::Index k = 0; k < p.proba.size(); ++k) proba[registry.name(static_cast<CategoryId>(k))] = p.proba[k];
  return {{"category", registry.name(p.category)}, {"topk", topk}, {"probabilities", proba}};
}

[[nodiscard]] inline json sift_record(std::string_view job_id, std::size_t log_lines, const SiftResult& r,
                                      const CategoryRegistry& registry) {
  json ranges = json::array();
  for (const auto& range : r.ranges) ranges.push_back({range.start, range.end});
  return {{"job_id", job_id},
          {"predicted_category", registry.name(r.original_category)},
          {"ranges", ranges},
          {"log_lines", log_lines},
          {"covered_lines", r.covered_lines()},
          {"reduction_ratio", sift_reduction_ratio(log_lines, r)},
          {"classifier_calls", r.classifier_calls},
          {"elapsed_ms", std::chrono::duration<double, std::milli>(r.elapsed).count()}};
}

[[nodiscard]] inline json sift_sweep_record(const SiftSweepReport& r) {
  return {{"type", "sift_sweep"},
          {"logs", r.logs},
          {"mean_reduction", r.mean_reduction},
          {"std_reduction", r.std_reduction},
          {"consistency_2", r.consistency_2},
          {"consistency_10", r.consistency_10},
          {"consistency_30", r.consistency_30},
          {"mean_elapsed_ms", r.mean_elapsed_ms},
          {"mean_classifier_calls", r.mean_calls}};
}

namespace detail {

[[nodiscard]] inline int parse_rank(std::string_view text, std::string_view whole) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || value < 1) {
    throw ValidationError("bad category rank '" + std::string(text) + "' in '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace detail

/// Parses one subset of ranks such as "1-8" or "1,3,5-7" into category ids.
[[nodiscard]] inline std::vector<CategoryId> parse_rank_set(std::string_view text, const CategoryRegistry& registry) {
  std::vector<CategoryId> ids;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const auto item = text.substr(pos, comma - pos);
    const auto dash = item.find('-');
    const int lo = detail::parse_rank(item.substr(0, dash), text);
    const int hi = dash == std::string_view::npos ? lo : detail::parse_rank(item.substr(dash + 1), text);
    if (hi < lo) throw ValidationError("empty rank range in '" + std::string(text) + "'");
    for (int rank = lo; rank <= hi; ++rank) {
      const auto& entries = registry.entries();
      const auto it = std::find_if(entries.begin(), entries.end(), [rank](const auto& e) { return e.rank == rank; });
      if (it == entries.end()) throw ValidationError("no category with rank " + std::to_string(rank));
      if (std::find(ids.begin(), ids.end(), it->id) == ids.end()) ids.push_back(it->id);
    }
    pos = comma + 1;
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Parses "1-8;1-10;1-13" into one id subset per ';'-separated group.
[[nodiscard]] inline std::vector<std::vector<CategoryId>> parse_k_sets(std::string_view text,
                                                                       const CategoryRegistry& registry) {
  std::vector<std::vector<CategoryId>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto semi = std::min(text.find(';', pos), text.size());
    out.push_back(parse_rank_set(text.substr(pos, semi - pos), registry));
    pos = semi + 1;
  }
  return out;
}

struct ExperimentConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> registry;
  std::size_t shots = 8;
  std::size_t iterations = 30;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  std::vector<std::string> k_sets;
  std::size_t tau = 2;
  std::filesystem::path output_dir = ".";
  std::size_t jobs = 1;
};

/// Reads a JSON experiment config. Relative paths resolve against the
/// config file's directory.
[[nodiscard]] inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("experiment config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("experiment config " + path.string() + ": expected a JSON object");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
  };
  ExperimentConfig cfg;
  try {
    if (!j.contains("corpus")) throw ParseError("experiment config " + path.string() + ": missing field 'corpus'");
    cfg.corpus = resolve(j.at("corpus").get<std::string>());
    if (j.contains("registry")) cfg.registry = resolve(j.at("registry").get<std::string>());
    cfg.shots = j.value("shots", cfg.shots);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.trials = j.value("trials", cfg.trials);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("k_sets")) {
      const auto& ks = j.at("k_sets");
      if (ks.is_string()) {
        cfg.k_sets.push_back(ks.get<std::string>());
      } else {
        cfg.k_sets = ks.get<std::vector<std::string>>();
      }
    }
    cfg.tau = j.value("tau", cfg.tau);
    if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
    cfg.jobs = j.value("jobs", cfg.jobs);
  } catch (const json::exception& e) {
    throw ParseError("experiment config " + path.string() + ": " + e.what());
  }
  return cfg;
}

}  // namespace citriage
