#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "citriage/errors.hpp"
#include "citriage/log_preprocess.hpp"
#include "citriage/random.hpp"

namespace citriage {

using CategoryId = std::size_t;

/// Ordered set of failure categories. Ids are dense, 0..K-1, in rank order.
class CategoryRegistry {
 public:
  struct Entry {
    CategoryId id;
    std::string name;
    int rank;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  CategoryRegistry() = default;

  /// Builds a registry from names in rank order (rank = position + 1).
  explicit CategoryRegistry(const std::vector<std::string>& names) {
    for (const auto& name : names) add(name);
  }

  /// Appends a category; throws ValidationError on a duplicate name.
  CategoryId add(std::string name, std::optional<int> rank = std::nullopt) {
    if (name.empty()) throw ValidationError("category name must not be empty");
    if (by_name_.contains(name)) throw ValidationError("duplicate category '" + name + "'");
    const CategoryId id = entries_.size();
    by_name_.emplace(name, id);
    entries_.push_back({id, std::move(name), rank.value_or(static_cast<int>(id) + 1)});
    return id;
  }

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }

  [[nodiscard]] const std::string& name(CategoryId id) const {
    if (id >= entries_.size()) throw ValidationError("category id " + std::to_string(id) + " out of range");
    return entries_[id].name;
  }

  [[nodiscard]] std::optional<CategoryId> find(std::string_view name) const {
    const auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] CategoryId id(std::string_view name) const {
    if (auto found = find(name)) return *found;
    throw ValidationError("unknown category '" + std::string(name) + "'");
  }

  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  friend bool operator==(const CategoryRegistry& a, const CategoryRegistry& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, CategoryId> by_name_;
};

/// The 13 priority intermittent-failure categories, ranked by priority.
[[nodiscard]] inline CategoryRegistry default_registry() {
  return CategoryRegistry({"misconfigured_env_variable", "job_execution_timeout", "dependency_installation_failure",
                           "runner_pod_waiting_timeout", "api_gateway_deployment_error",
                           "container_registry_server_error", "git_transient_error", "flaky_ui_test",
                           "external_file_invalid_format", "host_resolution_failure", "runner_image_pull_failure",
                           "remote_call_timeout", "helm_resource_error"});
}

struct LabeledExample {
  std::string id;
  RawLog raw;
  CategoryId category = 0;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct Corpus {
  CategoryRegistry registry;
  std::vector<LabeledExample> examples;
};

struct SplitSpec {
  double learn_frac = 0.25;
  double valid_frac = 0.25;
  double test_frac = 0.50;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<LabeledExample> learn;
  std::vector<LabeledExample> valid;
  std::vector<LabeledExample> test;
};

struct FewShotConfig {
  std::size_t shots_per_category = 8;
  std::uint64_t seed = 0;
};

/// Reads a registry file: one category name per line, in rank order. Blank
/// lines and lines starting with '#' are ignored.
[[nodiscard]] inline CategoryRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry file '" + path.string() + "'");
  CategoryRegistry registry;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t");
    try {
      registry.add(line.substr(first, last - first + 1));
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return registry;
}

inline void save_registry(const std::filesystem::path& path, const CategoryRegistry& registry) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write registry file '" + path.string() + "'");
  for (const auto& e : registry.entries()) out << e.name << '\n';
}

/// Parses one corpus record. `record_no` is 1-based and only used in errors.
[[nodiscard]] inline nlohmann::json parse_record(std::string_view line, std::size_t record_no) {
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("record " + std::to_string(record_no) + ": invalid JSON: " + e.what());
  }
  if (!record.is_object()) throw ParseError("record " + std::to_string(record_no) + ": expected an object");
  for (const char* field : {"id", "category", "log"}) {
    if (!record.contains(field)) {
      throw ParseError("record " + std::to_string(record_no) + ": missing field \"" + field + "\"");
    }
    if (!record[field].is_string()) {
      throw ParseError("record " + std::to_string(record_no) + ": field \"" + field + "\" must be a string");
    }
  }
  return record;
}

/// Loads a line-delimited corpus. Without an explicit registry the registry
/// is built from labels in order of first appearance; with one, unknown
/// labels are rejected.
[[nodiscard]] inline Corpus load_corpus(const std::filesystem::path& path,
                                        const std::optional<CategoryRegistry>& registry = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file '" + path.string() + "'");
  Corpus corpus;
  if (registry) corpus.registry = *registry;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto record = parse_record(line, line_no);
    const auto label = record["category"].get<std::string>();
    auto id = corpus.registry.find(label);
    if (!id) {
      if (registry) {
        throw ValidationError("record " + std::to_string(line_no) + ": unknown category '" + label + "'");
      }
      id = corpus.registry.add(label);
    }
    corpus.examples.push_back({record["id"].get<std::string>(), split_lines(record["log"].get<std::string>()), *id});
  }
  return corpus;
}

/// Reads a plain-text log file, one raw line per line.
[[nodiscard]] inline RawLog load_raw_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open log file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return split_lines(text.str());
}

[[nodiscard]] inline std::string corpus_record(const LabeledExample& example, const CategoryRegistry& registry) {
  nlohmann::ordered_json record;
  record["id"] = example.id;
  record["category"] = registry.name(example.category);
  record["log"] = join_lines(example.raw.lines);
  return record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline void save_corpus(const std::filesystem::path& path, const CategoryRegistry& registry,
                        const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file '" + path.string() + "'");
  for (const auto& example : examples) out << corpus_record(example, registry) << '\n';
}

/// Per-category counts indexed by category id.
[[nodiscard]] inline std::vector<std::size_t> category_counts(const std::vector<LabeledExample>& data,
                                                              std::size_t num_categories) {
  std::vector<std::size_t> counts(num_categories, 0);
  for (const auto& example : data) {
    if (example.category >= num_categories) {
      throw ValidationError("example '" + example.id + "' has category id " + std::to_string(example.category) +
                            " outside the registry");
    }
    ++counts[example.category];
  }
  return counts;
}

/// Categories with fewer than 4N examples overall. With a 25% learning
/// split these cannot reliably supply N shots per iteration.
[[nodiscard]] inline std::vector<std::string> check_4n(const std::vector<LabeledExample>& data, std::size_t shots,
                                                       const CategoryRegistry& registry) {
  const auto counts = category_counts(data, registry.size());
  std::vector<std::string> excluded;
  for (const auto& e : registry.entries()) {
    if (counts[e.id] < 4 * shots) excluded.push_back(e.name);
  }
  return excluded;
}

namespace detail {

[[nodiscard]] inline std::vector<std::vector<std::size_t>> indices_by_category(const std::vector<LabeledExample>& data,
                                                                               std::size_t num_categories) {
  std::vector<std::vector<std::size_t>> groups(num_categories);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].category >= num_categories) {
      throw ValidationError("example '" + data[i].id + "' has category id " + std::to_string(data[i].category) +
                            " outside the registry");
    }
    groups[data[i].category].push_back(i);
  }
  return groups;
}

}  // namespace detail

/// Stratified random split. Within each category examples are shuffled by
/// the seed and cut with floor rounding; the remainder goes to test.
[[nodiscard]] inline Split stratified_split(const std::vector<LabeledExample>& data, const SplitSpec& spec,
                                            const CategoryRegistry& registry) {
  if (spec.learn_frac < 0 || spec.valid_frac < 0 || spec.test_frac < 0 ||
      std::abs(spec.learn_frac + spec.valid_frac + spec.test_frac - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be non-negative and sum to 1");
  }
  auto groups = detail::indices_by_category(data, registry.size());
  Rng rng(spec.seed);
  Split split;
  for (CategoryId c = 0; c < groups.size(); ++c) {
    auto& idx = groups[c];
    if (idx.empty()) continue;
    if (idx.size() < 4) {
      throw ValidationError("category '" + registry.name(c) + "' has " + std::to_string(idx.size()) +
                            " examples; at least 4 are needed to split");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_learn = static_cast<std::size_t>(std::floor(n * spec.learn_frac + 1e-9));
    const auto n_valid = static_cast<std::size_t>(std::floor(n * spec.valid_frac + 1e-9));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& dest = k < n_learn ? split.learn : (k < n_learn + n_valid ? split.valid : split.test);
      dest.push_back(data[idx[k]]);
    }
  }
  return split;
}

/// Draws exactly N examples of every registry category without replacement.
[[nodiscard]] inline std::vector<LabeledExample> sample_shots(const std::vector<LabeledExample>& learn,
                                                              const FewShotConfig& cfg,
                                                              const CategoryRegistry& registry) {
  if (cfg.shots_per_category == 0) throw ValidationError("shots per category must be at least 1");
  auto groups = detail::indices_by_category(learn, registry.size());
  Rng rng(cfg.seed);
  std::vector<LabeledExample> out;
  out.reserve(cfg.shots_per_category * registry.size());
  for (CategoryId c = 0; c < groups.size(); ++c) {
    auto& idx = groups[c];
    if (idx.size() < cfg.shots_per_category) {
      throw ValidationError("category '" + registry.name(c) + "' has " + std::to_string(idx.size()) +
                            " learning examples; " + std::to_string(cfg.shots_per_category) + " shots requested");
    }
    // Partial Fisher-Yates: the first N slots end up a uniform sample.
    for (std::size_t k = 0; k < cfg.shots_per_category; ++k) {
      const std::size_t pick = k + uniform_index(rng, idx.size() - k);
      std::swap(idx[k], idx[pick]);
      out.push_back(learn[idx[k]]);
    }
  }
  return out;
}

/// Keeps only the examples of the given categories and relabels them into a
/// new registry that preserves the original rank order.
[[nodiscard]] inline Corpus restrict_categories(const std::vector<LabeledExample>& data,
                                                const CategoryRegistry& registry,
                                                const std::vector<CategoryId>& subset) {
  std::vector<CategoryId> sorted = subset;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  Corpus out;
  std::vector<std::optional<CategoryId>> remap(registry.size());
  for (const CategoryId c : sorted) {
    const auto& entry = registry.entries().at(c);
    remap[c] = out.registry.add(entry.name, entry.rank);
  }
  for (const auto& example : data) {
    if (example.category < remap.size() && remap[example.category]) {
      out.examples.push_back({example.id, example.raw, *remap[example.category]});
    }
  }
  return out;
}

}  // namespace citriage
