#pragma once

// End-to-end predictor: preprocess, encode, classify. Also owns the model
// file format.
//
// Model file (text, one record per line, doubles printed with 17
// significant digits so they read back bit-exactly):
//
//   citriage-model <format_version>
//   registry <K>
//   category <rank> <name>                  (K lines, id order)
//   placeholder <kind> <token>              (6 lines)
//   preserve_http_status <0|1>
//   preserve_exit_codes <0|1>
//   max_chars <n>
//   truncate <0|1>
//   encoder <hash_dim> <embed_dim> <hash_seed> <stored_rows>
//   row <bucket> <v_1> ... <v_D>            (stored_rows lines, ascending bucket)
//   head <K> <D> <l2_lambda>
//   bias <b_1> ... <b_K>
//   weights <w_k1> ... <w_kD>               (K lines)
//   end
//
// Projection rows that are not stored take their seeded initial value.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "citriage/dataset.hpp"
#include "citriage/encoder.hpp"
#include "citriage/errors.hpp"
#include "citriage/head.hpp"
#include "citriage/log_preprocess.hpp"

namespace citriage {

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::string_view kModelMagic = "citriage-model";

struct PipelineModel {
  PreprocessConfig preprocess;
  EncoderModel encoder;
  HeadModel head;
  CategoryRegistry registry;
  int format_version = kModelFormatVersion;

  friend bool operator==(const PipelineModel&, const PipelineModel&) = default;
};

struct Prediction {
  CategoryId category = 0;
  ProbVector proba;
  std::vector<CategoryId> topk;
};

/// Shape of a freshly trained pipeline.
struct PipelineOptions {
  std::size_t hash_dim = std::size_t{1} << 18;
  std::size_t embed_dim = 256;
  double l2_lambda = 1e-4;
  PreprocessConfig preprocess;
};

/// Trains on logs that are already preprocessed with `options.preprocess`.
[[nodiscard]] inline PipelineModel train_pipeline_processed(std::span<const ProcessedLog> logs,
                                                            std::span<const CategoryId> labels,
                                                            const TrainConfig& cfg, int max_iter,
                                                            const CategoryRegistry& registry,
                                                            const PipelineOptions& options = {}) {
  if (logs.empty()) throw ValidationError("cannot train on an empty training set");
  if (registry.empty()) throw ValidationError("cannot train with an empty category registry");
  PipelineModel model;
  model.preprocess = options.preprocess;
  model.registry = registry;
  model.encoder = finetune(make_encoder(options.hash_dim, options.embed_dim, derive_seed(cfg.seed, 0)), logs, labels, cfg);
  std::vector<Embedding> embeddings;
  embeddings.reserve(logs.size());
  for (const auto& log : logs) embeddings.push_back(encode(log, model.encoder));
  model.head = head_train(embeddings, labels, max_iter, make_head(registry.size(), options.embed_dim, options.l2_lambda),
                          &registry);
  return model;
}

/// Preprocess, fine-tune the encoder, embed, then fit the head.
[[nodiscard]] inline PipelineModel train_pipeline(const std::vector<LabeledExample>& train, const TrainConfig& cfg,
                                                  int max_iter, const CategoryRegistry& registry,
                                                  const PipelineOptions& options = {}) {
  if (train.empty()) throw ValidationError("cannot train on an empty training set");
  std::vector<ProcessedLog> logs;
  std::vector<CategoryId> labels;
  logs.reserve(train.size());
  labels.reserve(train.size());
  for (const auto& example : train) {
    logs.push_back(preprocess_log(example.raw, options.preprocess));
    labels.push_back(example.category);
  }
  return train_pipeline_processed(logs, labels, cfg, max_iter, registry, options);
}

[[nodiscard]] inline Prediction predict_processed(const ProcessedLog& log, const PipelineModel& m, std::size_t k = 1) {
  Prediction out;
  out.proba = head_predict_proba(encode(log, m.encoder), m.head);
  out.category = argmax_category(out.proba);
  out.topk = topk_categories(out.proba, std::clamp<std::size_t>(k, 1, m.registry.size()));
  return out;
}

/// argmax and top-k of the head over the encoded, preprocessed log. k is
/// clamped to [1, K].
[[nodiscard]] inline Prediction predict(const RawLog& log, const PipelineModel& m, std::size_t k = 1) {
  return predict_processed(preprocess_log(log, m.preprocess), m, k);
}

/// Classifies contiguous segments of one raw log. Each line is
/// preprocessed once up front; a segment then only pays for deduplication,
/// encoding and the head.
class SegmentClassifier {
 public:
  SegmentClassifier(const PipelineModel& model, const RawLog& log) : model_(&model), log_(&log) {
    processed_.reserve(log.lines.size());
    for (const auto& line : log.lines) processed_.push_back(preprocess_line(line, model.preprocess));
  }

  [[nodiscard]] CategoryId classify(std::size_t start, std::size_t count) const {
    std::vector<std::string> lines(processed_.begin() + static_cast<std::ptrdiff_t>(start),
                                   processed_.begin() + static_cast<std::ptrdiff_t>(start + count));
    return predict_processed(finalize_lines(std::move(lines), model_->preprocess), *model_).category;
  }

  /// Segments that are views into the bound log use the cache; anything else
  /// is preprocessed from scratch.
  [[nodiscard]] CategoryId operator()(std::span<const std::string> segment) const {
    const auto* base = log_->lines.data();
    if (segment.empty() ||
        (segment.data() >= base && segment.data() + segment.size() <= base + log_->lines.size())) {
      const auto start = segment.empty() ? 0 : static_cast<std::size_t>(segment.data() - base);
      return classify(start, segment.size());
    }
    return predict(RawLog{{segment.begin(), segment.end()}}, *model_).category;
  }

 private:
  const PipelineModel* model_;
  const RawLog* log_;
  std::vector<std::string> processed_;
};

namespace detail {

inline void write_double(std::ostream& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.write(buf, n);
}

inline void write_row(std::ostream& out, std::string_view tag, const double* values, std::size_t n) {
  out << tag;
  for (std::size_t i = 0; i < n; ++i) {
    out << ' ';
    write_double(out, values[i]);
  }
  out << '\n';
}

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  // Next line split into a tag and the remainder.
  std::string_view expect(std::string_view tag) {
    if (!std::getline(in_, line_)) fail("unexpected end of file, expected '" + std::string(tag) + "'");
    ++line_no_;
    const auto space = line_.find(' ');
    const std::string_view head = std::string_view(line_).substr(0, space);
    if (head != tag) fail("expected '" + std::string(tag) + "', found '" + std::string(head) + "'");
    return space == std::string::npos ? std::string_view{} : std::string_view(line_).substr(space + 1);
  }

  template <typename T>
  T parse_number(std::string_view& rest) {
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    const auto end = rest.find(' ');
    const std::string_view field = rest.substr(0, end);
    if (field.empty()) fail("missing numeric field");
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
      // strtod rather than from_chars: libstdc++ 11 lacks floating from_chars
      // on some targets, and strtod round-trips %.17g exactly.
      const std::string copy(field);
      char* stop = nullptr;
      value = std::strtod(copy.c_str(), &stop);
      if (stop != copy.c_str() + copy.size()) fail("bad number '" + copy + "'");
    } else {
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc{} || ptr != field.data() + field.size()) fail("bad integer '" + std::string(field) + "'");
    }
    rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    return value;
  }

  void expect_consumed(std::string_view rest) {
    if (rest.find_first_not_of(' ') != std::string_view::npos) fail("trailing data");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CorruptModelError("corrupt model file at line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline void write_model(std::ostream& out, const PipelineModel& m) {
  out << kModelMagic << ' ' << m.format_version << '\n';
  out << "registry " << m.registry.size() << '\n';
  for (const auto& e : m.registry.entries()) out << "category " << e.rank << ' ' << e.name << '\n';
  for (std::size_t k = 0; k < kAbstractionCount; ++k) {
    out << "placeholder " << abstraction_name(static_cast<Abstraction>(k)) << ' ' << m.preprocess.placeholders[k] << '\n';
  }
  out << "preserve_http_status " << int{m.preprocess.preserve_http_status} << '\n';
  out << "preserve_exit_codes " << int{m.preprocess.preserve_exit_codes} << '\n';
  out << "max_chars " << m.preprocess.max_chars << '\n';
  out << "truncate " << int{m.preprocess.truncate} << '\n';
  const auto& enc = m.encoder;
  const auto buckets = enc.projection.materialized_buckets();
  out << "encoder " << enc.hash_dim << ' ' << enc.embed_dim << ' ' << enc.hash_seed << ' ' << buckets.size() << '\n';
  for (const auto bucket : buckets) {
    const auto row = enc.projection.stored_row(bucket);
    detail::write_row(out, "row " + std::to_string(bucket), row.data(), row.size());
  }
  out << "head " << m.head.num_categories() << ' ' << m.head.embed_dim() << ' ';
  detail::write_double(out, m.head.l2_lambda);
  out << '\n';
  detail::write_row(out, "bias", m.head.bias.data(), static_cast<std::size_t>(m.head.bias.size()));
  for (Eigen::Index k = 0; k < m.head.weights.rows(); ++k) {
    const Eigen::VectorXd row = m.head.weights.row(k).transpose();
    detail::write_row(out, "weights", row.data(), static_cast<std::size_t>(row.size()));
  }
  out << "end\n";
}

[[nodiscard]] inline std::string serialize_model(const PipelineModel& m) {
  std::ostringstream out;
  write_model(out, m);
  return std::move(out).str();
}

[[nodiscard]] inline PipelineModel read_model(std::istream& in) {
  detail::ModelReader reader(in);
  PipelineModel m;
  auto rest = reader.expect(kModelMagic);
  const auto version = reader.parse_number<int>(rest);
  if (version > kModelFormatVersion || version < 1) {
    throw ModelVersionError("model format version " + std::to_string(version) + " is not supported (this build reads " +
                            std::to_string(kModelFormatVersion) + ")");
  }
  m.format_version = version;

  rest = reader.expect("registry");
  const auto k = reader.parse_number<std::size_t>(rest);
  for (std::size_t c = 0; c < k; ++c) {
    rest = reader.expect("category");
    const auto rank = reader.parse_number<int>(rest);
    if (rest.empty() || rest.front() != ' ' || rest.size() < 2) reader.fail("missing category name");
    try {
      m.registry.add(std::string(rest.substr(1)), rank);
    } catch (const ValidationError& e) {
      reader.fail(e.what());
    }
  }
  for (std::size_t a = 0; a < kAbstractionCount; ++a) {
    rest = reader.expect("placeholder");
    const auto kind = abstraction_name(static_cast<Abstraction>(a));
    if (!rest.starts_with(kind) || rest.size() <= kind.size() + 1 || rest[kind.size()] != ' ') {
      reader.fail("expected placeholder for '" + std::string(kind) + "'");
    }
    m.preprocess.placeholders[a] = std::string(rest.substr(kind.size() + 1));
  }
  const auto read_flag = [&](std::string_view tag) {
    auto r = reader.expect(tag);
    const auto v = reader.parse_number<int>(r);
    reader.expect_consumed(r);
    if (v != 0 && v != 1) reader.fail("flag must be 0 or 1");
    return v == 1;
  };
  m.preprocess.preserve_http_status = read_flag("preserve_http_status");
  m.preprocess.preserve_exit_codes = read_flag("preserve_exit_codes");
  rest = reader.expect("max_chars");
  m.preprocess.max_chars = reader.parse_number<std::size_t>(rest);
  m.preprocess.truncate = read_flag("truncate");

  rest = reader.expect("encoder");
  const auto hash_dim = reader.parse_number<std::size_t>(rest);
  const auto embed_dim = reader.parse_number<std::size_t>(rest);
  const auto hash_seed = reader.parse_number<std::uint64_t>(rest);
  const auto stored = reader.parse_number<std::size_t>(rest);
  reader.expect_consumed(rest);
  try {
    m.encoder = make_encoder(hash_dim, embed_dim, hash_seed);
  } catch (const ValidationError& e) {
    reader.fail(e.what());
  }
  for (std::size_t r = 0; r < stored; ++r) {
    rest = reader.expect("row");
    const auto bucket = reader.parse_number<std::uint32_t>(rest);
    if (bucket >= hash_dim) reader.fail("row bucket out of range");
    if (m.encoder.projection.materialized(bucket)) reader.fail("duplicate row");
    auto row = m.encoder.projection.mutable_row(bucket);
    for (std::size_t c = 0; c < embed_dim; ++c) row[c] = reader.parse_number<double>(rest);
    reader.expect_consumed(rest);
  }

  rest = reader.expect("head");
  const auto head_k = reader.parse_number<std::size_t>(rest);
  const auto head_d = reader.parse_number<std::size_t>(rest);
  const auto lambda = reader.parse_number<double>(rest);
  if (head_k != k || head_d != embed_dim) reader.fail("head shape does not match registry and encoder");
  m.head = make_head(head_k, head_d, lambda);
  rest = reader.expect("bias");
  for (std::size_t c = 0; c < head_k; ++c) m.head.bias[static_cast<Eigen::Index>(c)] = reader.parse_number<double>(rest);
  reader.expect_consumed(rest);
  for (std::size_t c = 0; c < head_k; ++c) {
    rest = reader.expect("weights");
    for (std::size_t d = 0; d < head_d; ++d) {
      m.head.weights(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) = reader.parse_number<double>(rest);
    }
    reader.expect_consumed(rest);
  }
  reader.expect("end");
  return m;
}

[[nodiscard]] inline PipelineModel parse_model(const std::string& text) {
  std::istringstream in(text);
  return read_model(in);
}

inline void save_model(const PipelineModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path.string() + "'");
  write_model(out, m);
  if (!out) throw IoError("failed writing model file '" + path.string() + "'");
}

[[nodiscard]] inline PipelineModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  return read_model(in);
}

}  // namespace citriage
