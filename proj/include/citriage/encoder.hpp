#pragma once

// Reference text encoder: hashed word uni/bigrams projected through a
// trainable H x D matrix and L2-normalized. Contrastive fine-tuning pulls
// same-category logs together and pushes other categories apart under a
// squared-error loss on cosine similarity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "citriage/dataset.hpp"
#include "citriage/errors.hpp"
#include "citriage/log_preprocess.hpp"
#include "citriage/random.hpp"

namespace citriage {

using Embedding = Eigen::VectorXd;

/// Sparse count vector over hash buckets, sorted by bucket.
struct SparseFeatures {
  std::vector<std::pair<std::uint32_t, double>> entries;

  [[nodiscard]] bool empty() const noexcept { return entries.empty(); }
  [[nodiscard]] double at(std::uint32_t bucket) const noexcept {
    const auto it = std::lower_bound(entries.begin(), entries.end(), bucket,
                                     [](const auto& e, std::uint32_t b) { return e.first < b; });
    return (it != entries.end() && it->first == bucket) ? it->second : 0.0;
  }
};

/// H x D projection matrix whose rows are materialized on first write.
///
/// Untouched rows hold their seeded initial value, drawn uniformly from
/// [-1/sqrt(H), 1/sqrt(H)] by a counter-based generator keyed on
/// (seed, bucket, column). Only rows that training actually reaches take
/// memory, which keeps the default 2^18 x 256 shape cheap.
class Projection {
 public:
  Projection() = default;
  Projection(std::size_t rows, std::size_t cols, std::uint64_t seed)
      : rows_(rows), cols_(cols), seed_(seed), scale_(1.0 / std::sqrt(static_cast<double>(rows))) {
    if (rows == 0 || cols == 0) throw ValidationError("projection dimensions must be positive");
    if (rows > (std::size_t{1} << 32)) throw ValidationError("hash dimension must fit in 32 bits");
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  [[nodiscard]] double initial(std::uint32_t row, std::size_t col) const noexcept {
    const std::uint64_t base = derive_seed(seed_, row);
    return (2.0 * unit_double(splitmix64(base + col)) - 1.0) * scale_;
  }

  [[nodiscard]] bool materialized(std::uint32_t row) const noexcept { return slot_.contains(row); }
  [[nodiscard]] std::size_t materialized_rows() const noexcept { return buckets_.size(); }

  [[nodiscard]] double value(std::uint32_t row, std::size_t col) const noexcept {
    const auto it = slot_.find(row);
    return it == slot_.end() ? initial(row, col) : data_[it->second * cols_ + col];
  }

  /// acc += weight * row
  void accumulate_row(std::uint32_t row, double weight, Eigen::Ref<Eigen::VectorXd> acc) const {
    const auto it = slot_.find(row);
    if (it != slot_.end()) {
      acc += weight * Eigen::Map<const Eigen::VectorXd>(&data_[it->second * cols_], static_cast<Eigen::Index>(cols_));
      return;
    }
    const std::uint64_t base = derive_seed(seed_, row);
    for (std::size_t c = 0; c < cols_; ++c) {
      acc[static_cast<Eigen::Index>(c)] += weight * (2.0 * unit_double(splitmix64(base + c)) - 1.0) * scale_;
    }
  }

  /// Materializes the row if needed. The returned span is invalidated by the
  /// next call that materializes a different row.
  std::span<double> mutable_row(std::uint32_t row) {
    if (row >= rows_) throw ValidationError("projection row " + std::to_string(row) + " out of range");
    auto it = slot_.find(row);
    if (it == slot_.end()) {
      const std::size_t slot = buckets_.size();
      buckets_.push_back(row);
      data_.resize(data_.size() + cols_);
      for (std::size_t c = 0; c < cols_; ++c) data_[slot * cols_ + c] = initial(row, c);
      it = slot_.emplace(row, slot).first;
    }
    return {&data_[it->second * cols_], cols_};
  }

  [[nodiscard]] std::span<const double> stored_row(std::uint32_t row) const {
    const auto it = slot_.find(row);
    if (it == slot_.end()) return {};
    return {&data_[it->second * cols_], cols_};
  }

  /// Materialized rows in ascending order.
  [[nodiscard]] std::vector<std::uint32_t> materialized_buckets() const {
    std::vector<std::uint32_t> out = buckets_;
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Two projections are equal when every row has the same value, whether
  /// stored or implied by the seed.
  friend bool operator==(const Projection& a, const Projection& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_ || a.seed_ != b.seed_) return false;
    const auto same_row = [&](std::uint32_t row) {
      for (std::size_t c = 0; c < a.cols_; ++c) {
        if (a.value(row, c) != b.value(row, c)) return false;
      }
      return true;
    };
    return std::all_of(a.buckets_.begin(), a.buckets_.end(), same_row) &&
           std::all_of(b.buckets_.begin(), b.buckets_.end(), same_row);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::uint64_t seed_ = 0;
  double scale_ = 0.0;
  std::unordered_map<std::uint32_t, std::size_t> slot_;
  std::vector<std::uint32_t> buckets_;
  std::vector<double> data_;
};

struct EncoderModel {
  std::size_t hash_dim = std::size_t{1} << 18;
  std::size_t embed_dim = 256;
  std::uint64_t hash_seed = 0;
  Projection projection;

  friend bool operator==(const EncoderModel&, const EncoderModel&) = default;
};

[[nodiscard]] inline EncoderModel make_encoder(std::size_t hash_dim = std::size_t{1} << 18,
                                               std::size_t embed_dim = 256, std::uint64_t hash_seed = 0) {
  return {hash_dim, embed_dim, hash_seed, Projection(hash_dim, embed_dim, hash_seed)};
}

struct Pair {
  std::size_t i = 0;
  std::size_t j = 0;
  int label = 0;

  friend bool operator==(const Pair&, const Pair&) = default;
};

struct TrainConfig {
  double body_learning_rate = 1e-3;
  int epochs = 1;
  std::size_t batch_size = 4;
  std::size_t pair_rounds = 20;
  std::uint64_t seed = 0;
};

/// Word unigrams and bigrams of the space-joined lines, hashed into
/// `hash_dim` buckets with occurrence counts.
[[nodiscard]] inline SparseFeatures featurize(const ProcessedLog& log, const EncoderModel& model) {
  std::vector<std::string_view> words;
  for (const auto& line : log.lines) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      const std::size_t start = i;
      while (i < line.size() && line[i] != ' ') ++i;
      if (i > start) words.push_back(std::string_view(line).substr(start, i - start));
    }
  }
  std::vector<std::uint32_t> buckets;
  buckets.reserve(words.size() * 2);
  const auto bucket_of = [&](std::string_view gram) {
    return static_cast<std::uint32_t>(stable_hash(gram, model.hash_seed) % model.hash_dim);
  };
  std::string bigram;
  for (std::size_t k = 0; k < words.size(); ++k) {
    buckets.push_back(bucket_of(words[k]));
    if (k + 1 < words.size()) {
      bigram.assign(words[k]);
      bigram.push_back(' ');
      bigram.append(words[k + 1]);
      buckets.push_back(bucket_of(bigram));
    }
  }
  std::sort(buckets.begin(), buckets.end());
  SparseFeatures out;
  for (const auto b : buckets) {
    if (!out.entries.empty() && out.entries.back().first == b) {
      out.entries.back().second += 1.0;
    } else {
      out.entries.emplace_back(b, 1.0);
    }
  }
  return out;
}

/// projection^T * features, before normalization.
[[nodiscard]] inline Embedding project(const SparseFeatures& features, const EncoderModel& model) {
  Embedding z = Embedding::Zero(static_cast<Eigen::Index>(model.embed_dim));
  for (const auto& [bucket, count] : features.entries) model.projection.accumulate_row(bucket, count, z);
  return z;
}

/// Unit-norm embedding. A zero projection maps to the first basis vector.
[[nodiscard]] inline Embedding normalize_embedding(Embedding z) {
  const double norm = z.norm();
  if (norm == 0.0) {
    z.setZero();
    z[0] = 1.0;
    return z;
  }
  return z / norm;
}

[[nodiscard]] inline Embedding encode_features(const SparseFeatures& features, const EncoderModel& model) {
  return normalize_embedding(project(features, model));
}

[[nodiscard]] inline Embedding encode(const ProcessedLog& log, const EncoderModel& model) {
  return encode_features(featurize(log, model), model);
}

/// For every round and every example: one positive pair (same category,
/// different example) and one negative pair (other category). Examples whose
/// category has a single member get no positive pair.
[[nodiscard]] inline std::vector<Pair> generate_pairs(std::span<const CategoryId> labels, std::size_t rounds,
                                                      std::uint64_t seed) {
  std::unordered_map<CategoryId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) throw ValidationError("pair generation needs at least 2 categories");

  std::vector<CategoryId> singletons;
  for (const auto& [category, idx] : members) {
    if (idx.size() < 2) singletons.push_back(category);
  }
  if (!singletons.empty()) {
    std::sort(singletons.begin(), singletons.end());
    std::clog << "warning: no positive pairs for single-example categories:";
    for (const auto c : singletons) std::clog << ' ' << c;
    std::clog << '\n';
  }

  Rng rng(seed);
  std::vector<Pair> pairs;
  pairs.reserve(2 * rounds * labels.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto& same = members[labels[i]];
      if (same.size() >= 2) {
        // Draw from the other members by skipping over i.
        std::size_t k = uniform_index(rng, same.size() - 1);
        if (same[k] == i) k = same.size() - 1;
        pairs.push_back({i, same[k], 1});
      }
      const std::size_t others = labels.size() - same.size();
      std::size_t k = uniform_index(rng, others);
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] == labels[i]) continue;
        if (k-- == 0) {
          pairs.push_back({i, j, 0});
          break;
        }
      }
    }
  }
  return pairs;
}

[[nodiscard]] inline std::vector<Pair> generate_pairs(const std::vector<LabeledExample>& train, std::size_t rounds,
                                                      std::uint64_t seed) {
  std::vector<CategoryId> labels;
  labels.reserve(train.size());
  for (const auto& e : train) labels.push_back(e.category);
  return generate_pairs(labels, rounds, seed);
}

/// (y - cos(u, v))^2 for unit vectors.
[[nodiscard]] inline double pair_loss(const Embedding& u, const Embedding& v, int label) {
  const double r = static_cast<double>(label) - u.dot(v);
  return r * r;
}

/// Gradient of the mean pair loss of a batch with respect to the
/// projection, keyed by row.
struct BatchGradient {
  double loss = 0.0;
  std::unordered_map<std::uint32_t, Embedding> rows;
};

namespace detail {

// Loss of a batch and its gradient with respect to each involved example's
// unnormalized projection z. Examples are keyed by index in `features`.
struct EmbeddingGrads {
  double loss = 0.0;
  std::vector<std::pair<std::size_t, Embedding>> grads;  // ascending example index
};

[[nodiscard]] inline EmbeddingGrads embedding_grads(const EncoderModel& model,
                                                    std::span<const SparseFeatures> features,
                                                    std::span<const Pair> batch) {
  std::vector<std::size_t> involved;
  for (const auto& p : batch) {
    involved.push_back(p.i);
    involved.push_back(p.j);
  }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());

  const auto slot_of = [&](std::size_t example) {
    return static_cast<std::size_t>(std::lower_bound(involved.begin(), involved.end(), example) - involved.begin());
  };
  std::vector<Embedding> unit(involved.size());
  std::vector<double> norms(involved.size());
  EmbeddingGrads out;
  out.grads.reserve(involved.size());
  for (std::size_t s = 0; s < involved.size(); ++s) {
    Embedding z = project(features[involved[s]], model);
    norms[s] = z.norm();
    unit[s] = normalize_embedding(std::move(z));
    out.grads.emplace_back(involved[s], Embedding::Zero(static_cast<Eigen::Index>(model.embed_dim)));
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : batch) {
    const std::size_t a = slot_of(p.i);
    const std::size_t b = slot_of(p.j);
    const double cosine = unit[a].dot(unit[b]);
    const double residual = static_cast<double>(p.label) - cosine;
    out.loss += residual * residual * inv_batch;
    const double dcos = -2.0 * residual * inv_batch;
    // d cos / d z_a = (u_b - cos u_a) / |z_a|; zero when z_a is the fallback.
    if (norms[a] > 0.0) out.grads[a].second += dcos * (unit[b] - cosine * unit[a]) / norms[a];
    if (norms[b] > 0.0) out.grads[b].second += dcos * (unit[a] - cosine * unit[b]) / norms[b];
  }
  return out;
}

}  // namespace detail

[[nodiscard]] inline double batch_loss(const EncoderModel& model, std::span<const SparseFeatures> features,
                                       std::span<const Pair> batch) {
  return detail::embedding_grads(model, features, batch).loss;
}

[[nodiscard]] inline BatchGradient batch_gradient(const EncoderModel& model, std::span<const SparseFeatures> features,
                                                  std::span<const Pair> batch) {
  auto grads = detail::embedding_grads(model, features, batch);
  BatchGradient out;
  out.loss = grads.loss;
  for (const auto& [example, gz] : grads.grads) {
    for (const auto& [bucket, count] : features[example].entries) {
      auto [it, inserted] = out.rows.try_emplace(bucket, Embedding::Zero(static_cast<Eigen::Index>(model.embed_dim)));
      it->second += count * gz;
    }
  }
  return out;
}

/// Mean pair loss over a full pair set.
[[nodiscard]] inline double mean_pair_loss(const EncoderModel& model, std::span<const SparseFeatures> features,
                                           std::span<const Pair> pairs) {
  if (pairs.empty()) return 0.0;
  std::vector<Embedding> cache(features.size());
  std::vector<bool> ready(features.size(), false);
  const auto get = [&](std::size_t k) -> const Embedding& {
    if (!ready[k]) {
      cache[k] = encode_features(features[k], model);
      ready[k] = true;
    }
    return cache[k];
  };
  double total = 0.0;
  for (const auto& p : pairs) total += pair_loss(get(p.i), get(p.j), p.label);
  return total / static_cast<double>(pairs.size());
}

/// Contrastive fine-tuning by plain mini-batch gradient descent. Pairs are
/// regenerated from the seed and reshuffled every epoch.
[[nodiscard]] inline EncoderModel finetune(EncoderModel model, std::span<const ProcessedLog> logs,
                                           std::span<const CategoryId> labels, const TrainConfig& cfg) {
  if (logs.size() != labels.size()) throw ValidationError("finetune: logs and labels differ in length");
  if (cfg.batch_size == 0) throw ValidationError("finetune: batch size must be positive");
  if (!(cfg.body_learning_rate >= 0.0)) throw ValidationError("finetune: learning rate must be non-negative");
  auto pairs = generate_pairs(labels, cfg.pair_rounds, derive_seed(cfg.seed, 1));
  if (cfg.body_learning_rate == 0.0 || cfg.epochs <= 0 || pairs.empty()) return model;

  std::vector<SparseFeatures> features;
  features.reserve(logs.size());
  for (const auto& log : logs) features.push_back(featurize(log, model));
  for (const auto& f : features) {
    for (const auto& [bucket, count] : f.entries) (void)model.projection.mutable_row(bucket);
  }

  Rng rng(derive_seed(cfg.seed, 2));
  const double lr = cfg.body_learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, pairs.size() - start);
      const auto grads = detail::embedding_grads(model, features, std::span<const Pair>(pairs).subspan(start, len));
      for (const auto& [example, gz] : grads.grads) {
        for (const auto& [bucket, count] : features[example].entries) {
          auto row = model.projection.mutable_row(bucket);
          Eigen::Map<Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())) -= (lr * count) * gz;
        }
      }
    }
  }
  return model;
}

}  // namespace citriage
