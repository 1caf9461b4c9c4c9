#include <gtest/gtest.h>

#include <cmath>

#include "citriage/corpus_gen.hpp"
#include "citriage/encoder.hpp"

using namespace citriage;

namespace {

SparseFeatures random_features(Rng& rng, std::size_t hash_dim) {
  SparseFeatures f;
  for (std::uint32_t b = 0; b < hash_dim; ++b) {
    if (uniform_index(rng, 3) == 0) f.entries.emplace_back(b, 1.0 + static_cast<double>(uniform_index(rng, 4)));
  }
  if (f.entries.empty()) f.entries.emplace_back(static_cast<std::uint32_t>(uniform_index(rng, hash_dim)), 1.0);
  return f;
}

double mean_cosine(const std::vector<Embedding>& e, const std::vector<CategoryId>& y, bool same) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      if ((y[i] == y[j]) != same) continue;
      sum += e[i].dot(e[j]);
      ++n;
    }
  }
  return sum / n;
}

}  // namespace

TEST(Featurize, CountsUnigramsAndBigrams) {
  const auto model = make_encoder(1 << 18, 8, 1);
  EXPECT_TRUE(featurize(ProcessedLog{}, model).empty());
  const auto f = featurize(ProcessedLog{{"a a a"}}, model);
  ASSERT_EQ(f.entries.size(), 2u);
  const auto uni = static_cast<std::uint32_t>(stable_hash("a", model.hash_seed) % model.hash_dim);
  const auto bi = static_cast<std::uint32_t>(stable_hash("a a", model.hash_seed) % model.hash_dim);
  EXPECT_EQ(f.at(uni), 3.0);
  EXPECT_EQ(f.at(bi), 2.0);
  // lines are joined, so a bigram spans the line break
  const auto g = featurize(ProcessedLog{{"x", "y"}}, model);
  EXPECT_EQ(g.at(static_cast<std::uint32_t>(stable_hash("x y", model.hash_seed) % model.hash_dim)), 1.0);
}

TEST(Featurize, Deterministic) {
  const auto model = make_encoder(1024, 8, 9);
  const ProcessedLog log{{"fatal remote end hung up", "retry <ID>"}};
  EXPECT_EQ(featurize(log, model).entries, featurize(log, model).entries);
}

TEST(Projection, InitialValuesInRangeAndSeeded) {
  const Projection p(64, 8, 3);
  const double bound = 1.0 / std::sqrt(64.0);
  for (std::uint32_t r = 0; r < 64; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_LE(std::abs(p.value(r, c)), bound);
    }
  }
  EXPECT_EQ(Projection(64, 8, 3).value(5, 2), p.value(5, 2));
  EXPECT_NE(Projection(64, 8, 4).value(5, 2), p.value(5, 2));
}

TEST(Projection, MaterializingKeepsValues) {
  Projection p(32, 4, 7);
  const double before = p.value(9, 3);
  const Projection untouched = p;
  (void)p.mutable_row(9);
  EXPECT_TRUE(p.materialized(9));
  EXPECT_EQ(p.value(9, 3), before);
  EXPECT_EQ(p, untouched);
  p.mutable_row(9)[3] += 1.0;
  EXPECT_FALSE(p == untouched);
}

TEST(Encode, UnitNormAndFallback) {
  const auto model = make_encoder(4096, 16, 2);
  const auto e = encode(ProcessedLog{{"npm ERR code ERESOLVE"}}, model);
  EXPECT_NEAR(e.norm(), 1.0, 1e-9);
  EXPECT_NEAR(e.dot(e), 1.0, 1e-12);
  const auto empty = encode(ProcessedLog{}, model);
  EXPECT_EQ(empty, Embedding::Unit(16, 0));
}

TEST(Pairs, CountsAndLabels) {
  const std::vector<CategoryId> labels{0, 0, 1, 1};
  const auto pairs = generate_pairs(labels, 1, 5);
  ASSERT_EQ(pairs.size(), 8u);
  int pos = 0;
  for (const auto& p : pairs) {
    EXPECT_NE(p.i, p.j);
    EXPECT_EQ(p.label == 1, labels[p.i] == labels[p.j]);
    pos += p.label;
  }
  EXPECT_EQ(pos, 4);
  EXPECT_EQ(generate_pairs(labels, 1, 5), pairs);
}

TEST(Pairs, SingletonCategorySkipsPositive) {
  const std::vector<CategoryId> labels{0, 1, 1};
  const auto pairs = generate_pairs(labels, 1, 1);
  std::size_t from_singleton_pos = 0;
  std::size_t from_singleton_neg = 0;
  for (const auto& p : pairs) {
    if (p.i != 0) continue;
    (p.label == 1 ? from_singleton_pos : from_singleton_neg)++;
  }
  EXPECT_EQ(from_singleton_pos, 0u);
  EXPECT_EQ(from_singleton_neg, 1u);
  EXPECT_EQ(pairs.size(), 5u);
  EXPECT_THROW((void)generate_pairs(std::vector<CategoryId>{2, 2, 2}, 1, 1), ValidationError);
}

TEST(Pairs, SizeBound) {
  std::vector<CategoryId> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(static_cast<CategoryId>(i % 4));
  const auto pairs = generate_pairs(labels, 20, 3);
  EXPECT_LE(pairs.size(), 2u * 20u * labels.size());
  for (const auto& p : pairs) EXPECT_EQ(p.label == 1, labels[p.i] == labels[p.j]);
}

TEST(PairLoss, Cases) {
  const Embedding u = Embedding::Unit(3, 0);
  const Embedding v = Embedding::Unit(3, 1);
  EXPECT_DOUBLE_EQ(pair_loss(u, u, 1), 0.0);
  EXPECT_DOUBLE_EQ(pair_loss(u, v, 0), 0.0);
  EXPECT_DOUBLE_EQ(pair_loss(u, v, 1), 1.0);
  EXPECT_DOUBLE_EQ(pair_loss(u, -u, 0), 1.0);
}

// Analytic gradient of the batch loss against central differences on a tiny
// model: H=16, D=4, 8 pairs, 20 seeded instances.
TEST(Gradient, MatchesCentralDifferences) {
  constexpr std::size_t kH = 16;
  constexpr std::size_t kD = 4;
  constexpr double kStep = 1e-6;
  double worst = 0.0;
  for (std::uint64_t instance = 0; instance < 20; ++instance) {
    Rng rng(1000 + instance);
    auto model = make_encoder(kH, kD, instance);
    std::vector<SparseFeatures> features;
    std::vector<CategoryId> labels;
    for (int k = 0; k < 6; ++k) {
      features.push_back(random_features(rng, kH));
      labels.push_back(static_cast<CategoryId>(k % 2));
    }
    auto pairs = generate_pairs(labels, 2, instance);
    pairs.resize(8);
    const auto grad = batch_gradient(model, features, pairs);
    for (std::uint32_t r = 0; r < kH; ++r) {
      for (std::size_t c = 0; c < kD; ++c) {
        auto plus = model;
        plus.projection.mutable_row(r)[c] += kStep;
        auto minus = model;
        minus.projection.mutable_row(r)[c] -= kStep;
        const double fd = (batch_loss(plus, features, pairs) - batch_loss(minus, features, pairs)) / (2 * kStep);
        const auto it = grad.rows.find(r);
        const double analytic = it == grad.rows.end() ? 0.0 : it->second[static_cast<Eigen::Index>(c)];
        const double err = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
        ASSERT_LT(err, 1e-4) << "instance " << instance << " row " << r << " col " << c;
      }
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Finetune, ZeroLearningRateLeavesModelUnchanged) {
  const auto model = make_encoder(256, 8, 4);
  const std::vector<ProcessedLog> logs{{{"alpha beta"}}, {{"alpha gamma"}}, {{"delta"}}, {{"delta eps"}}};
  const std::vector<CategoryId> labels{0, 0, 1, 1};
  TrainConfig cfg;
  cfg.body_learning_rate = 0.0;
  const auto out = finetune(model, logs, labels, cfg);
  EXPECT_EQ(out, model);
  EXPECT_EQ(out.projection.materialized_rows(), 0u);
}

TEST(Finetune, DeterministicPerSeed) {
  const std::vector<ProcessedLog> logs{{{"alpha beta"}}, {{"alpha gamma"}}, {{"delta"}}, {{"delta eps"}}};
  const std::vector<CategoryId> labels{0, 0, 1, 1};
  TrainConfig cfg;
  cfg.seed = 8;
  const auto a = finetune(make_encoder(256, 8, 1), logs, labels, cfg);
  const auto b = finetune(make_encoder(256, 8, 1), logs, labels, cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 9;
  EXPECT_FALSE(finetune(make_encoder(256, 8, 1), logs, labels, cfg) == a);
}

TEST(Finetune, SeparatesTwoGeneratedCategories) {
  auto templates = templates_default();
  templates.resize(2);
  GenConfig g;
  g.per_category = 12;
  g.seed = 21;
  const auto data = generate_corpus(templates, g);
  std::vector<ProcessedLog> logs;
  std::vector<CategoryId> labels;
  for (const auto& e : data) {
    logs.push_back(preprocess_log(e.raw));
    labels.push_back(e.category);
  }
  const auto before = make_encoder(1 << 18, 256, 5);
  TrainConfig cfg;
  cfg.body_learning_rate = 1e-4;
  cfg.seed = 5;
  const auto after = finetune(before, logs, labels, cfg);

  std::vector<Embedding> e0;
  std::vector<Embedding> e1;
  for (const auto& log : logs) {
    e0.push_back(encode(log, before));
    e1.push_back(encode(log, after));
  }
  const double gap_before = mean_cosine(e0, labels, true) - mean_cosine(e0, labels, false);
  const double gap_after = mean_cosine(e1, labels, true) - mean_cosine(e1, labels, false);
  EXPECT_GE(gap_after, 0.2) << "gap before training " << gap_before;

  std::vector<SparseFeatures> features;
  for (const auto& log : logs) features.push_back(featurize(log, before));
  const auto pairs = generate_pairs(labels, cfg.pair_rounds, derive_seed(cfg.seed, 1));
  EXPECT_LT(mean_pair_loss(after, features, pairs), mean_pair_loss(before, features, pairs));
}
