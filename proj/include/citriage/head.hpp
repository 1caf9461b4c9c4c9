#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "citriage/dataset.hpp"
#include "citriage/encoder.hpp"
#include "citriage/errors.hpp"

namespace citriage {

using ProbVector = Eigen::VectorXd;

/// Multinomial logistic regression over embeddings: softmax(W e + b).
struct HeadModel {
  Eigen::MatrixXd weights;  // K x D
  Eigen::VectorXd bias;     // K
  double l2_lambda = 1e-4;

  [[nodiscard]] std::size_t num_categories() const noexcept { return static_cast<std::size_t>(weights.rows()); }
  [[nodiscard]] std::size_t embed_dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }

  friend bool operator==(const HeadModel& a, const HeadModel& b) {
    return a.l2_lambda == b.l2_lambda && a.weights.rows() == b.weights.rows() &&
           a.weights.cols() == b.weights.cols() && a.weights == b.weights && a.bias == b.bias;
  }
};

[[nodiscard]] inline HeadModel make_head(std::size_t num_categories, std::size_t embed_dim, double l2_lambda = 1e-4) {
  if (num_categories == 0 || embed_dim == 0) throw ValidationError("head dimensions must be positive");
  if (l2_lambda < 0.0) throw ValidationError("l2_lambda must be non-negative");
  return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_categories), static_cast<Eigen::Index>(embed_dim)),
          Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_categories)), l2_lambda};
}

/// Max-subtracted softmax.
[[nodiscard]] inline ProbVector softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - top).exp().matrix();
  return p / p.sum();
}

[[nodiscard]] inline ProbVector head_predict_proba(const Embedding& e, const HeadModel& m) {
  if (static_cast<std::size_t>(e.size()) != m.embed_dim()) {
    throw ValidationError("head expects " + std::to_string(m.embed_dim()) + "-dimensional embeddings, got " +
                          std::to_string(e.size()));
  }
  return softmax(m.weights * e + m.bias);
}

/// Index of the largest probability; ties go to the lowest id.
[[nodiscard]] inline CategoryId argmax_category(const ProbVector& p) {
  CategoryId best = 0;
  for (Eigen::Index k = 1; k < p.size(); ++k) {
    if (p[k] > p[static_cast<Eigen::Index>(best)]) best = static_cast<CategoryId>(k);
  }
  return best;
}

/// The k most probable ids, by probability descending then id ascending.
[[nodiscard]] inline std::vector<CategoryId> topk_categories(const ProbVector& p, std::size_t k) {
  const auto n = static_cast<std::size_t>(p.size());
  if (k == 0) throw ValidationError("top-k requires k >= 1");
  if (k > n) throw ValidationError("top-" + std::to_string(k) + " requested over " + std::to_string(n) + " categories");
  std::vector<CategoryId> ids(n);
  std::iota(ids.begin(), ids.end(), CategoryId{0});
  std::stable_sort(ids.begin(), ids.end(), [&](CategoryId a, CategoryId b) {
    return p[static_cast<Eigen::Index>(a)] > p[static_cast<Eigen::Index>(b)];
  });
  ids.resize(k);
  return ids;
}

/// Embeddings stacked as columns of a D x n matrix.
[[nodiscard]] inline Eigen::MatrixXd stack_embeddings(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) return {};
  Eigen::MatrixXd x(embeddings.front().size(), static_cast<Eigen::Index>(embeddings.size()));
  for (std::size_t i = 0; i < embeddings.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = embeddings[i];
  return x;
}

/// Mean cross-entropy plus (lambda / 2) * ||W||_F^2.
[[nodiscard]] inline double head_loss(const HeadModel& m, const Eigen::MatrixXd& x, std::span<const CategoryId> labels) {
  const Eigen::MatrixXd logits = (m.weights * x).colwise() + m.bias;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const auto col = logits.col(i);
    const double top = col.maxCoeff();
    const double lse = top + std::log((col.array() - top).exp().sum());
    total += lse - col[static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])];
  }
  return total / static_cast<double>(logits.cols()) + 0.5 * m.l2_lambda * m.weights.squaredNorm();
}

struct HeadGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

[[nodiscard]] inline HeadGradient head_gradient(const HeadModel& m, const Eigen::MatrixXd& x,
                                                std::span<const CategoryId> labels) {
  Eigen::MatrixXd delta = (m.weights * x).colwise() + m.bias;  // K x n, becomes p - y
  for (Eigen::Index i = 0; i < delta.cols(); ++i) {
    delta.col(i) = softmax(delta.col(i));
    delta(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]), i) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  return {delta * x.transpose() * inv_n + m.l2_lambda * m.weights, delta.rowwise().sum() * inv_n};
}

inline constexpr double kHeadStep = 0.1;

/// Full-batch gradient descent for exactly `max_iter` iterations. The step
/// starts at 0.1 and is halved whenever it would increase the loss.
[[nodiscard]] inline HeadModel head_train(std::span<const Embedding> embeddings, std::span<const CategoryId> labels,
                                          int max_iter, HeadModel m, const CategoryRegistry* registry = nullptr) {
  if (embeddings.size() != labels.size()) throw ValidationError("head_train: embeddings and labels differ in length");
  if (embeddings.empty()) throw ValidationError("head_train: no training examples");
  const std::size_t k = m.num_categories();
  std::vector<bool> present(k, false);
  for (const auto label : labels) {
    if (label >= k) throw ValidationError("head_train: label " + std::to_string(label) + " outside the head");
    present[label] = true;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (!present[c]) {
      const std::string name = registry != nullptr ? registry->name(c) : std::to_string(c);
      throw ValidationError("head_train: category '" + name + "' has no training examples");
    }
  }
  for (const auto& e : embeddings) {
    if (static_cast<std::size_t>(e.size()) != m.embed_dim()) throw ValidationError("head_train: embedding size mismatch");
  }

  const Eigen::MatrixXd x = stack_embeddings(embeddings);
  double step = kHeadStep;
  double loss = head_loss(m, x, labels);
  for (int it = 0; it < max_iter; ++it) {
    const auto grad = head_gradient(m, x, labels);
    HeadModel candidate = m;
    double candidate_loss = 0.0;
    for (int halvings = 0;; ++halvings) {
      candidate.weights = m.weights - step * grad.weights;
      candidate.bias = m.bias - step * grad.bias;
      candidate_loss = head_loss(candidate, x, labels);
      if (candidate_loss <= loss || halvings >= 60) break;
      step *= 0.5;
    }
    if (candidate_loss > loss) break;  // no descent direction left at this precision
    m = std::move(candidate);
    loss = candidate_loss;
  }
  return m;
}

}  // namespace citriage
