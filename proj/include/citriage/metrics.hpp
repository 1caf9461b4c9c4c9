#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "citriage/dataset.hpp"
#include "citriage/errors.hpp"
#include "citriage/head.hpp"

namespace citriage {

/// K x K counts; rows are true categories, columns predicted ones.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}

  ConfusionMatrix(std::initializer_list<std::initializer_list<std::int64_t>> rows) : k_(rows.size()) {
    counts_.reserve(k_ * k_);
    for (const auto& row : rows) {
      if (row.size() != k_) throw ValidationError("confusion matrix must be square");
      counts_.insert(counts_.end(), row.begin(), row.end());
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return k_; }

  [[nodiscard]] std::int64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * k_ + predicted];
  }
  std::int64_t& operator()(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }

  void add(CategoryId truth, CategoryId predicted) {
    if (truth >= k_ || predicted >= k_) throw ValidationError("confusion matrix index out of range");
    ++counts_[truth * k_ + predicted];
  }

  [[nodiscard]] std::int64_t total() const noexcept {
    std::int64_t s = 0;
    for (const auto c : counts_) s += c;
    return s;
  }
  [[nodiscard]] std::int64_t row_sum(std::size_t r) const noexcept {
    std::int64_t s = 0;
    for (std::size_t c = 0; c < k_; ++c) s += counts_[r * k_ + c];
    return s;
  }
  [[nodiscard]] std::int64_t col_sum(std::size_t c) const noexcept {
    std::int64_t s = 0;
    for (std::size_t r = 0; r < k_; ++r) s += counts_[r * k_ + c];
    return s;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::int64_t> counts_;
};

[[nodiscard]] inline ConfusionMatrix confusion_matrix(std::span<const CategoryId> truths,
                                                      std::span<const CategoryId> predictions, std::size_t k) {
  if (truths.size() != predictions.size()) throw ValidationError("truths and predictions differ in length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truths.size(); ++i) cm.add(truths[i], predictions[i]);
  return cm;
}

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Per-class precision, recall and F1; any zero denominator yields 0.
[[nodiscard]] inline std::vector<ClassScores> per_class_scores(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out(cm.size());
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const auto tp = static_cast<double>(cm(k, k));
    const auto fp = static_cast<double>(cm.col_sum(k)) - tp;
    const auto fn = static_cast<double>(cm.row_sum(k)) - tp;
    out[k].precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    out[k].recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    out[k].f1 = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  }
  return out;
}

namespace detail {

template <typename Field>
[[nodiscard]] double macro_mean(const ConfusionMatrix& cm, Field field) {
  if (cm.size() == 0) throw ValidationError("macro average over zero categories");
  double sum = 0.0;
  for (const auto& s : per_class_scores(cm)) sum += field(s);
  return sum / static_cast<double>(cm.size());
}

}  // namespace detail

[[nodiscard]] inline double macro_f1(const ConfusionMatrix& cm) {
  return detail::macro_mean(cm, [](const ClassScores& s) { return s.f1; });
}
[[nodiscard]] inline double macro_precision(const ConfusionMatrix& cm) {
  return detail::macro_mean(cm, [](const ClassScores& s) { return s.precision; });
}
[[nodiscard]] inline double macro_recall(const ConfusionMatrix& cm) {
  return detail::macro_mean(cm, [](const ClassScores& s) { return s.recall; });
}

/// Multiclass Matthews correlation (Gorodkin's R_K). 0 when undefined.
[[nodiscard]] inline double mcc(const ConfusionMatrix& cm) {
  const auto s = static_cast<double>(cm.total());
  double correct = 0.0;
  double pt = 0.0;
  double pp = 0.0;
  double tt = 0.0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    correct += static_cast<double>(cm(k, k));
    const auto t = static_cast<double>(cm.row_sum(k));
    const auto p = static_cast<double>(cm.col_sum(k));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double denom_p = s * s - pp;
  const double denom_t = s * s - tt;
  if (denom_p <= 0.0 || denom_t <= 0.0) return 0.0;
  return (correct * s - pt) / std::sqrt(denom_p * denom_t);
}

/// Fraction of instances whose truth is among the k most probable ids. A k
/// larger than the number of categories counts every instance as a hit.
[[nodiscard]] inline double topk_accuracy(std::span<const ProbVector> probas, std::span<const CategoryId> truths,
                                          std::size_t k) {
  if (probas.size() != truths.size()) throw ValidationError("topk_accuracy: probabilities and truths differ in length");
  if (probas.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probas.size(); ++i) {
    const auto kk = std::min<std::size_t>(k, static_cast<std::size_t>(probas[i].size()));
    const auto top = topk_categories(probas[i], kk);
    if (std::find(top.begin(), top.end(), truths[i]) != top.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probas.size());
}

struct MetricsReport {
  double macro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double mcc = 0.0;
  double top1 = 0.0;
  double top2 = 0.0;
  double top3 = 0.0;
  std::vector<double> per_class_f1;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

[[nodiscard]] inline MetricsReport evaluate_predictions(std::span<const ProbVector> probas,
                                                        std::span<const CategoryId> truths, std::size_t k) {
  std::vector<CategoryId> predicted;
  predicted.reserve(probas.size());
  for (const auto& p : probas) predicted.push_back(argmax_category(p));
  const auto cm = confusion_matrix(truths, predicted, k);
  MetricsReport r;
  r.macro_f1 = macro_f1(cm);
  r.macro_precision = macro_precision(cm);
  r.macro_recall = macro_recall(cm);
  r.mcc = mcc(cm);
  r.top1 = topk_accuracy(probas, truths, 1);
  r.top2 = topk_accuracy(probas, truths, 2);
  r.top3 = topk_accuracy(probas, truths, 3);
  for (const auto& s : per_class_scores(cm)) r.per_class_f1.push_back(s.f1);
  return r;
}

namespace detail {

// Applies fn(out_field, in_field) to every numeric field of a report.
template <typename Fn>
void zip_fields(MetricsReport& out, const MetricsReport& in, Fn fn) {
  fn(out.macro_f1, in.macro_f1);
  fn(out.macro_precision, in.macro_precision);
  fn(out.macro_recall, in.macro_recall);
  fn(out.mcc, in.mcc);
  fn(out.top1, in.top1);
  fn(out.top2, in.top2);
  fn(out.top3, in.top3);
  for (std::size_t k = 0; k < out.per_class_f1.size(); ++k) fn(out.per_class_f1[k], in.per_class_f1[k]);
}

}  // namespace detail

struct AggregateReport {
  MetricsReport mean;
  MetricsReport std;  // population standard deviation
};

/// Fieldwise mean and population standard deviation.
[[nodiscard]] inline AggregateReport aggregate(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ValidationError("aggregate: no reports");
  const std::size_t k = reports.front().per_class_f1.size();
  for (const auto& r : reports) {
    if (r.per_class_f1.size() != k) throw ValidationError("aggregate: reports cover different category counts");
  }
  const auto n = static_cast<double>(reports.size());
  AggregateReport out;
  out.mean.per_class_f1.assign(k, 0.0);
  out.std.per_class_f1.assign(k, 0.0);
  for (const auto& r : reports) detail::zip_fields(out.mean, r, [](double& sum, double v) { sum += v; });
  detail::zip_fields(out.mean, out.mean, [n](double& sum, double) { sum /= n; });
  for (const auto& r : reports) {
    MetricsReport deviation = r;
    detail::zip_fields(deviation, out.mean, [](double& v, double m) { v -= m; });
    detail::zip_fields(out.std, deviation, [](double& acc, double d) { acc += d * d; });
  }
  detail::zip_fields(out.std, out.std, [n](double& v, double) { v = std::sqrt(v / n); });
  return out;
}

}  // namespace citriage
