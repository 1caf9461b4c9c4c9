#pragma once

// Influential-statement isolation by recursive bisection.
//
// Given a log L, a classifier f and a minimum segment size tau, the
// original category c = f(L) is computed once; then each segment is split at
// m = floor(|L| / 2) into a top half L[0, m) and a bottom half L[m, |L|)
// (the bottom half is the larger one for odd lengths). Halves that still
// classify as c are searched recursively; if both do, both are searched and
// their ranges concatenated; if neither does, the current segment is the
// smallest chunk that preserves c. Segments of at most tau lines are
// returned whole.

#include <chrono>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "citriage/dataset.hpp"
#include "citriage/errors.hpp"

namespace citriage {

/// Zero-based inclusive line range into the raw log.
struct LineRange {
  std::size_t start = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const noexcept { return end - start + 1; }

  friend bool operator==(const LineRange&, const LineRange&) = default;
};

struct SiftConfig {
  std::size_t tau = 2;
  /// Fuse ranges that touch end-to-start after the search.
  bool merge_adjacent = false;
};

struct SiftResult {
  std::vector<LineRange> ranges;
  CategoryId original_category = 0;
  std::size_t classifier_calls = 0;
  std::chrono::nanoseconds elapsed{0};

  [[nodiscard]] std::size_t covered_lines() const noexcept {
    std::size_t n = 0;
    for (const auto& r : ranges) n += r.size();
    return n;
  }
};

template <typename F>
concept SegmentClassifierFn = std::invocable<F&, std::span<const std::string>> &&
    std::convertible_to<std::invoke_result_t<F&, std::span<const std::string>>, CategoryId>;

namespace detail {

template <typename F>
class Bisector {
 public:
  Bisector(std::span<const std::string> log, F& f, std::size_t tau, std::size_t& calls)
      : log_(log), f_(f), tau_(tau), calls_(calls) {}

  CategoryId classify(std::size_t offset, std::size_t size) {
    ++calls_;
    return static_cast<CategoryId>(f_(log_.subspan(offset, size)));
  }

  void find_influential(std::size_t offset, std::size_t size, CategoryId c, std::vector<LineRange>& out) {
    if (size <= tau_) {
      out.push_back({offset, offset + size - 1});
      return;
    }
    const std::size_t m = size / 2;
    const bool match_top = classify(offset, m) == c;
    const bool match_bottom = classify(offset + m, size - m) == c;
    if (match_top && match_bottom) {
      find_influential(offset, m, c, out);
      find_influential(offset + m, size - m, c, out);
    } else if (match_top) {
      find_influential(offset, m, c, out);
    } else if (match_bottom) {
      find_influential(offset + m, size - m, c, out);
    } else {
      out.push_back({offset, offset + size - 1});
    }
  }

 private:
  std::span<const std::string> log_;
  F& f_;
  std::size_t tau_;
  std::size_t& calls_;
};

}  // namespace detail

[[nodiscard]] inline std::vector<LineRange> merge_adjacent_ranges(const std::vector<LineRange>& ranges) {
  std::vector<LineRange> out;
  for (const auto& r : ranges) {
    if (!out.empty() && out.back().end + 1 == r.start) {
      out.back().end = r.end;
    } else {
      out.push_back(r);
    }
  }
  return out;
}

/// Runs the bisection search. `f` maps a contiguous run of raw lines to a
/// category; it is called once on the whole log and twice per split. An
/// empty log yields no ranges and f's verdict on the empty segment.
template <SegmentClassifierFn F>
[[nodiscard]] SiftResult logsift(std::span<const std::string> log, F&& f, const SiftConfig& cfg = {}) {
  if (cfg.tau < 1) throw ValidationError("logsift: minimum segment size must be at least 1");
  const auto started = std::chrono::steady_clock::now();
  SiftResult result;
  detail::Bisector<std::remove_reference_t<F>> bisector(log, f, cfg.tau, result.classifier_calls);
  result.original_category = bisector.classify(0, log.size());
  if (!log.empty()) bisector.find_influential(0, log.size(), result.original_category, result.ranges);
  if (cfg.merge_adjacent) result.ranges = merge_adjacent_ranges(result.ranges);
  result.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started);
  return result;
}

/// 1 - covered / |L|; 0 for an empty log.
[[nodiscard]] inline double sift_reduction_ratio(std::size_t log_lines, const SiftResult& r) noexcept {
  if (log_lines == 0) return 0.0;
  return 1.0 - static_cast<double>(r.covered_lines()) / static_cast<double>(log_lines);
}

/// Fraction of results whose retained lines total at most n.
[[nodiscard]] inline double n_consistency(std::span<const SiftResult> results, std::size_t n) noexcept {
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    if (r.covered_lines() <= n) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

struct Segment {
  LineRange range;
  std::vector<std::string> lines;
};

/// The verbatim raw lines of every range, in order.
[[nodiscard]] inline std::vector<Segment> extract_segments(std::span<const std::string> log, const SiftResult& r) {
  std::vector<Segment> out;
  out.reserve(r.ranges.size());
  for (const auto& range : r.ranges) {
    if (range.start > range.end || range.end >= log.size()) throw ValidationError("sift range outside the log");
    const auto segment = log.subspan(range.start, range.size());
    out.push_back({range, {segment.begin(), segment.end()}});
  }
  return out;
}

/// True when ranges are ordered, disjoint, inside the log, and each one
/// classified alone still yields the original category.
template <SegmentClassifierFn F>
[[nodiscard]] bool verify_sift(std::span<const std::string> log, const SiftResult& r, F&& f) {
  std::size_t next_free = 0;
  for (const auto& range : r.ranges) {
    if (range.start > range.end || range.end >= log.size() || range.start < next_free) return false;
    next_free = range.end + 1;
    if (static_cast<CategoryId>(f(log.subspan(range.start, range.size()))) != r.original_category) return false;
  }
  return true;
}

}  // namespace citriage
