#pragma once

// Job-log normalization. Variable material (URLs, paths, durations,
// versions, identifiers) is abstracted to placeholder tokens, noise is
// stripped, and blank and repeated statements are dropped.
//
// Line rules run in a fixed order:
//   1. URLs, file paths, directory paths, durations, versions -> placeholders
//   2. identifiers (letter + digit, length >= 4)              -> <ID>
//   3. characters outside [A-Za-z0-9_] become separators
//   4. bare numbers are dropped unless they are an HTTP status or exit code
//   5. trailing single-letter words are dropped (never the first word)
// and then per log:
//   6. whitespace is collapsed and blank lines are dropped
//   7. repeated lines are dropped, keeping the first occurrence
//
// The output of preprocess_line contains no material any rule would touch,
// so preprocessing is idempotent.

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace citriage {

/// A job log as produced by the CI runner, one statement per element.
struct RawLog {
  std::vector<std::string> lines;

  friend bool operator==(const RawLog&, const RawLog&) = default;
};

/// A normalized log: no blank lines, no duplicates, restricted alphabet.
struct ProcessedLog {
  std::vector<std::string> lines;

  friend bool operator==(const ProcessedLog&, const ProcessedLog&) = default;
};

enum class Abstraction : std::size_t { url, filepath, dirpath, duration, version, id };

inline constexpr std::size_t kAbstractionCount = 6;

[[nodiscard]] constexpr std::string_view abstraction_name(Abstraction kind) noexcept {
  constexpr std::array<std::string_view, kAbstractionCount> names{"url",      "filepath", "dirpath",
                                                                  "duration", "version",  "id"};
  return names[static_cast<std::size_t>(kind)];
}

struct PreprocessConfig {
  std::array<std::string, kAbstractionCount> placeholders{"<URL>",      "<FILEPATH>", "<DIRPATH>",
                                                          "<DURATION>", "<VERSION>",  "<ID>"};
  bool preserve_http_status = true;
  bool preserve_exit_codes = true;
  /// Character budget for encoder input. Only enforced when `truncate` is
  /// set, in which case the oldest lines are dropped first.
  std::size_t max_chars = 20000;
  bool truncate = false;

  [[nodiscard]] const std::string& placeholder(Abstraction kind) const {
    return placeholders[static_cast<std::size_t>(kind)];
  }

  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

namespace detail {

[[nodiscard]] constexpr bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }
[[nodiscard]] constexpr bool is_alpha(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
[[nodiscard]] constexpr bool is_alnum(char c) noexcept { return is_digit(c) || is_alpha(c); }
[[nodiscard]] constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f' || c == '\n';
}
[[nodiscard]] constexpr bool is_word_char(char c) noexcept { return is_alnum(c) || c == '_'; }
// Characters that may appear inside a filesystem path.
[[nodiscard]] constexpr bool is_path_char(char c) noexcept {
  return is_word_char(c) || c == '.' || c == '-' || c == '/' || c == '~' || c == '@' || c == '+';
}
// Characters of a candidate duration, version or identifier.
[[nodiscard]] constexpr bool is_run_char(char c) noexcept {
  return is_word_char(c) || c == '.' || c == '-';
}
[[nodiscard]] constexpr bool is_scheme_char(char c) noexcept {
  return is_alnum(c) || c == '+' || c == '.' || c == '-';
}

struct Token {
  std::string text;
  bool placeholder = false;
};

[[nodiscard]] inline bool has_letter(std::string_view s) noexcept {
  for (const char c : s) {
    if (is_alpha(c)) return true;
  }
  return false;
}

[[nodiscard]] inline bool has_digit(std::string_view s) noexcept {
  for (const char c : s) {
    if (is_digit(c)) return true;
  }
  return false;
}

[[nodiscard]] inline bool all_digits(std::string_view s) noexcept {
  if (s.empty()) return false;
  for (const char c : s) {
    if (!is_digit(c)) return false;
  }
  return true;
}

// Consumes digits ('.' digits)? from the front; returns the length or 0.
[[nodiscard]] inline std::size_t scan_number(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i == 0) return 0;
  if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i;
  }
  return i;
}

// (number unit)+ with no separators, e.g. "35s", "1.5min", "1h0m0s".
[[nodiscard]] inline bool match_duration(std::string_view s) noexcept {
  static constexpr std::array<std::string_view, 16> units{
      "seconds", "second", "minutes", "minute", "hours", "hour", "secs", "sec",
      "mins",    "min",    "hrs",     "hr",     "ms",    "s",    "m",    "h"};
  const std::size_t n = scan_number(s);
  if (n == 0) return false;
  const std::string_view rest = s.substr(n);
  for (const std::string_view unit : units) {
    if (rest.starts_with(unit)) {
      const std::string_view tail = rest.substr(unit.size());
      if (tail.empty() || match_duration(tail)) return true;
    }
  }
  return false;
}

// v?digits('.'digits)+
[[nodiscard]] inline bool match_version(std::string_view s) noexcept {
  if (!s.empty() && s.front() == 'v') s.remove_prefix(1);
  std::size_t i = 0;
  int groups = 0;
  while (true) {
    const std::size_t start = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    if (i == start) return false;
    ++groups;
    if (i == s.size()) return groups >= 2;
    if (s[i] != '.') return false;
    ++i;
  }
}

[[nodiscard]] inline bool match_identifier(std::string_view s) noexcept {
  return s.size() >= 4 && has_letter(s) && has_digit(s);
}

// A last path component ending in ".ext" where ext is short, alphanumeric
// and contains a letter.
[[nodiscard]] inline bool has_file_extension(std::string_view path) noexcept {
  const auto slash = path.rfind('/');
  const std::string_view last = slash == std::string_view::npos ? path : path.substr(slash + 1);
  const auto dot = last.rfind('.');
  if (dot == std::string_view::npos) return false;
  const std::string_view ext = last.substr(dot + 1);
  if (ext.empty() || ext.size() > 10) return false;
  for (const char c : ext) {
    if (!is_alnum(c)) return false;
  }
  return has_letter(ext);
}

// Rule 3: splits residual text into words, dropping every other character.
inline void push_words(std::string_view text, std::vector<Token>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_char(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && is_word_char(text[i])) ++i;
    if (i > start) out.push_back({std::string(text.substr(start, i - start)), false});
  }
}

// Rules 1 (durations, versions) and 2, then 3, over text with URLs and
// paths already abstracted.
inline void push_runs(std::string_view text, const PreprocessConfig& cfg, std::vector<Token>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_run_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < text.size() && is_run_char(text[i])) ++i;
    std::size_t end = i;
    while (start < end && (text[start] == '.' || text[start] == '-')) ++start;
    while (end > start && (text[end - 1] == '.' || text[end - 1] == '-')) --end;
    const std::string_view core = text.substr(start, end - start);
    if (core.empty()) continue;
    if (match_duration(core)) {
      out.push_back({cfg.placeholder(Abstraction::duration), true});
    } else if (match_version(core)) {
      out.push_back({cfg.placeholder(Abstraction::version), true});
    } else if (match_identifier(core)) {
      out.push_back({cfg.placeholder(Abstraction::id), true});
    } else {
      push_words(core, out);
    }
  }
}

// Rule 1 paths: splits a token into path-character segments and abstracts
// the ones that look like file or directory paths.
inline void push_paths(std::string_view token, const PreprocessConfig& cfg, std::vector<Token>& out) {
  std::size_t i = 0;
  while (i < token.size()) {
    const std::size_t start = i;
    const bool path_segment = is_path_char(token[i]);
    while (i < token.size() && is_path_char(token[i]) == path_segment) ++i;
    std::string_view segment = token.substr(start, i - start);
    if (!path_segment || segment.find('/') == std::string_view::npos) {
      push_runs(segment, cfg, out);
      continue;
    }
    while (!segment.empty() && segment.back() == '.') segment.remove_suffix(1);
    if (has_file_extension(segment)) {
      out.push_back({cfg.placeholder(Abstraction::filepath), true});
    } else if (std::count(segment.begin(), segment.end(), '/') >= 2) {
      out.push_back({cfg.placeholder(Abstraction::dirpath), true});
    } else {
      push_runs(segment, cfg, out);
    }
  }
}

inline void push_token(std::string_view token, const PreprocessConfig& cfg, std::vector<Token>& out) {
  for (const auto& placeholder : cfg.placeholders) {
    if (token == placeholder) {
      out.push_back({placeholder, true});
      return;
    }
  }
  if (const auto sep = token.find("://"); sep != std::string_view::npos) {
    std::size_t scheme = sep;
    while (scheme > 0 && is_scheme_char(token[scheme - 1])) --scheme;
    while (scheme < sep && !is_alpha(token[scheme])) ++scheme;
    if (scheme < sep) {
      push_paths(token.substr(0, scheme), cfg, out);
      out.push_back({cfg.placeholder(Abstraction::url), true});
      return;
    }
  }
  push_paths(token, cfg, out);
}

[[nodiscard]] inline bool iequals(std::string_view a, std::string_view b) noexcept {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto lower = [](char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; };
    if (lower(a[i]) != lower(b[i])) return false;
  }
  return true;
}

[[nodiscard]] inline bool is_http_keyword(std::string_view word) noexcept {
  return (word.size() >= 4 && iequals(word.substr(0, 4), "http")) || iequals(word, "status") ||
         iequals(word, "code");
}

// Rule 4. An HTTP status is a 3-digit number in [100, 599] appearing after
// "http*", "status" or "code" on the same line; an exit code is the first
// number after "exit code" or "exit status".
inline void drop_numbers(std::vector<Token>& tokens, const PreprocessConfig& cfg) {
  bool http_context = false;
  bool exit_pending = false;
  bool after_exit = false;
  std::vector<Token> kept;
  kept.reserve(tokens.size());
  for (auto& token : tokens) {
    const bool follows_exit = after_exit;
    after_exit = !token.placeholder && iequals(token.text, "exit");
    if (token.placeholder) {
      kept.push_back(std::move(token));
      continue;
    }
    if (!all_digits(token.text)) {
      if (is_http_keyword(token.text)) http_context = true;
      if (follows_exit && (iequals(token.text, "code") || iequals(token.text, "status"))) exit_pending = true;
      kept.push_back(std::move(token));
      continue;
    }
    bool keep = false;
    if (cfg.preserve_exit_codes && exit_pending) keep = true;
    if (cfg.preserve_http_status && http_context && token.text.size() == 3) {
      const int value = std::stoi(token.text);
      if (value >= 100 && value <= 599) keep = true;
    }
    exit_pending = false;
    if (keep) kept.push_back(std::move(token));
  }
  tokens = std::move(kept);
}

}  // namespace detail

/// Normalizes a single statement (rules 1 to 5 plus whitespace collapsing).
/// The result may be empty.
[[nodiscard]] inline std::string preprocess_line(std::string_view line, const PreprocessConfig& config = {}) {
  std::vector<detail::Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && detail::is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !detail::is_space(line[i])) ++i;
    if (i > start) detail::push_token(line.substr(start, i - start), config, tokens);
  }

  detail::drop_numbers(tokens, config);

  while (tokens.size() > 1 && !tokens.back().placeholder && tokens.back().text.size() == 1 &&
         detail::is_alpha(tokens.back().text.front())) {
    tokens.pop_back();
  }

  std::string out;
  for (const auto& token : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += token.text;
  }
  return out;
}

/// Drops blank lines, then repeated lines (first occurrence wins), then
/// applies tail truncation when enabled. `lines` are already line-normalized.
[[nodiscard]] inline ProcessedLog finalize_lines(std::vector<std::string> lines, const PreprocessConfig& config = {}) {
  ProcessedLog out;
  std::unordered_set<std::string> seen;
  seen.reserve(lines.size());
  out.lines.reserve(lines.size());
  for (auto& line : lines) {
    if (line.empty() || !seen.insert(line).second) continue;
    out.lines.push_back(std::move(line));
  }

  if (config.truncate) {
    std::size_t total = 0;
    std::size_t first = out.lines.size();
    while (first > 0 && total + out.lines[first - 1].size() <= config.max_chars) {
      total += out.lines[first - 1].size();
      --first;
    }
    out.lines.erase(out.lines.begin(), out.lines.begin() + static_cast<std::ptrdiff_t>(first));
  }
  return out;
}

[[nodiscard]] inline ProcessedLog preprocess_log(const RawLog& log, const PreprocessConfig& config = {}) {
  std::vector<std::string> lines;
  lines.reserve(log.lines.size());
  for (const auto& line : log.lines) lines.push_back(preprocess_line(line, config));
  return finalize_lines(std::move(lines), config);
}

/// Re-normalizing already processed text must be a no-op; this overload lets
/// callers verify that.
[[nodiscard]] inline ProcessedLog preprocess_log(const ProcessedLog& log, const PreprocessConfig& config = {}) {
  return preprocess_log(RawLog{log.lines}, config);
}

[[nodiscard]] inline std::size_t char_count(const std::vector<std::string>& lines) noexcept {
  std::size_t total = 0;
  for (const auto& line : lines) total += line.size();
  return total;
}

/// Fraction of characters removed by preprocessing; 0 for an empty raw log.
[[nodiscard]] inline double reduction_percent(const RawLog& raw, const ProcessedLog& processed) noexcept {
  const std::size_t before = char_count(raw.lines);
  if (before == 0) return 0.0;
  return 1.0 - static_cast<double>(char_count(processed.lines)) / static_cast<double>(before);
}

/// Splits text on '\n' (a trailing '\r' is dropped from each line). Empty
/// text yields an empty log; a final newline does not start another line.
[[nodiscard]] inline RawLog split_lines(std::string_view text) {
  RawLog log;
  if (text.empty()) return log;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    log.lines.emplace_back(line);
    if (nl == std::string_view::npos || nl + 1 == text.size()) break;
    start = nl + 1;
  }
  return log;
}

[[nodiscard]] inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

}  // namespace citriage
