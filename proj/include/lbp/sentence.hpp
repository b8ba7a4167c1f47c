#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace lbp {

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline bool is_terminal_punct(char c) {
  return c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':';
}

inline char fold_ascii(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace detail

/// Canonical form of a string: ASCII case-folded, whitespace runs collapsed
/// to one space, trimmed, and the terminal punctuation run removed.
/// normalize(normalize(x)) == normalize(x).
inline std::string normalize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (detail::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(detail::fold_ascii(c));
  }
  while (!out.empty() &&
         (detail::is_terminal_punct(out.back()) || detail::is_space(out.back()))) {
    out.pop_back();
  }
  return out;
}

/// Splits an already-normalized string on single spaces.
inline std::vector<std::string> split_tokens(std::string_view normalized) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < normalized.size()) {
    std::size_t end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) tokens.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

/// A string of the object language. Two SentenceStrings are equal iff their
/// normalized token sequences are equal; the raw text is kept for display.
class SentenceString {
 public:
  SentenceString() = default;
  SentenceString(std::string_view raw)  // NOLINT: implicit by intent
      : raw_(raw), text_(normalize(raw)) {}
  SentenceString(const char* raw) : SentenceString(std::string_view(raw)) {}
  SentenceString(const std::string& raw) : SentenceString(std::string_view(raw)) {}

  const std::string& raw() const noexcept { return raw_; }
  /// Normalized text, tokens joined by single spaces.
  const std::string& text() const noexcept { return text_; }
  std::vector<std::string> tokens() const { return split_tokens(text_); }
  bool empty() const noexcept { return text_.empty(); }

  friend bool operator==(const SentenceString& a, const SentenceString& b) {
    return a.text_ == b.text_;
  }
  friend std::strong_ordering operator<=>(const SentenceString& a,
                                          const SentenceString& b) {
    return a.text_ <=> b.text_;
  }

 private:
  std::string raw_;
  std::string text_;
};

}  // namespace lbp

template <>
struct std::hash<lbp::SentenceString> {
  std::size_t operator()(const lbp::SentenceString& s) const noexcept {
    return std::hash<std::string>{}(s.text());
  }
};
