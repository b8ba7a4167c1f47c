#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/random.hpp"
#include "lbp/sentence.hpp"

namespace lbp {

inline const std::string kBeginMarker = "<s>";
inline const std::string kEndMarker = "</s>";

/// Order-k Markov string model with additive smoothing:
///   P(w | h) = (c(h, w) + alpha) / (c(h) + alpha * |V|)
/// where V is the set of predictable tokens (corpus tokens plus the end
/// marker). The begin marker only pads contexts and is never predicted.
class NgramModel {
 public:
  struct Row {
    std::map<std::size_t, std::uint64_t> counts;  // token id -> count
    std::uint64_t total = 0;
  };

  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }

  /// Predictable tokens in lexicographic order (ids index this vector).
  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  std::size_t vocabulary_size() const noexcept { return vocab_.size(); }

  std::optional<std::size_t> token_id(const std::string& t) const {
    auto it = token_index_.find(t);
    if (it == token_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Observed contexts (each k-1 tokens) and their rows.
  const std::unordered_map<std::string, Row>& rows() const noexcept { return rows_; }

  std::uint64_t count(const std::vector<std::string>& context,
                      const std::string& token) const {
    const Row* row = find_row(context);
    auto id = token_id(token);
    if (!row || !id) return 0;
    auto it = row->counts.find(*id);
    return it == row->counts.end() ? 0 : it->second;
  }

  double probability(const std::vector<std::string>& context,
                     const std::string& token) const {
    if (!token_id(token)) return 0.0;
    const Row* row = find_row(context);
    const double total = row ? static_cast<double>(row->total) : 0.0;
    return (static_cast<double>(count(context, token)) + alpha_) /
           (total + alpha_ * static_cast<double>(vocab_.size()));
  }

  /// Full conditional distribution over vocabulary() for a context.
  std::vector<double> distribution(const std::vector<std::string>& context) const {
    const Row* row = find_row(context);
    const double total = row ? static_cast<double>(row->total) : 0.0;
    const double denom = total + alpha_ * static_cast<double>(vocab_.size());
    std::vector<double> p(vocab_.size(), alpha_ / denom);
    if (row) {
      for (const auto& [id, c] : row->counts) {
        p[id] = (static_cast<double>(c) + alpha_) / denom;
      }
    }
    return p;
  }

  /// Last k-1 tokens of the begin-padded history.
  std::vector<std::string> context_of(const std::vector<std::string>& history) const {
    std::vector<std::string> padded(order_ - 1, kBeginMarker);
    padded.insert(padded.end(), history.begin(), history.end());
    return {padded.end() - static_cast<std::ptrdiff_t>(order_ - 1), padded.end()};
  }

  /// exp of the mean negative log-probability per predicted token,
  /// end markers included.
  double perplexity(const std::vector<SentenceString>& corpus) const {
    double nll = 0.0;
    std::size_t n = 0;
    for (const auto& s : corpus) {
      auto tokens = s.tokens();
      tokens.push_back(kEndMarker);
      std::vector<std::string> history;
      for (const auto& t : tokens) {
        if (!token_id(t)) throw DomainError("token outside the vocabulary: '" + t + "'");
        nll -= std::log(probability(context_of(history), t));
        ++n;
        history.push_back(t);
      }
    }
    return n == 0 ? 1.0 : std::exp(nll / static_cast<double>(n));
  }

  static std::string context_key(const std::vector<std::string>& context) {
    std::string key;
    for (const auto& t : context) {
      key += t;
      key.push_back('\x1f');
    }
    return key;
  }

 private:
  friend NgramModel train(const std::vector<SentenceString>&, std::size_t, double);

  const Row* find_row(const std::vector<std::string>& context) const {
    auto it = rows_.find(context_key(context));
    return it == rows_.end() ? nullptr : &it->second;
  }

  std::size_t order_ = 1;
  double alpha_ = 0.1;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> token_index_;
  std::unordered_map<std::string, Row> rows_;
};

inline constexpr double kDefaultAlpha = 0.1;

inline NgramModel train(const std::vector<SentenceString>& corpus, std::size_t order,
                        double alpha = kDefaultAlpha) {
  if (corpus.empty()) throw Error("cannot train on an empty corpus");
  if (order < 1) throw Error("model order must be at least 1");
  if (!(alpha > 0.0)) throw Error("smoothing constant must be positive");

  NgramModel m;
  m.order_ = order;
  m.alpha_ = alpha;
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  std::map<std::string, int> types{{kEndMarker, 0}};
  for (const auto& s : corpus) {
    sentences.push_back(s.tokens());
    for (const auto& t : sentences.back()) types.emplace(t, 0);
  }
  for (const auto& [t, unused] : types) {
    m.token_index_.emplace(t, m.vocab_.size());
    m.vocab_.push_back(t);
  }
  for (auto& tokens : sentences) {
    tokens.push_back(kEndMarker);
    std::vector<std::string> history;
    for (const auto& t : tokens) {
      auto& row = m.rows_[NgramModel::context_key(m.context_of(history))];
      ++row.counts[m.token_index_.at(t)];
      ++row.total;
      history.push_back(t);
    }
  }
  return m;
}

enum class DecodeMode { kArgmax, kSample };

inline const char* to_string(DecodeMode m) {
  return m == DecodeMode::kArgmax ? "argmax" : "sample";
}

inline DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "argmax") return DecodeMode::kArgmax;
  if (s == "sample") return DecodeMode::kSample;
  throw ConfigError("unknown decode mode '" + s + "' (expected argmax or sample)");
}

struct GenerationRequest {
  SentenceString prompt;
  std::size_t num_candidates = 1;
  std::size_t max_tokens = 32;
  DecodeMode mode = DecodeMode::kSample;
  std::size_t top_k = 0;  ///< 0 samples from the full distribution
  std::uint64_t seed = 0;

  void validate() const {
    if (num_candidates == 0) throw ConfigError("num_candidates must be positive");
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
  }
};

namespace detail {

inline std::size_t argmax_token(const NgramModel& m, const std::vector<std::string>& ctx) {
  // Probability is monotone in the count; ids are in lexicographic order, so
  // the first maximal id breaks ties lexicographically.
  const auto& rows = m.rows();
  auto it = rows.find(NgramModel::context_key(ctx));
  if (it == rows.end() || it->second.counts.empty()) return 0;
  std::size_t best = 0;
  std::uint64_t best_count = 0;
  for (const auto& [id, c] : it->second.counts) {
    if (c > best_count) {
      best = id;
      best_count = c;
    }
  }
  return best;
}

inline std::size_t sample_token(const NgramModel& m, const std::vector<std::string>& ctx,
                                std::size_t top_k, Rng& rng) {
  const std::size_t v = m.vocabulary_size();
  if (top_k == 0 || top_k >= v) {
    // Mixture of the empirical counts and alpha-uniform mass.
    const auto& rows = m.rows();
    auto it = rows.find(NgramModel::context_key(ctx));
    const double total = it == rows.end() ? 0.0 : static_cast<double>(it->second.total);
    const double smooth = m.alpha() * static_cast<double>(v);
    double u = rng.uniform() * (total + smooth);
    if (u < total) {
      for (const auto& [id, c] : it->second.counts) {
        u -= static_cast<double>(c);
        if (u < 0) return id;
      }
      return it->second.counts.rbegin()->first;
    }
    const auto id = static_cast<std::size_t>((u - total) / m.alpha());
    return std::min(id, v - 1);
  }
  const auto p = m.distribution(ctx);
  std::vector<std::size_t> ids(v);
  for (std::size_t i = 0; i < v; ++i) ids[i] = i;
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  ids.resize(top_k);
  double mass = 0.0;
  for (auto id : ids) mass += p[id];
  double u = rng.uniform() * mass;
  for (auto id : ids) {
    u -= p[id];
    if (u < 0) return id;
  }
  return ids.back();
}

}  // namespace detail

/// Candidate strings: the prompt tokens followed by generated tokens, up to
/// the end marker or max_tokens new tokens. The prompt seeds the context
/// window. Argmax decoding is greedy and returns a single candidate; sample
/// mode returns num_candidates draws, candidate i drawn from a stream
/// derived from (seed, i).
inline std::vector<SentenceString> babble(const NgramModel& m,
                                          const GenerationRequest& req) {
  req.validate();
  const auto prompt = req.prompt.tokens();
  const std::size_t n = req.mode == DecodeMode::kArgmax ? 1 : req.num_candidates;
  const auto end_id = *m.token_id(kEndMarker);
  std::vector<SentenceString> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    Rng rng(derive_seed(req.seed, c));
    std::vector<std::string> history = prompt;
    for (std::size_t step = 0; step < req.max_tokens; ++step) {
      const auto ctx = m.context_of(history);
      const std::size_t id = req.mode == DecodeMode::kArgmax
                                 ? detail::argmax_token(m, ctx)
                                 : detail::sample_token(m, ctx, req.top_k, rng);
      if (id == end_id) break;
      history.push_back(m.vocabulary()[id]);
    }
    out.emplace_back(join_tokens(history));
  }
  return out;
}

}  // namespace lbp
