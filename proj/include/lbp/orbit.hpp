#pragma once

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lbp/errors.hpp"
#include "lbp/semantics.hpp"
#include "lbp/sentence.hpp"

namespace lbp {

/// Mergeable-set forest with union by size and path compression.
class DisjointSetForest {
 public:
  explicit DisjointSetForest(std::size_t n = 0) { resize(n); }

  void resize(std::size_t n) {
    const std::size_t old = parent_.size();
    parent_.resize(n);
    size_.resize(n, 1);
    for (std::size_t i = old; i < n; ++i) parent_[i] = i;
  }

  std::size_t add() {
    resize(parent_.size() + 1);
    return parent_.size() - 1;
  }

  std::size_t size() const noexcept { return parent_.size(); }

  std::size_t find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  /// Returns true if two distinct sets were merged.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Bounds on rule-driven closure: rewrite depth and number of derived strings
/// (strings produced by rules that were not in the input language).
struct ClosureCaps {
  std::size_t max_depth = 3;
  std::size_t max_derived = 10000;
};

/// An explicit paraphrase pair. `valid == false` marks a deliberately false
/// paraphrase: it is still merged, modelling a learned Î that differs from I.
struct ParaphrasePair {
  std::string a;
  std::string b;
  bool valid = true;
};

struct ClosureProvenance {
  bool truncated = false;
  std::vector<std::string> warnings;
  std::size_t derived_count = 0;
  std::size_t skipped_derivations = 0;
  std::size_t max_depth_reached = 0;
  std::vector<ParaphrasePair> false_paraphrases;
};

/// Result of an orbit query. Strings outside the partition domain are
/// reported as their own singleton orbit with in_domain == false.
struct OrbitQuery {
  std::vector<std::string> members;
  bool in_domain = true;
};

/// Partition of a set of normalized strings into semantic orbits. Immutable
/// once built. Domain and blocks are in lexicographic order; each block is
/// identified by its smallest member.
class OrbitPartition {
 public:
  OrbitPartition() = default;

  /// `domain` must be distinct normalized strings; `forest` is indexed like
  /// `domain`. `derived` flags strings produced by rewriting.
  OrbitPartition(const std::vector<std::string>& domain, DisjointSetForest forest,
                 const std::vector<std::uint8_t>& derived = {},
                 ClosureProvenance provenance = {})
      : provenance_(std::move(provenance)) {
    const std::size_t n = domain.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return domain[a] < domain[b]; });

    domain_.reserve(n);
    derived_.reserve(n);
    std::vector<std::size_t> new_index(n);
    for (std::size_t i = 0; i < n; ++i) {
      new_index[order[i]] = i;
      domain_.push_back(domain[order[i]]);
      derived_.push_back(derived.empty() ? 0 : derived[order[i]]);
      if (!index_.emplace(domain_.back(), i).second) {
        throw DomainError("duplicate string in partition domain: '" +
                          domain_.back() + "'");
      }
    }

    block_of_.assign(n, 0);
    std::unordered_map<std::size_t, std::size_t> block_of_root;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t root = forest.find(order[i]);
      auto [it, inserted] = block_of_root.emplace(root, blocks_.size());
      if (inserted) blocks_.emplace_back();
      blocks_[it->second].push_back(i);
      block_of_[i] = it->second;
    }
  }

  std::size_t size() const noexcept { return domain_.size(); }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  const std::vector<std::string>& domain() const noexcept { return domain_; }
  const ClosureProvenance& provenance() const noexcept { return provenance_; }

  bool contains(const std::string& normalized) const {
    return index_.count(normalized) != 0;
  }

  std::optional<std::size_t> index_of(const std::string& normalized) const {
    auto it = index_.find(normalized);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool is_derived(std::size_t i) const { return derived_.at(i) != 0; }

  std::size_t block_of(std::size_t i) const { return block_of_.at(i); }

  /// Member strings of block b, sorted.
  std::vector<std::string> block(std::size_t b) const {
    std::vector<std::string> out;
    out.reserve(blocks_.at(b).size());
    for (std::size_t i : blocks_[b]) out.push_back(domain_[i]);
    return out;
  }

  const std::vector<std::size_t>& block_indices(std::size_t b) const {
    return blocks_.at(b);
  }

  /// All blocks, each sorted, ordered by smallest member.
  std::vector<std::vector<std::string>> blocks() const {
    std::vector<std::vector<std::string>> out;
    out.reserve(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) out.push_back(block(b));
    return out;
  }

  bool same_orbit(const std::string& a, const std::string& b) const {
    auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib) return a == b;
    return block_of_[*ia] == block_of_[*ib];
  }

 private:
  std::vector<std::string> domain_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::uint8_t> derived_;
  std::vector<std::size_t> block_of_;
  std::vector<std::vector<std::size_t>> blocks_;
  ClosureProvenance provenance_;
};

inline OrbitQuery orbit_of(const OrbitPartition& p, const SentenceString& l) {
  auto i = p.index_of(l.text());
  if (!i) return {{l.text()}, false};
  return {p.block(p.block_of(*i)), true};
}

/// Orbits as preimages of the reference map: same block iff same referent.
inline OrbitPartition orbits_from_reference(const WorldModel& w) {
  const auto& lang = w.language();
  DisjointSetForest forest(lang.size());
  std::unordered_map<std::size_t, std::size_t> first_with_referent;
  for (std::size_t i = 0; i < lang.size(); ++i) {
    const std::size_t r = w.reference().at(lang[i]);
    auto [it, inserted] = first_with_referent.emplace(r, i);
    if (!inserted) forest.unite(it->second, i);
  }
  return OrbitPartition(lang, std::move(forest));
}

/// Token-level rewrite template. Pattern tokens are literals or variables:
/// `$name` binds one or more tokens, `$name*` binds zero or more. Patterns
/// are anchored at both ends; a variable used twice must bind equal spans.
class RewriteRule {
 public:
  RewriteRule(std::string_view pattern, std::string_view replacement,
              bool bidirectional = false, std::string note = {})
      : pattern_(split_tokens(normalize(pattern))),
        replacement_(split_tokens(normalize(replacement))),
        bidirectional_(bidirectional),
        note_(std::move(note)) {
    if (pattern_.empty()) throw ParseError("rewrite rule has an empty pattern");
    auto bound = variables(pattern_);
    for (const auto& v : variables(replacement_)) {
      if (!bound.count(v)) {
        throw ParseError("replacement uses unbound variable '$" + v + "'");
      }
    }
    if (bidirectional_ && bound != variables(replacement_)) {
      throw ParseError(
          "bidirectional rule must bind the same variables on both sides");
    }
  }

  const std::vector<std::string>& pattern() const noexcept { return pattern_; }
  const std::vector<std::string>& replacement() const noexcept {
    return replacement_;
  }
  bool bidirectional() const noexcept { return bidirectional_; }
  const std::string& note() const noexcept { return note_; }

  RewriteRule reversed() const {
    return RewriteRule(join_tokens(replacement_), join_tokens(pattern_), false,
                       note_);
  }

  /// Every distinct rewrite of `tokens`, in match-enumeration order.
  std::vector<std::vector<std::string>> apply(
      const std::vector<std::string>& tokens) const {
    std::vector<std::vector<std::string>> out;
    std::set<std::vector<std::string>> seen;
    Bindings bindings;
    match(tokens, 0, 0, bindings, [&](const Bindings& b) {
      std::vector<std::string> result;
      for (const auto& t : replacement_) {
        if (auto name = var_name(t)) {
          const auto& span = b.at(*name);
          result.insert(result.end(), span.begin(), span.end());
        } else {
          result.push_back(t);
        }
      }
      if (!result.empty() && seen.insert(result).second) {
        out.push_back(std::move(result));
      }
    });
    return out;
  }

 private:
  using Bindings = std::map<std::string, std::vector<std::string>>;

  static std::optional<std::string> var_name(const std::string& token) {
    if (token.size() < 2 || token[0] != '$') return std::nullopt;
    std::string name = token.substr(1);
    if (name.back() == '*') name.pop_back();
    if (name.empty()) return std::nullopt;
    return name;
  }

  static bool is_star(const std::string& token) { return token.back() == '*'; }

  static std::set<std::string> variables(const std::vector<std::string>& toks) {
    std::set<std::string> out;
    for (const auto& t : toks) {
      if (auto v = var_name(t)) out.insert(*v);
    }
    return out;
  }

  template <typename Emit>
  void match(const std::vector<std::string>& tokens, std::size_t pi,
             std::size_t ti, Bindings& b, Emit&& emit) const {
    if (pi == pattern_.size()) {
      if (ti == tokens.size()) emit(b);
      return;
    }
    const auto& p = pattern_[pi];
    auto name = var_name(p);
    if (!name) {
      if (ti < tokens.size() && tokens[ti] == p) match(tokens, pi + 1, ti + 1, b, emit);
      return;
    }
    if (auto it = b.find(*name); it != b.end()) {
      const auto& span = it->second;
      if (ti + span.size() <= tokens.size() &&
          std::equal(span.begin(), span.end(), tokens.begin() + ti)) {
        match(tokens, pi + 1, ti + span.size(), b, emit);
      }
      return;
    }
    const std::size_t min_len = is_star(p) ? 0 : 1;
    for (std::size_t len = min_len; ti + len <= tokens.size(); ++len) {
      b[*name].assign(tokens.begin() + ti, tokens.begin() + ti + len);
      match(tokens, pi + 1, ti + len, b, emit);
    }
    b.erase(*name);
  }

  std::vector<std::string> pattern_;
  std::vector<std::string> replacement_;
  bool bidirectional_;
  std::string note_;
};

/// Reflexive-symmetric-transitive closure of rule applications and explicit
/// pairs over `language`. Rules are applied breadth-first from every language
/// string (lexicographic order) up to caps.max_depth; strings the rules derive
/// join the partition domain until caps.max_derived is reached, after which
/// further derivations are skipped and recorded in the provenance.
inline OrbitPartition orbits_from_rules(const std::vector<std::string>& language,
                                        const std::vector<RewriteRule>& rules,
                                        const std::vector<ParaphrasePair>& pairs,
                                        const ClosureCaps& caps = {}) {
  std::vector<std::string> domain;
  std::vector<std::uint8_t> derived;
  std::vector<std::size_t> depth;
  std::unordered_map<std::string, std::size_t> index;
  DisjointSetForest forest;
  ClosureProvenance prov;

  auto intern = [&](const std::string& s, bool is_derived,
                    std::size_t d) -> std::optional<std::size_t> {
    if (auto it = index.find(s); it != index.end()) return it->second;
    if (is_derived) {
      if (prov.derived_count >= caps.max_derived) {
        ++prov.skipped_derivations;
        return std::nullopt;
      }
      ++prov.derived_count;
    }
    const std::size_t id = forest.add();
    index.emplace(s, id);
    domain.push_back(s);
    derived.push_back(is_derived ? 1 : 0);
    depth.push_back(d);
    return id;
  };

  std::set<std::string> initial;
  for (const auto& l : language) initial.insert(normalize(l));
  for (const auto& p : pairs) {
    initial.insert(normalize(p.a));
    initial.insert(normalize(p.b));
  }
  std::deque<std::size_t> queue;
  for (const auto& s : initial) queue.push_back(*intern(s, false, 0));

  std::vector<RewriteRule> expanded;
  for (const auto& r : rules) {
    expanded.push_back(r);
    if (r.bidirectional()) expanded.push_back(r.reversed());
  }

  while (!queue.empty()) {
    const std::size_t id = queue.front();
    queue.pop_front();
    const std::size_t d = depth[id];
    prov.max_depth_reached = std::max(prov.max_depth_reached, d);
    if (d >= caps.max_depth) continue;
    const auto tokens = split_tokens(domain[id]);
    for (const auto& rule : expanded) {
      for (const auto& out : rule.apply(tokens)) {
        const std::string text = join_tokens(out);
        const bool fresh = !index.count(text);
        auto target = intern(text, true, d + 1);
        if (!target) continue;
        forest.unite(id, *target);
        if (fresh) queue.push_back(*target);
      }
    }
  }

  for (const auto& p : pairs) {
    forest.unite(index.at(normalize(p.a)), index.at(normalize(p.b)));
    if (!p.valid) {
      prov.false_paraphrases.push_back({normalize(p.a), normalize(p.b), false});
    }
  }

  if (prov.skipped_derivations > 0) {
    prov.truncated = true;
    prov.warnings.push_back(
        "partial closure: derived-string cap of " +
        std::to_string(caps.max_derived) + " reached, " +
        std::to_string(prov.skipped_derivations) + " derivations skipped");
  }
  return OrbitPartition(domain, std::move(forest), derived, std::move(prov));
}

/// Outcome of comparing a learned partition with the one induced by a world's
/// reference map, restricted to the world's language.
struct RefinementCheck {
  bool refines = true;  ///< every learned block has a single referent
  bool equal = true;    ///< additionally, every referent class is one block
  std::string witness;
};

inline RefinementCheck check_against_reference(const OrbitPartition& learned,
                                               const WorldModel& w) {
  RefinementCheck out;
  for (std::size_t b = 0; b < learned.block_count(); ++b) {
    std::optional<std::pair<std::string, std::size_t>> first;
    for (std::size_t i : learned.block_indices(b)) {
      const auto& s = learned.domain()[i];
      auto it = w.reference().find(s);
      if (it == w.reference().end()) continue;
      if (!first) {
        first.emplace(s, it->second);
      } else if (first->second != it->second && out.refines) {
        out.refines = false;
        out.equal = false;
        out.witness = "'" + first->first + "' and '" + s +
                      "' share a learned orbit but refer to different states";
      }
    }
  }
  if (!out.refines) return out;
  const auto& lang = w.language();
  for (std::size_t i = 0; i < lang.size(); ++i) {
    for (std::size_t j = i + 1; j < lang.size(); ++j) {
      if (w.reference().at(lang[i]) == w.reference().at(lang[j]) &&
          !learned.same_orbit(lang[i], lang[j])) {
        out.equal = false;
        out.witness = "'" + lang[i] + "' and '" + lang[j] +
                      "' share a referent but not a learned orbit";
        return out;
      }
    }
  }
  return out;
}

/// A permutation of a world's language, indexed by w.language() order.
struct ParaphraseMap {
  std::vector<std::size_t> image;

  std::size_t operator()(std::size_t i) const { return image.at(i); }
  friend bool operator==(const ParaphraseMap&, const ParaphraseMap&) = default;
  friend auto operator<=>(const ParaphraseMap&, const ParaphraseMap&) = default;

  static ParaphraseMap identity(std::size_t n) {
    ParaphraseMap m;
    m.image.resize(n);
    std::iota(m.image.begin(), m.image.end(), 0);
    return m;
  }
};

/// (a ∘ b)(i) = a(b(i)).
inline ParaphraseMap compose(const ParaphraseMap& a, const ParaphraseMap& b) {
  ParaphraseMap out;
  out.image.resize(b.image.size());
  for (std::size_t i = 0; i < b.image.size(); ++i) out.image[i] = a.image.at(b.image[i]);
  return out;
}

inline constexpr std::size_t kDefaultGroupBound = 10;

/// Every referent-preserving permutation of w's language: the product of the
/// symmetric groups on each reference class.
inline std::vector<ParaphraseMap> enumerate_paraphrase_maps(
    const WorldModel& w, std::size_t bound = kDefaultGroupBound) {
  const auto& lang = w.language();
  if (lang.size() > bound) {
    throw CapacityError("language of " + std::to_string(lang.size()) +
                        " strings exceeds the group enumeration bound " +
                        std::to_string(bound));
  }
  std::map<std::size_t, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < lang.size(); ++i) {
    classes[w.reference().at(lang[i])].push_back(i);
  }
  std::vector<ParaphraseMap> maps{ParaphraseMap::identity(lang.size())};
  for (const auto& [state, members] : classes) {
    std::vector<ParaphraseMap> next;
    std::vector<std::size_t> perm = members;
    do {
      for (const auto& base : maps) {
        ParaphraseMap m = base;
        for (std::size_t k = 0; k < members.size(); ++k) m.image[members[k]] = perm[k];
        next.push_back(std::move(m));
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    maps = std::move(next);
  }
  std::sort(maps.begin(), maps.end());
  return maps;
}

struct AxiomResult {
  std::string name;
  bool passed = true;
  std::string witness;
};

struct AxiomReport {
  std::vector<AxiomResult> results;

  bool all_passed() const {
    return std::all_of(results.begin(), results.end(),
                       [](const AxiomResult& r) { return r.passed; });
  }

  const AxiomResult& get(const std::string& name) const {
    for (const auto& r : results) {
      if (r.name == name) return r;
    }
    throw DomainError("no axiom named '" + name + "'");
  }
};

/// Brute-force check that `maps` is a group of paraphrase maps of w's
/// language: each map a symmetry of L, each referent-preserving, and the set
/// closed under composition, associative, with identity and inverses.
inline AxiomReport verify_group_axioms(const WorldModel& w,
                                       const std::vector<ParaphraseMap>& maps,
                                       std::size_t bound = kDefaultGroupBound) {
  const auto& lang = w.language();
  const std::size_t n = lang.size();
  if (n > bound) {
    throw CapacityError("language of " + std::to_string(n) +
                        " strings exceeds the brute-force bound " +
                        std::to_string(bound));
  }
  AxiomReport report;
  auto fail = [](AxiomResult& r, std::string why) {
    if (r.passed) {
      r.passed = false;
      r.witness = std::move(why);
    }
  };

  AxiomResult symmetry;
  symmetry.name = "symmetry";
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto& img = maps[k].image;
    if (img.size() != n) {
      fail(symmetry, "map " + std::to_string(k) + " is not defined on all of L");
      continue;
    }
    std::vector<bool> hit(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (img[i] >= n || hit[img[i]]) {
        fail(symmetry, "map " + std::to_string(k) + " is not a bijection of L at '" +
                           lang[i] + "'");
        break;
      }
      hit[img[i]] = true;
    }
  }
  report.results.push_back(symmetry);
  if (!symmetry.passed) return report;

  AxiomResult paraphrase;
  paraphrase.name = "paraphrase";
  for (std::size_t k = 0; k < maps.size() && paraphrase.passed; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = maps[k].image[i];
      if (w.reference().at(lang[i]) != w.reference().at(lang[j])) {
        fail(paraphrase, "map " + std::to_string(k) + " sends '" + lang[i] +
                             "' to '" + lang[j] + "' with a different referent");
        break;
      }
    }
  }
  report.results.push_back(paraphrase);

  std::set<ParaphraseMap> members(maps.begin(), maps.end());

  AxiomResult closure;
  closure.name = "closure";
  for (std::size_t a = 0; a < maps.size() && closure.passed; ++a) {
    for (std::size_t b = 0; b < maps.size(); ++b) {
      if (!members.count(compose(maps[a], maps[b]))) {
        fail(closure, "map " + std::to_string(a) + " after map " +
                          std::to_string(b) + " is not in the set");
        break;
      }
    }
  }
  report.results.push_back(closure);

  AxiomResult assoc;
  assoc.name = "associativity";
  for (std::size_t a = 0; a < maps.size() && assoc.passed; ++a) {
    for (std::size_t b = 0; b < maps.size() && assoc.passed; ++b) {
      const auto ab = compose(maps[a], maps[b]);
      for (std::size_t c = 0; c < maps.size(); ++c) {
        if (compose(ab, maps[c]) != compose(maps[a], compose(maps[b], maps[c]))) {
          fail(assoc, "maps (" + std::to_string(a) + ", " + std::to_string(b) +
                          ", " + std::to_string(c) + ")");
          break;
        }
      }
    }
  }
  report.results.push_back(assoc);

  AxiomResult identity;
  identity.name = "identity";
  if (!members.count(ParaphraseMap::identity(n))) {
    fail(identity, "identity permutation is missing");
  }
  report.results.push_back(identity);

  AxiomResult inverse;
  inverse.name = "inverse";
  for (std::size_t k = 0; k < maps.size(); ++k) {
    ParaphraseMap inv;
    inv.image.resize(n);
    for (std::size_t i = 0; i < n; ++i) inv.image[maps[k].image[i]] = i;
    if (!members.count(inv)) {
      fail(inverse, "inverse of map " + std::to_string(k) + " is not in the set");
      break;
    }
  }
  report.results.push_back(inverse);
  return report;
}

// Rules file: JSON lines {"pattern":..., "replacement":..., "bidirectional":bool}.
// Pairs file: JSON lines {"a":..., "b":..., "valid":bool}.

namespace detail {

template <typename F>
void for_each_json_line(const std::string& path, const char* what, F&& f) {
  std::ifstream in(path);
  if (!in) throw ParseError(std::string("cannot open ") + what + " '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(what) + " '" + path + "': " + e.what(), lineno);
    }
    try {
      f(j, lineno);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(what) + " '" + path + "': " + e.what(), lineno);
    } catch (const ParseError& e) {
      if (e.line() != 0) throw;
      throw ParseError(std::string(what) + " '" + path + "': " + e.what(), lineno);
    }
  }
}

}  // namespace detail

inline std::vector<RewriteRule> load_rules(const std::string& path) {
  std::vector<RewriteRule> rules;
  detail::for_each_json_line(path, "rules file", [&](const nlohmann::json& j, std::size_t) {
    rules.emplace_back(j.at("pattern").get<std::string>(),
                       j.at("replacement").get<std::string>(),
                       j.value("bidirectional", false), j.value("note", std::string{}));
  });
  return rules;
}

inline std::vector<ParaphrasePair> load_pairs(const std::string& path) {
  std::vector<ParaphrasePair> pairs;
  detail::for_each_json_line(path, "pairs file", [&](const nlohmann::json& j, std::size_t) {
    pairs.push_back({j.at("a").get<std::string>(), j.at("b").get<std::string>(),
                     j.value("valid", true)});
  });
  return pairs;
}

}  // namespace lbp
