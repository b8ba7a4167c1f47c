#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lbp/errors.hpp"
#include "lbp/orbit.hpp"
#include "lbp/sentence.hpp"

namespace lbp {

/// A string with the (possibly estimated) truth value of its orbit.
struct LabeledString {
  SentenceString string;
  bool label = false;
};

/// How a member entered the evidence set.
struct Provenance {
  bool direct = true;
  std::string paraphrase_of;  ///< direct member this one paraphrases

  std::string to_string() const {
    return direct ? "direct" : "paraphrase-of:" + paraphrase_of;
  }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Whether labels came from ground truth or from an estimating learner.
struct ValuationSource {
  std::string learner;  ///< empty for the oracle

  static ValuationSource oracle() { return {}; }
  static ValuationSource estimated(std::string id) { return {std::move(id)}; }

  bool is_oracle() const noexcept { return learner.empty(); }
  std::string to_string() const {
    return is_oracle() ? "oracle" : "estimated:" + learner;
  }
  static ValuationSource parse(const std::string& s) {
    if (s == "oracle") return oracle();
    const std::string prefix = "estimated:";
    if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
      return estimated(s.substr(prefix.size()));
    }
    throw ParseError("unknown valuation source '" + s + "'");
  }
  friend bool operator==(const ValuationSource&, const ValuationSource&) = default;
};

/// The paraphrase-closed set of strings whose orbits are valued true.
/// Membership is exact equality of normalized strings.
class EvidenceSet {
 public:
  EvidenceSet() = default;
  EvidenceSet(std::map<std::string, Provenance> members, ValuationSource source)
      : members_(std::move(members)), source_(std::move(source)) {}

  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  const ValuationSource& source() const noexcept { return source_; }
  const std::map<std::string, Provenance>& members() const noexcept {
    return members_;
  }

  const Provenance* find(const SentenceString& s) const {
    auto it = members_.find(s.text());
    return it == members_.end() ? nullptr : &it->second;
  }

  /// The direct entry a member traces back to (itself when direct).
  std::optional<std::string> root_of(const SentenceString& s) const {
    const Provenance* p = find(s);
    if (!p) return std::nullopt;
    return p->direct ? s.text() : p->paraphrase_of;
  }

  std::vector<std::string> direct_members() const {
    std::vector<std::string> out;
    for (const auto& [text, prov] : members_) {
      if (prov.direct) out.push_back(text);
    }
    return out;
  }

  friend bool operator==(const EvidenceSet&, const EvidenceSet&) = default;

 private:
  std::map<std::string, Provenance> members_;
  ValuationSource source_;
};

inline bool contains(const EvidenceSet& e, const SentenceString& candidate) {
  return e.find(candidate) != nullptr;
}

/// Closure under `p` of the strings labeled 1. Labels attach to orbits: a
/// 0 and a 1 inside one orbit is an incoherent valuation and throws.
inline EvidenceSet build_evidence(const std::vector<LabeledString>& labeled,
                                  const OrbitPartition& p,
                                  ValuationSource source = ValuationSource::oracle()) {
  // Orbit key: block index for strings in the partition domain, otherwise a
  // singleton keyed by the string itself.
  struct OrbitLabel {
    bool label;
    std::string witness;
  };
  std::map<std::size_t, OrbitLabel> block_label;
  std::map<std::string, OrbitLabel> singleton_label;
  std::map<std::size_t, std::vector<std::string>> block_direct;
  std::vector<std::string> singleton_direct;

  auto conflict = [](const std::string& a, bool la, const std::string& b) {
    return LabelConflictError("conflicting labels in one orbit: '" + a + "' is " +
                              (la ? "1" : "0") + " but '" + b + "' is " +
                              (la ? "0" : "1"));
  };

  for (const auto& ls : labeled) {
    const std::string& text = ls.string.text();
    if (auto idx = p.index_of(text)) {
      const std::size_t b = p.block_of(*idx);
      auto [it, inserted] = block_label.emplace(b, OrbitLabel{ls.label, text});
      if (!inserted && it->second.label != ls.label) {
        throw conflict(it->second.witness, it->second.label, text);
      }
      if (ls.label) block_direct[b].push_back(text);
    } else {
      auto [it, inserted] = singleton_label.emplace(text, OrbitLabel{ls.label, text});
      if (!inserted && it->second.label != ls.label) {
        throw conflict(text, it->second.label, text);
      }
      if (ls.label && inserted) singleton_direct.push_back(text);
    }
  }

  std::map<std::string, Provenance> members;
  for (auto& [b, direct] : block_direct) {
    std::sort(direct.begin(), direct.end());
    direct.erase(std::unique(direct.begin(), direct.end()), direct.end());
    const std::string& root = direct.front();
    for (const auto& m : p.block(b)) members.emplace(m, Provenance{false, root});
    for (const auto& d : direct) members[d] = Provenance{true, {}};
  }
  for (const auto& s : singleton_direct) members.emplace(s, Provenance{true, {}});
  return EvidenceSet(std::move(members), std::move(source));
}

/// Reads a corpus of JSON lines {"text": string, "label": 0|1 (optional)}.
/// Duplicates keep their first occurrence; a duplicate with a different
/// label throws.
inline std::vector<LabeledString> ingest_corpus(std::istream& in,
                                                bool default_label,
                                                const std::string& name = "corpus") {
  std::vector<LabeledString> out;
  std::unordered_map<std::string, std::pair<bool, std::size_t>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(name + ": " + e.what(), lineno);
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw ParseError(name + ": record needs a string field \"text\"", lineno);
    }
    bool label = default_label;
    if (j.contains("label")) {
      const auto& jl = j["label"];
      if (jl.is_boolean()) {
        label = jl.get<bool>();
      } else if (jl.is_number_integer() && (jl.get<int>() == 0 || jl.get<int>() == 1)) {
        label = jl.get<int>() == 1;
      } else {
        throw ParseError(name + ": label must be 0 or 1", lineno);
      }
    }
    SentenceString s(j["text"].get<std::string>());
    if (s.empty()) throw ParseError(name + ": empty text", lineno);
    auto [it, inserted] = seen.emplace(s.text(), std::make_pair(label, lineno));
    if (!inserted) {
      if (it->second.first != label) {
        throw LabelConflictError(name + ": line " + std::to_string(lineno) +
                                 ": '" + s.text() + "' relabeled (first seen on line " +
                                 std::to_string(it->second.second) + ")");
      }
      continue;
    }
    out.push_back({std::move(s), label});
  }
  return out;
}

inline std::vector<LabeledString> ingest_corpus(const std::string& path,
                                                bool default_label) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus '" + path + "'");
  return ingest_corpus(in, default_label, "corpus '" + path + "'");
}

// Evidence snapshot: JSON lines {"provenance":..., "source":..., "text":...}
// sorted by text.

inline void save_snapshot(const EvidenceSet& e, std::ostream& out) {
  const std::string source = e.source().to_string();
  for (const auto& [text, prov] : e.members()) {
    nlohmann::json j{{"text", text}, {"provenance", prov.to_string()}, {"source", source}};
    out << j.dump() << '\n';
  }
}

inline std::string snapshot_string(const EvidenceSet& e) {
  std::ostringstream out;
  save_snapshot(e, out);
  return out.str();
}

inline EvidenceSet load_snapshot(std::istream& in, const std::string& name = "snapshot") {
  std::map<std::string, Provenance> members;
  std::optional<ValuationSource> source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto text = normalize(j.at("text").get<std::string>());
      const auto prov_s = j.at("provenance").get<std::string>();
      Provenance prov;
      const std::string prefix = "paraphrase-of:";
      if (prov_s == "direct") {
        prov = {true, {}};
      } else if (prov_s.rfind(prefix, 0) == 0) {
        prov = {false, normalize(prov_s.substr(prefix.size()))};
      } else {
        throw ParseError(name + ": bad provenance '" + prov_s + "'", lineno);
      }
      auto src = ValuationSource::parse(j.at("source").get<std::string>());
      if (source && !(*source == src)) {
        throw ParseError(name + ": mixed valuation sources", lineno);
      }
      source = src;
      if (!members.emplace(text, prov).second) {
        throw ParseError(name + ": duplicate entry '" + text + "'", lineno);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(name + ": " + e.what(), lineno);
    }
  }
  for (const auto& [text, prov] : members) {
    if (prov.direct) continue;
    auto it = members.find(prov.paraphrase_of);
    if (it == members.end() || !it->second.direct) {
      throw ParseError(name + ": provenance of '" + text +
                       "' does not end at a direct entry");
    }
  }
  return EvidenceSet(std::move(members), source.value_or(ValuationSource::oracle()));
}

inline EvidenceSet load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open evidence snapshot '" + path + "'");
  return load_snapshot(in, "snapshot '" + path + "'");
}

}  // namespace lbp
