#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lbp/errors.hpp"
#include "lbp/sentence.hpp"

namespace lbp {

/// Opaque identifier of a state of the world.
using StateId = std::string;

/// A truth-value assignment to every state of the world. Valuations are
/// indexed by the owning world's state order.
struct Structure {
  std::string name;
  std::vector<std::uint8_t> valuation;

  bool obtains(std::size_t state) const { return valuation.at(state) != 0; }

  friend bool operator==(const Structure&, const Structure&) = default;
};

/// Default upper bound on |states| for exhaustive structure enumeration.
inline constexpr std::size_t kDefaultEnumerationBound = 20;

/// All 2^|states| valuation tables. Structure k assigns bit i of k to state i
/// and is named "v" followed by the valuation bits in state order.
inline std::vector<Structure> enumerate_structures(
    const std::vector<StateId>& states,
    std::size_t bound = kDefaultEnumerationBound) {
  if (states.empty()) throw DomainError("state space must be non-empty");
  if (states.size() > bound) {
    throw CapacityError("cannot enumerate structures over " +
                        std::to_string(states.size()) + " states (bound " +
                        std::to_string(bound) + ")");
  }
  const std::size_t n = states.size();
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<Structure> out;
  out.reserve(count);
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    Structure s;
    s.name.reserve(n + 1);
    s.name.push_back('v');
    s.valuation.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.valuation[i] = static_cast<std::uint8_t>((mask >> i) & 1u);
      s.name.push_back(s.valuation[i] ? '1' : '0');
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Whether the structure family is every possible valuation or a given subset.
/// Synonymy over a given subset is only synonymy relative to that subset.
enum class StructureFamily { kGiven, kFull };

/// The formal universe: a language, its states of the world, the structures
/// that value those states, and the total single-valued reference map.
class WorldModel {
 public:
  /// Validates and builds a world. `reference` maps each string of the
  /// language (raw or normalized) to a state id; `designated` names s0.
  static WorldModel create(std::vector<StateId> states,
                           std::vector<Structure> structures,
                           const std::map<std::string, StateId>& reference,
                           const std::vector<std::string>& language,
                           const std::string& designated = "s0") {
    WorldModel w;
    if (states.empty()) throw DomainError("state space must be non-empty");
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (!w.state_index_.emplace(states[i], i).second) {
        throw DomainError("duplicate state id '" + states[i] + "'");
      }
    }
    w.states_ = std::move(states);

    std::set<std::string> lang;
    for (const auto& l : language) lang.insert(normalize(l));
    for (const auto& [raw, state] : reference) {
      std::string key = normalize(raw);
      if (!lang.count(key)) {
        throw DomainError("reference given for string outside the language: '" +
                          raw + "'");
      }
      auto it = w.state_index_.find(state);
      if (it == w.state_index_.end()) {
        throw DomainError("string '" + raw + "' refers to unknown state '" +
                          state + "'");
      }
      auto [pos, inserted] = w.reference_.emplace(key, it->second);
      if (!inserted && pos->second != it->second) {
        throw DomainError("string '" + raw + "' refers to two states");
      }
    }
    for (const auto& l : lang) {
      if (!w.reference_.count(l)) {
        throw DomainError("string '" + l + "' has no referent");
      }
    }
    w.language_.assign(lang.begin(), lang.end());

    std::optional<std::size_t> s0;
    std::set<std::string> names;
    for (std::size_t i = 0; i < structures.size(); ++i) {
      const auto& s = structures[i];
      if (s.valuation.size() != w.states_.size()) {
        throw DomainError("structure '" + s.name +
                          "' is not total over the state space");
      }
      if (!names.insert(s.name).second) {
        throw DomainError("duplicate structure name '" + s.name + "'");
      }
      if (s.name == designated) s0 = i;
    }
    if (!s0) throw DomainError("no designated structure '" + designated + "'");
    w.structures_ = std::move(structures);
    w.designated_ = *s0;
    w.family_ = w.detect_family();
    return w;
  }

  /// Builds a world whose structure family is the full 2^|states| set; the
  /// structure equal to `actual` is designated s0 (and renamed "s0").
  static WorldModel with_full_structures(
      std::vector<StateId> states,
      const std::map<std::string, StateId>& reference,
      const std::vector<std::string>& language,
      const std::vector<std::uint8_t>& actual,
      std::size_t bound = kDefaultEnumerationBound) {
    auto structures = enumerate_structures(states, bound);
    if (actual.size() != states.size()) {
      throw DomainError("actual valuation is not total over the state space");
    }
    std::uint64_t mask = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
      if (actual[i]) mask |= std::uint64_t{1} << i;
    }
    structures[mask].name = "s0";
    return create(std::move(states), std::move(structures), reference,
                  language, "s0");
  }

  const std::vector<std::string>& language() const noexcept { return language_; }
  const std::vector<StateId>& states() const noexcept { return states_; }
  const std::vector<Structure>& structures() const noexcept { return structures_; }
  const Structure& designated() const { return structures_[designated_]; }
  std::size_t designated_index() const noexcept { return designated_; }
  StructureFamily family() const noexcept { return family_; }

  bool contains(const SentenceString& l) const {
    return reference_.count(l.text()) != 0;
  }

  /// Index of R(l) in states().
  std::size_t referent(const SentenceString& l) const {
    auto it = reference_.find(l.text());
    if (it == reference_.end()) {
      throw DomainError("string outside the language: '" + l.raw() + "'");
    }
    return it->second;
  }

  const StateId& referent_id(const SentenceString& l) const {
    return states_[referent(l)];
  }

  std::size_t state_index(const StateId& id) const {
    auto it = state_index_.find(id);
    if (it == state_index_.end()) throw DomainError("unknown state '" + id + "'");
    return it->second;
  }

  const Structure* find_structure(const std::string& name) const {
    for (const auto& s : structures_) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  bool has_structure(const Structure& s) const {
    const Structure* mine = find_structure(s.name);
    return mine != nullptr && mine->valuation == s.valuation;
  }

  const std::map<std::string, std::size_t>& reference() const noexcept {
    return reference_;
  }

 private:
  StructureFamily detect_family() const {
    if (states_.size() >= 63) return StructureFamily::kGiven;
    const std::uint64_t full = std::uint64_t{1} << states_.size();
    if (structures_.size() != full) return StructureFamily::kGiven;
    std::set<std::vector<std::uint8_t>> distinct;
    for (const auto& s : structures_) distinct.insert(s.valuation);
    return distinct.size() == full ? StructureFamily::kFull
                                   : StructureFamily::kGiven;
  }

  std::vector<std::string> language_;
  std::vector<StateId> states_;
  std::unordered_map<StateId, std::size_t> state_index_;
  std::vector<Structure> structures_;
  std::size_t designated_ = 0;
  std::map<std::string, std::size_t> reference_;
  StructureFamily family_ = StructureFamily::kGiven;
};

/// V_s[R(l)].
inline bool evaluate_truth(const WorldModel& w, const Structure& s,
                           const SentenceString& l) {
  if (!w.has_structure(s)) {
    throw DomainError("structure '" + s.name + "' is not part of the world");
  }
  return s.obtains(w.referent(l));
}

/// V_0[R(l)].
inline bool actually_true(const WorldModel& w, const SentenceString& l) {
  return w.designated().obtains(w.referent(l));
}

/// True iff l1 and l2 agree under every structure of the world. Relative to
/// the given family unless w.family() is kFull.
inline bool are_synonymous(const WorldModel& w, const SentenceString& l1,
                           const SentenceString& l2) {
  const std::size_t r1 = w.referent(l1);
  const std::size_t r2 = w.referent(l2);
  if (r1 == r2) return true;
  for (const auto& s : w.structures()) {
    if (s.valuation[r1] != s.valuation[r2]) return false;
  }
  return true;
}

inline const char* to_string(StructureFamily f) {
  return f == StructureFamily::kFull ? "full" : "relative-to-given-S";
}

// World file (JSON):
// {"states":[...], "structures":[{"name":"s0","valuation":{state:0|1}}...],
//  "reference":{string:state}, "language":[strings]}

inline WorldModel world_from_json(const nlohmann::json& j) {
  try {
    auto states = j.at("states").get<std::vector<StateId>>();
    std::vector<Structure> structures;
    for (const auto& js : j.at("structures")) {
      Structure s;
      s.name = js.at("name").get<std::string>();
      s.valuation.assign(states.size(), 0);
      std::vector<bool> seen(states.size(), false);
      for (const auto& [state, bit] : js.at("valuation").items()) {
        auto pos = std::find(states.begin(), states.end(), state);
        if (pos == states.end()) {
          throw DomainError("structure '" + s.name + "' values unknown state '" +
                            state + "'");
        }
        const int v = bit.get<int>();
        if (v != 0 && v != 1) {
          throw DomainError("valuation must be 0 or 1 for state '" + state + "'");
        }
        const auto idx = static_cast<std::size_t>(pos - states.begin());
        s.valuation[idx] = static_cast<std::uint8_t>(v);
        seen[idx] = true;
      }
      if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw DomainError("structure '" + s.name +
                          "' is not total over the state space");
      }
      structures.push_back(std::move(s));
    }
    auto reference = j.at("reference").get<std::map<std::string, StateId>>();
    auto language = j.at("language").get<std::vector<std::string>>();
    return WorldModel::create(std::move(states), std::move(structures),
                              reference, language);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("world file: ") + e.what());
  }
}

inline WorldModel load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open world file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("world file '" + path + "': " + e.what());
  }
  return world_from_json(j);
}

inline nlohmann::json to_json(const WorldModel& w) {
  nlohmann::json j;
  j["states"] = w.states();
  nlohmann::json structures = nlohmann::json::array();
  for (const auto& s : w.structures()) {
    nlohmann::json val = nlohmann::json::object();
    for (std::size_t i = 0; i < w.states().size(); ++i) {
      val[w.states()[i]] = static_cast<int>(s.valuation[i]);
    }
    structures.push_back({{"name", s.name}, {"valuation", val}});
  }
  j["structures"] = structures;
  nlohmann::json ref = nlohmann::json::object();
  for (const auto& [l, idx] : w.reference()) ref[l] = w.states()[idx];
  j["reference"] = ref;
  j["language"] = w.language();
  return j;
}

}  // namespace lbp
