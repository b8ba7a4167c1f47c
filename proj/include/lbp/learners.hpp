#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lbp/errors.hpp"
#include "lbp/evidence.hpp"
#include "lbp/random.hpp"
#include "lbp/semantics.hpp"

namespace lbp {

/// Atomic grid proposition: cell (x, y) contains `object`.
struct GridFact {
  int x = 0;
  int y = 0;
  std::string object;

  friend bool operator==(const GridFact&, const GridFact&) = default;
};

inline StateId grid_state_id(const GridFact& f) {
  return "cell(" + std::to_string(f.x) + "," + std::to_string(f.y) +
         ")-contains-" + f.object;
}

inline GridFact parse_grid_state_id(const StateId& id) {
  GridFact f;
  const std::string head = "cell(";
  const std::string mid = ")-contains-";
  const auto comma = id.find(',');
  const auto close = id.find(mid);
  if (id.rfind(head, 0) != 0 || comma == std::string::npos ||
      close == std::string::npos || comma > close ||
      close + mid.size() >= id.size()) {
    throw DomainError("not a grid state id: '" + id + "'");
  }
  try {
    f.x = std::stoi(id.substr(head.size(), comma - head.size()));
    f.y = std::stoi(id.substr(comma + 1, close - comma - 1));
  } catch (const std::exception&) {
    throw DomainError("not a grid state id: '" + id + "'");
  }
  f.object = id.substr(close + mid.size());
  return f;
}

struct WorldSpec {
  int width = 0;
  int height = 0;
  std::vector<std::string> vocabulary;
  double density = 0.5;
  std::uint64_t seed = 0;
};

/// Synthetic environment: one boolean fact per (cell, object) pair. The facts
/// are the actual valuation V0 over the grid's state space.
class GridWorld {
 public:
  GridWorld(int width, int height, std::vector<std::string> vocabulary,
            std::vector<std::uint8_t> facts)
      : width_(width), height_(height), vocabulary_(std::move(vocabulary)),
        facts_(std::move(facts)) {
    if (width_ <= 0 || height_ <= 0 || vocabulary_.empty()) {
      throw DomainError("grid world must have a non-empty state space");
    }
    std::set<std::string> distinct(vocabulary_.begin(), vocabulary_.end());
    if (distinct.size() != vocabulary_.size()) {
      throw DomainError("grid vocabulary has duplicate objects");
    }
    for (const auto& o : vocabulary_) {
      if (o.empty() || o.find_first_of(" \t\n") != std::string::npos) {
        throw DomainError("grid object names must be single tokens: '" + o + "'");
      }
    }
    if (facts_.size() != state_count()) {
      throw DomainError("grid facts are not total over the state space");
    }
    for (std::size_t i = 0; i < state_count(); ++i) {
      index_.emplace(grid_state_id(fact(i)), i);
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  std::size_t state_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_) *
           vocabulary_.size();
  }

  /// State i enumerates y, then x, then object.
  GridFact fact(std::size_t i) const {
    const std::size_t v = vocabulary_.size();
    const std::size_t cell = i / v;
    return {static_cast<int>(cell % static_cast<std::size_t>(width_)),
            static_cast<int>(cell / static_cast<std::size_t>(width_)),
            vocabulary_[i % v]};
  }

  StateId state(std::size_t i) const { return grid_state_id(fact(i)); }

  std::vector<StateId> states() const {
    std::vector<StateId> out;
    out.reserve(state_count());
    for (std::size_t i = 0; i < state_count(); ++i) out.push_back(state(i));
    return out;
  }

  std::size_t index(const StateId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DomainError("unknown grid state '" + id + "'");
    return it->second;
  }

  bool holds(std::size_t i) const { return facts_.at(i) != 0; }
  bool holds(const StateId& id) const { return holds(index(id)); }
  const std::vector<std::uint8_t>& facts() const noexcept { return facts_; }

  friend bool operator==(const GridWorld& a, const GridWorld& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.vocabulary_ == b.vocabulary_ && a.facts_ == b.facts_;
  }

 private:
  int width_;
  int height_;
  std::vector<std::string> vocabulary_;
  std::vector<std::uint8_t> facts_;
  std::unordered_map<StateId, std::size_t> index_;
};

/// Each fact holds independently with probability `density`.
inline GridWorld generate_world(int width, int height,
                                const std::vector<std::string>& vocabulary,
                                double density, std::uint64_t seed) {
  if (width <= 0 || height <= 0 || vocabulary.empty()) {
    throw DomainError("grid world must have a non-empty state space");
  }
  if (!(density >= 0.0 && density <= 1.0)) {
    throw DomainError("density must lie in [0, 1]");
  }
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(width) *
                        static_cast<std::size_t>(height) * vocabulary.size();
  std::vector<std::uint8_t> facts(n);
  for (auto& f : facts) f = rng.bernoulli(density) ? 1 : 0;
  return GridWorld(width, height, vocabulary, std::move(facts));
}

inline GridWorld generate_world(const WorldSpec& spec) {
  return generate_world(spec.width, spec.height, spec.vocabulary, spec.density,
                        spec.seed);
}

inline WorldSpec world_spec_from_json(const nlohmann::json& j) {
  try {
    WorldSpec s;
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    s.density = j.value("density", 0.5);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("world spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const WorldSpec& s) {
  return {{"width", s.width},     {"height", s.height}, {"vocabulary", s.vocabulary},
          {"density", s.density}, {"seed", s.seed}};
}

/// Perceptual learner behaviour: exact, or independent Bernoulli(epsilon)
/// flips per fact.
struct PerceptionMode {
  bool noisy = false;
  double epsilon = 0.0;

  static PerceptionMode oracle() { return {}; }
  static PerceptionMode with_noise(double eps) { return {true, eps}; }
  std::string name() const { return noisy ? "noisy" : "oracle"; }
};

struct PerceptualReading {
  StateId state;
  bool observed = false;
  PerceptionMode mode;
};

/// One reading per state, in state order.
inline std::vector<PerceptualReading> perceive(const GridWorld& world,
                                               PerceptionMode mode,
                                               std::uint64_t seed) {
  if (mode.noisy && !(mode.epsilon >= 0.0 && mode.epsilon < 1.0)) {
    throw DomainError("noise epsilon must lie in [0, 1)");
  }
  Rng rng(seed);
  std::vector<PerceptualReading> out;
  out.reserve(world.state_count());
  for (std::size_t i = 0; i < world.state_count(); ++i) {
    bool observed = world.holds(i);
    if (mode.noisy && rng.bernoulli(mode.epsilon)) observed = !observed;
    out.push_back({world.state(i), observed, mode});
  }
  return out;
}

// Readings dump: JSON lines {"state":..., "observed":0|1, "mode":..., "epsilon":...}.

inline void save_readings(const std::vector<PerceptualReading>& readings,
                          std::ostream& out) {
  for (const auto& r : readings) {
    nlohmann::json j{{"state", r.state},
                     {"observed", r.observed ? 1 : 0},
                     {"mode", r.mode.name()},
                     {"epsilon", r.mode.epsilon}};
    out << j.dump() << '\n';
  }
}

inline std::vector<PerceptualReading> load_readings(std::istream& in) {
  std::vector<PerceptualReading> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PerceptualReading r;
      r.state = j.at("state").get<std::string>();
      r.observed = j.at("observed").get<int>() != 0;
      r.mode.noisy = j.at("mode").get<std::string>() == "noisy";
      r.mode.epsilon = j.value("epsilon", 0.0);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("readings: ") + e.what(), lineno);
    }
  }
  return out;
}

/// Extensional map from grid states to canonical source strings. Templates
/// are keyed by object name, with "*" as the fallback; placeholders {x},
/// {y} and {object} are substituted.
class TemplateRenderer {
 public:
  TemplateRenderer() = default;
  explicit TemplateRenderer(std::map<std::string, std::string> templates)
      : templates_(std::move(templates)) {}

  const std::map<std::string, std::string>& templates() const noexcept {
    return templates_;
  }

  SentenceString render(const StateId& state) const {
    const GridFact f = parse_grid_state_id(state);
    auto it = templates_.find(f.object);
    if (it == templates_.end()) it = templates_.find("*");
    if (it == templates_.end()) {
      throw DomainError("no template covers state '" + state + "'");
    }
    std::string out = it->second;
    substitute(out, "{x}", std::to_string(f.x));
    substitute(out, "{y}", std::to_string(f.y));
    substitute(out, "{object}", f.object);
    return SentenceString(out);
  }

 private:
  static void substitute(std::string& s, const std::string& key,
                         const std::string& value) {
    for (auto pos = s.find(key); pos != std::string::npos;
         pos = s.find(key, pos + value.size())) {
      s.replace(pos, key.size(), value);
    }
  }

  std::map<std::string, std::string> templates_;
};

/// Canonical source string per reading, labeled with the observed value.
/// Throws if a state has no template or two states render identically.
inline std::vector<LabeledString> render_source(
    const std::vector<PerceptualReading>& readings, const TemplateRenderer& t) {
  std::vector<LabeledString> out;
  out.reserve(readings.size());
  std::unordered_map<std::string, StateId> rendered;
  for (const auto& r : readings) {
    SentenceString s = t.render(r.state);
    auto [it, inserted] = rendered.emplace(s.text(), r.state);
    if (!inserted && it->second != r.state) {
      throw DomainError("templates are not injective: states '" + it->second +
                        "' and '" + r.state + "' both render as '" + s.text() + "'");
    }
    out.push_back({std::move(s), r.observed});
  }
  return out;
}

/// The canonical source language L+ of a world, in state order.
inline std::vector<std::string> canonical_language(const GridWorld& world,
                                                   const TemplateRenderer& t) {
  std::vector<std::string> out;
  out.reserve(world.state_count());
  for (std::size_t i = 0; i < world.state_count(); ++i) {
    out.push_back(t.render(world.state(i)).text());
  }
  std::set<std::string> distinct(out.begin(), out.end());
  if (distinct.size() != out.size()) {
    throw DomainError("templates are not injective over the grid's states");
  }
  return out;
}

}  // namespace lbp
