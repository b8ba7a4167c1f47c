#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lbp/babbler.hpp"
#include "lbp/errors.hpp"
#include "lbp/evidence.hpp"
#include "lbp/external.hpp"
#include "lbp/learners.hpp"
#include "lbp/orbit.hpp"
#include "lbp/random.hpp"
#include "lbp/semantics.hpp"

namespace lbp {

inline const std::string kDefaultRejection = "I don't know.";

enum class PipelineMode { kTextToText, kMultimodal };

inline const char* to_string(PipelineMode m) {
  return m == PipelineMode::kTextToText ? "text-to-text" : "multimodal";
}

struct GeneratorConfig {
  bool external = false;
  std::string address;  ///< exec:<cmd> or tcp:<host>:<port>
  bool fallback_to_internal = false;
  std::chrono::milliseconds deadline = kDefaultGeneratorDeadline;
  std::string training_corpus;  ///< optional; defaults per mode
  std::size_t order = 2;
  double alpha = kDefaultAlpha;
  DecodeMode decode = DecodeMode::kSample;
  std::size_t top_k = 0;
  std::size_t max_tokens = 24;
};

/// Everything one Learn-Babble-Prune run needs. Paths are absolute or
/// relative to `base_dir`.
struct PipelineConfig {
  PipelineMode mode = PipelineMode::kTextToText;

  // Text-to-text evidence.
  std::string corpus;
  bool default_label = true;
  std::string language;    ///< optional extra strings (JSON lines {"text"})
  std::string world_file;  ///< optional; enables truth under V0

  // Multimodal evidence.
  std::optional<WorldSpec> world;
  std::map<std::string, std::string> templates;
  PerceptionMode perception;
  std::uint64_t perception_seed = 0;

  // Paraphrases.
  std::string rules;
  std::string pairs;
  ClosureCaps caps;

  GeneratorConfig generator;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> prompts{""};
  std::string rejection_output = kDefaultRejection;
  /// Resample up to this many times before rejecting. 1 is the plain
  /// one-candidate-per-trial procedure; larger values are an extension.
  std::size_t max_attempts = 1;
  std::size_t jobs = 1;

  std::string base_dir = ".";

  std::string resolve(const std::string& path) const {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string();
  }

  /// Input files this configuration reads, resolved.
  std::vector<std::string> input_files() const {
    std::vector<std::string> out;
    for (const auto* p : {&corpus, &language, &world_file, &rules, &pairs,
                          &generator.training_corpus}) {
      if (!p->empty()) out.push_back(resolve(*p));
    }
    return out;
  }
};

namespace detail {

template <typename T>
T config_field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j,
                                       const std::string& base_dir = ".") {
  using detail::config_field;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  c.base_dir = base_dir;
  const auto mode = config_field<std::string>(j, "mode", "text-to-text");
  if (mode == "text-to-text") {
    c.mode = PipelineMode::kTextToText;
  } else if (mode == "multimodal") {
    c.mode = PipelineMode::kMultimodal;
  } else {
    throw ConfigError("config field 'mode' must be text-to-text or multimodal");
  }
  c.corpus = config_field<std::string>(j, "corpus", "");
  c.default_label = config_field<int>(j, "default_label", 1) != 0;
  c.language = config_field<std::string>(j, "language", "");
  c.world_file = config_field<std::string>(j, "world_file", "");
  if (j.contains("world")) {
    try {
      c.world = world_spec_from_json(j["world"]);
    } catch (const ParseError& e) {
      throw ConfigError(std::string("config field 'world': ") + e.what());
    }
  }
  c.templates = config_field<std::map<std::string, std::string>>(j, "templates", {});
  if (j.contains("perception")) {
    const auto& p = j["perception"];
    const auto pm = config_field<std::string>(p, "mode", "oracle");
    if (pm == "oracle") {
      c.perception = PerceptionMode::oracle();
    } else if (pm == "noisy") {
      c.perception = PerceptionMode::with_noise(config_field<double>(p, "epsilon", 0.0));
    } else {
      throw ConfigError("config field 'perception.mode' must be oracle or noisy");
    }
    c.perception_seed = config_field<std::uint64_t>(p, "seed", 0);
  }
  c.rules = config_field<std::string>(j, "rules", "");
  c.pairs = config_field<std::string>(j, "pairs", "");
  if (j.contains("caps")) {
    c.caps.max_depth = config_field<std::size_t>(j["caps"], "max_depth", c.caps.max_depth);
    c.caps.max_derived =
        config_field<std::size_t>(j["caps"], "max_derived", c.caps.max_derived);
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    const auto kind = config_field<std::string>(g, "kind", "internal");
    if (kind == "external") {
      c.generator.external = true;
    } else if (kind != "internal") {
      throw ConfigError("config field 'generator.kind' must be internal or external");
    }
    c.generator.address = config_field<std::string>(g, "address", "");
    c.generator.fallback_to_internal = config_field<bool>(g, "fallback_to_internal", false);
    c.generator.deadline = std::chrono::milliseconds(config_field<long long>(
        g, "deadline_ms", kDefaultGeneratorDeadline.count()));
    c.generator.training_corpus = config_field<std::string>(g, "training_corpus", "");
    c.generator.order = config_field<std::size_t>(g, "order", 2);
    c.generator.alpha = config_field<double>(g, "alpha", kDefaultAlpha);
    c.generator.decode = parse_decode_mode(config_field<std::string>(g, "decode", "sample"));
    c.generator.top_k = config_field<std::size_t>(g, "top_k", 0);
    c.generator.max_tokens = config_field<std::size_t>(g, "max_tokens", 24);
  }
  c.trials = config_field<std::size_t>(j, "trials", 1);
  c.seed = config_field<std::uint64_t>(j, "seed", 0);
  c.prompts = config_field<std::vector<std::string>>(j, "prompts", {""});
  c.rejection_output = config_field<std::string>(j, "rejection_output", kDefaultRejection);
  c.max_attempts = config_field<std::size_t>(j, "max_attempts", 1);
  c.jobs = config_field<std::size_t>(j, "jobs", 1);
  return c;
}

/// Throws ConfigError naming the first missing or invalid field.
inline void validate(const PipelineConfig& c) {
  if (c.mode == PipelineMode::kTextToText) {
    if (c.corpus.empty()) throw ConfigError("text-to-text mode requires field 'corpus'");
  } else {
    if (!c.world) throw ConfigError("multimodal mode requires field 'world'");
    if (c.templates.empty()) throw ConfigError("multimodal mode requires field 'templates'");
    if (c.perception.noisy && !(c.perception.epsilon >= 0 && c.perception.epsilon < 1)) {
      throw ConfigError("field 'perception.epsilon' must lie in [0, 1)");
    }
  }
  if (c.generator.external && c.generator.address.empty()) {
    throw ConfigError("external generator requires field 'generator.address'");
  }
  if (c.generator.order < 1) throw ConfigError("field 'generator.order' must be >= 1");
  if (!(c.generator.alpha > 0)) throw ConfigError("field 'generator.alpha' must be > 0");
  if (c.generator.max_tokens == 0) throw ConfigError("field 'generator.max_tokens' must be > 0");
  if (c.generator.deadline.count() <= 0) {
    throw ConfigError("field 'generator.deadline_ms' must be > 0");
  }
  if (c.trials == 0) throw ConfigError("field 'trials' must be positive");
  if (c.prompts.empty()) throw ConfigError("field 'prompts' must not be empty");
  if (c.max_attempts == 0) throw ConfigError("field 'max_attempts' must be positive");
  if (c.jobs == 0) throw ConfigError("field 'jobs' must be positive");
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  auto dir = std::filesystem::path(path).parent_path().string();
  return config_from_json(j, dir.empty() ? "." : dir);
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["mode"] = to_string(c.mode);
  if (!c.corpus.empty()) j["corpus"] = c.corpus;
  j["default_label"] = c.default_label ? 1 : 0;
  if (!c.language.empty()) j["language"] = c.language;
  if (!c.world_file.empty()) j["world_file"] = c.world_file;
  if (c.world) j["world"] = to_json(*c.world);
  if (!c.templates.empty()) j["templates"] = c.templates;
  j["perception"] = {{"mode", c.perception.name()},
                     {"epsilon", c.perception.epsilon},
                     {"seed", c.perception_seed}};
  if (!c.rules.empty()) j["rules"] = c.rules;
  if (!c.pairs.empty()) j["pairs"] = c.pairs;
  j["caps"] = {{"max_depth", c.caps.max_depth}, {"max_derived", c.caps.max_derived}};
  nlohmann::json g{{"kind", c.generator.external ? "external" : "internal"},
                   {"fallback_to_internal", c.generator.fallback_to_internal},
                   {"deadline_ms", c.generator.deadline.count()},
                   {"order", c.generator.order},
                   {"alpha", c.generator.alpha},
                   {"decode", to_string(c.generator.decode)},
                   {"top_k", c.generator.top_k},
                   {"max_tokens", c.generator.max_tokens}};
  if (!c.generator.address.empty()) g["address"] = c.generator.address;
  if (!c.generator.training_corpus.empty()) g["training_corpus"] = c.generator.training_corpus;
  j["generator"] = g;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["prompts"] = c.prompts;
  j["rejection_output"] = c.rejection_output;
  j["max_attempts"] = c.max_attempts;
  j["jobs"] = c.jobs;
  return j;
}

/// One prompt, one (pruned) output.
struct TrialRecord {
  std::size_t trial = 0;
  std::string prompt;
  std::string candidate;  ///< normalized babbled candidate (last attempt)
  std::string output;     ///< candidate when accepted, else the rejection string
  bool accepted = false;
  std::optional<std::string> matched;  ///< evidence member equal to the candidate
  std::optional<std::string> root;     ///< direct evidence entry it traces to
  std::optional<bool> v0;              ///< truth under the actual valuation
  std::optional<bool> v0hat;           ///< truth under the estimated valuation
  std::size_t attempts = 1;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

namespace detail {

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string csv_bit(const std::optional<bool>& b) {
  return b ? (*b ? "1" : "0") : "";
}

}  // namespace detail

inline nlohmann::json to_json(const TrialRecord& r) {
  using detail::opt_json;
  return {{"trial", r.trial},         {"prompt", r.prompt},       {"candidate", r.candidate},
          {"output", r.output},       {"accepted", r.accepted},   {"matched", opt_json(r.matched)},
          {"root", opt_json(r.root)}, {"v0", opt_json(r.v0)},     {"v0hat", opt_json(r.v0hat)},
          {"attempts", r.attempts}};
}

inline TrialRecord record_from_json(const nlohmann::json& j) {
  using detail::opt_from;
  TrialRecord r;
  r.trial = j.at("trial").get<std::size_t>();
  r.prompt = j.at("prompt").get<std::string>();
  r.candidate = j.at("candidate").get<std::string>();
  r.output = j.at("output").get<std::string>();
  r.accepted = j.at("accepted").get<bool>();
  r.matched = opt_from<std::string>(j, "matched");
  r.root = opt_from<std::string>(j, "root");
  r.v0 = opt_from<bool>(j, "v0");
  r.v0hat = opt_from<bool>(j, "v0hat");
  r.attempts = j.value("attempts", std::size_t{1});
  if (r.accepted != r.matched.has_value()) {
    throw ParseError("trial " + std::to_string(r.trial) +
                     ": accepted must hold exactly when matched is present");
  }
  return r;
}

inline void write_records_jsonl(const std::vector<TrialRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<TrialRecord> read_records_jsonl(std::istream& in) {
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("trial records: ") + e.what(), lineno);
    }
  }
  return out;
}

/// CSV columns: trial, prompt, candidate, accepted, matched, v0, v0hat.
inline void write_records_csv(const std::vector<TrialRecord>& records, std::ostream& out) {
  using detail::csv_bit;
  using detail::csv_field;
  out << "trial,prompt,candidate,accepted,matched,v0,v0hat\n";
  for (const auto& r : records) {
    out << r.trial << ',' << csv_field(r.prompt) << ',' << csv_field(r.candidate) << ','
        << (r.accepted ? 1 : 0) << ',' << csv_field(r.matched.value_or("")) << ','
        << csv_bit(r.v0) << ',' << csv_bit(r.v0hat) << '\n';
  }
}

/// Acceptance, factuality and faithfulness rates. A rate is undefined
/// (nullopt) when no record in its population has a known truth value.
struct Report {
  struct Rates {
    std::size_t count = 0;
    std::optional<double> factuality;    ///< fraction with v0 = 1
    std::optional<double> faithfulness;  ///< fraction with v0hat = 1
    std::size_t v0_unknown = 0;
    std::size_t v0hat_unknown = 0;
    std::size_t false_under_v0 = 0;
  };

  std::size_t trials = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 0.0;
  Rates over_accepted;
  Rates raw;  ///< all babbled candidates, before pruning
};

namespace detail {

inline Report::Rates rates_of(const std::vector<const TrialRecord*>& recs) {
  Report::Rates r;
  r.count = recs.size();
  std::size_t v0_known = 0, v0_true = 0, vh_known = 0, vh_true = 0;
  for (const auto* t : recs) {
    if (t->v0) {
      ++v0_known;
      if (*t->v0) ++v0_true; else ++r.false_under_v0;
    } else {
      ++r.v0_unknown;
    }
    if (t->v0hat) {
      ++vh_known;
      if (*t->v0hat) ++vh_true;
    } else {
      ++r.v0hat_unknown;
    }
  }
  if (v0_known) r.factuality = static_cast<double>(v0_true) / static_cast<double>(v0_known);
  if (vh_known) r.faithfulness = static_cast<double>(vh_true) / static_cast<double>(vh_known);
  return r;
}

}  // namespace detail

inline Report summarize(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw Error("cannot summarize an empty set of trial records");
  Report rep;
  rep.trials = records.size();
  std::vector<const TrialRecord*> all, accepted;
  for (const auto& r : records) {
    all.push_back(&r);
    if (r.accepted) accepted.push_back(&r);
  }
  rep.accepted = accepted.size();
  rep.acceptance_rate = static_cast<double>(rep.accepted) / static_cast<double>(rep.trials);
  rep.over_accepted = detail::rates_of(accepted);
  rep.raw = detail::rates_of(all);
  return rep;
}

inline nlohmann::json to_json(const Report::Rates& r) {
  using detail::opt_json;
  return {{"count", r.count},
          {"factuality", opt_json(r.factuality)},
          {"faithfulness", opt_json(r.faithfulness)},
          {"v0_unknown", r.v0_unknown},
          {"v0hat_unknown", r.v0hat_unknown},
          {"false_under_v0", r.false_under_v0}};
}

inline nlohmann::json to_json(const Report& r) {
  return {{"trials", r.trials},
          {"accepted_count", r.accepted},
          {"acceptance_rate", r.acceptance_rate},
          {"accepted", to_json(r.over_accepted)},
          {"raw", to_json(r.raw)}};
}

/// State built by the Learn phase and shared read-only by all trials.
struct LearnedState {
  EvidenceSet evidence;
  OrbitPartition learned;  ///< Î: closure of rules and all pairs
  std::optional<NgramModel> model;
  std::function<std::optional<bool>(const std::string&)> truth_v0;
  std::function<std::optional<bool>(const std::string&)> truth_v0hat;
  // Multimodal only.
  std::optional<GridWorld> world;
  std::vector<PerceptualReading> readings;
};

namespace detail {

inline std::vector<SentenceString> read_text_lines(const std::string& path) {
  std::vector<SentenceString> out;
  for (auto& ls : ingest_corpus(path, true)) out.push_back(std::move(ls.string));
  return out;
}

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::pair<std::vector<RewriteRule>, std::vector<ParaphrasePair>> load_paraphrases(
    const PipelineConfig& cfg) {
  std::vector<RewriteRule> rules;
  std::vector<ParaphrasePair> pairs;
  if (!cfg.rules.empty()) rules = load_rules(cfg.resolve(cfg.rules));
  if (!cfg.pairs.empty()) pairs = load_pairs(cfg.resolve(cfg.pairs));
  return {std::move(rules), std::move(pairs)};
}

inline NgramModel train_from_config(const PipelineConfig& cfg,
                                    std::vector<SentenceString> fallback_corpus) {
  auto corpus = cfg.generator.training_corpus.empty()
                    ? std::move(fallback_corpus)
                    : read_text_lines(cfg.resolve(cfg.generator.training_corpus));
  return train(corpus, cfg.generator.order, cfg.generator.alpha);
}

}  // namespace detail

/// Learn phase of the text-to-text procedure: ingest evidence, close it
/// under the learned paraphrases, and train the internal generator.
inline LearnedState learn_text(const PipelineConfig& cfg) {
  return detail::in_stage("learn", [&] {
    LearnedState st;
    auto labeled = ingest_corpus(cfg.resolve(cfg.corpus), cfg.default_label);
    std::vector<std::string> language;
    for (const auto& ls : labeled) language.push_back(ls.string.text());
    if (!cfg.language.empty()) {
      for (const auto& s : detail::read_text_lines(cfg.resolve(cfg.language))) {
        language.push_back(s.text());
      }
    }
    std::shared_ptr<WorldModel> world;
    if (!cfg.world_file.empty()) {
      world = std::make_shared<WorldModel>(load_world(cfg.resolve(cfg.world_file)));
      language.insert(language.end(), world->language().begin(), world->language().end());
    }
    auto [rules, pairs] = detail::load_paraphrases(cfg);
    st.learned = orbits_from_rules(language, rules, pairs, cfg.caps);
    st.evidence = build_evidence(labeled, st.learned, ValuationSource::estimated("corpus"));

    if (world) {
      st.truth_v0 = [world](const std::string& s) -> std::optional<bool> {
        SentenceString l(s);
        if (!world->contains(l)) return std::nullopt;
        return actually_true(*world, l);
      };
    } else {
      st.truth_v0 = [](const std::string&) -> std::optional<bool> { return std::nullopt; };
    }
    // V̂0 of a string is the corpus label of its learned orbit, if any.
    auto orbit_label = std::make_shared<std::map<std::size_t, bool>>();
    for (const auto& ls : labeled) {
      if (auto i = st.learned.index_of(ls.string.text())) {
        orbit_label->emplace(st.learned.block_of(*i), ls.label);
      }
    }
    auto learned = std::make_shared<OrbitPartition>(st.learned);
    auto evidence = std::make_shared<EvidenceSet>(st.evidence);
    st.truth_v0hat = [learned, orbit_label, evidence](const std::string& s) -> std::optional<bool> {
      if (contains(*evidence, SentenceString(s))) return true;
      auto i = learned->index_of(s);
      if (!i) return std::nullopt;
      auto it = orbit_label->find(learned->block_of(*i));
      if (it == orbit_label->end()) return std::nullopt;
      return it->second;
    };

    std::vector<SentenceString> training;
    for (const auto& ls : labeled) training.push_back(ls.string);
    if (!cfg.generator.external || cfg.generator.fallback_to_internal) {
      st.model = detail::train_from_config(cfg, std::move(training));
    }
    return st;
  });
}

/// Learn phase of the multimodal procedure: perceive the grid, render the
/// source strings, close them under paraphrase, and build the evidence set.
/// Truth under V0 and V̂0 is resolved through the reference partition built
/// from the rules and the valid pairs only.
inline LearnedState learn_multimodal(const PipelineConfig& cfg) {
  return detail::in_stage("learn", [&] {
    LearnedState st;
    st.world = generate_world(*cfg.world);
    TemplateRenderer renderer(cfg.templates);
    st.readings = perceive(*st.world, cfg.perception, cfg.perception_seed);
    auto labeled = render_source(st.readings, renderer);

    std::vector<std::string> language = canonical_language(*st.world, renderer);
    if (!cfg.language.empty()) {
      for (const auto& s : detail::read_text_lines(cfg.resolve(cfg.language))) {
        language.push_back(s.text());
      }
    }
    auto [rules, pairs] = detail::load_paraphrases(cfg);
    st.learned = orbits_from_rules(language, rules, pairs, cfg.caps);
    std::vector<ParaphrasePair> valid_pairs;
    for (const auto& p : pairs) {
      if (p.valid) valid_pairs.push_back(p);
    }
    const OrbitPartition reference = valid_pairs.size() == pairs.size()
                                         ? st.learned
                                         : orbits_from_rules(language, rules, valid_pairs, cfg.caps);

    // Each reference orbit holds at most one canonical string.
    auto state_of = std::make_shared<std::unordered_map<std::string, std::size_t>>();
    std::map<std::size_t, std::size_t> block_state;
    for (std::size_t i = 0; i < st.world->state_count(); ++i) {
      const auto& text = labeled[i].string.text();
      const std::size_t b = reference.block_of(*reference.index_of(text));
      auto [it, inserted] = block_state.emplace(b, i);
      if (!inserted) {
        throw DomainError("paraphrases are not referent-preserving: '" +
                          labeled[it->second].string.text() + "' and '" + text +
                          "' describe different states but share an orbit");
      }
    }
    for (std::size_t k = 0; k < reference.size(); ++k) {
      auto it = block_state.find(reference.block_of(k));
      if (it != block_state.end()) state_of->emplace(reference.domain()[k], it->second);
    }

    const auto source = cfg.perception.noisy ? ValuationSource::estimated("noisy-perception")
                                             : ValuationSource::oracle();
    st.evidence = build_evidence(labeled, st.learned, source);

    auto facts = std::make_shared<std::vector<std::uint8_t>>(st.world->facts());
    auto observed = std::make_shared<std::vector<std::uint8_t>>();
    for (const auto& r : st.readings) observed->push_back(r.observed ? 1 : 0);
    st.truth_v0 = [state_of, facts](const std::string& s) -> std::optional<bool> {
      auto it = state_of->find(s);
      if (it == state_of->end()) return std::nullopt;
      return (*facts)[it->second] != 0;
    };
    st.truth_v0hat = [state_of, observed](const std::string& s) -> std::optional<bool> {
      auto it = state_of->find(s);
      if (it == state_of->end()) return std::nullopt;
      return (*observed)[it->second] != 0;
    };

    if (!cfg.generator.external || cfg.generator.fallback_to_internal) {
      std::vector<SentenceString> training;
      for (const auto& s : reference.domain()) training.emplace_back(s);
      st.model = detail::train_from_config(cfg, std::move(training));
    }
    return st;
  });
}

/// Runs the Babble and Prune phases for every trial over a learned state.
/// Trial t uses prompt t mod |prompts| and seed derive_seed(cfg.seed, t).
inline std::vector<TrialRecord> run_trials(const PipelineConfig& cfg, const LearnedState& st) {
  std::unique_ptr<ExternalGenerator> external;
  if (cfg.generator.external) {
    try {
      external = ExternalGenerator::open(cfg.generator.address,
                                         generator_deadline_from_env(cfg.generator.deadline));
    } catch (const GeneratorError& e) {
      if (!cfg.generator.fallback_to_internal) throw StageError("babble", e.what());
    }
  }

  auto generate = [&](const GenerationRequest& req) -> SentenceString {
    std::vector<SentenceString> out;
    if (external) {
      try {
        out = external->generate(req);
      } catch (const GeneratorError& e) {
        if (!cfg.generator.fallback_to_internal || !st.model) {
          throw StageError("babble", e.what());
        }
        out = babble(*st.model, req);
      }
    } else {
      if (!st.model) throw StageError("babble", "no generator available");
      out = babble(*st.model, req);
    }
    if (out.empty()) return SentenceString("");
    return out.front();
  };

  auto run_one = [&](std::size_t t) {
    TrialRecord rec;
    rec.trial = t;
    rec.prompt = cfg.prompts[t % cfg.prompts.size()];
    const std::uint64_t trial_seed = derive_seed(cfg.seed, t);
    for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      GenerationRequest req;
      req.prompt = SentenceString(rec.prompt);
      req.num_candidates = 1;
      req.max_tokens = cfg.generator.max_tokens;
      req.mode = cfg.generator.decode;
      req.top_k = cfg.generator.top_k;
      req.seed = attempt == 0 ? trial_seed : derive_seed(trial_seed, attempt);
      const SentenceString candidate = generate(req);
      rec.attempts = attempt + 1;
      rec.candidate = candidate.text();
      if (contains(st.evidence, candidate)) {
        rec.accepted = true;
        break;
      }
    }
    if (rec.accepted) {
      rec.output = rec.candidate;
      rec.matched = rec.candidate;
      rec.root = st.evidence.root_of(SentenceString(rec.candidate));
    } else {
      rec.output = cfg.rejection_output;
    }
    rec.v0 = st.truth_v0(rec.candidate);
    rec.v0hat = st.truth_v0hat(rec.candidate);
    return rec;
  };

  std::vector<TrialRecord> records(cfg.trials);
  const std::size_t jobs = external ? 1 : std::min(cfg.jobs, cfg.trials);
  if (jobs <= 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) records[t] = run_one(t);
    return records;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t t = w; t < cfg.trials; t += jobs) records[t] = run_one(t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : workers) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

inline std::vector<TrialRecord> run_text_to_text(const PipelineConfig& cfg) {
  validate(cfg);
  return run_trials(cfg, learn_text(cfg));
}

inline std::vector<TrialRecord> run_multimodal(const PipelineConfig& cfg) {
  validate(cfg);
  return run_trials(cfg, learn_multimodal(cfg));
}

inline std::vector<TrialRecord> run_pipeline(const PipelineConfig& cfg) {
  return cfg.mode == PipelineMode::kTextToText ? run_text_to_text(cfg) : run_multimodal(cfg);
}

}  // namespace lbp
