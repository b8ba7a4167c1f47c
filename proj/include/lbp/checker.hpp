#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lbp/babbler.hpp"
#include "lbp/errors.hpp"
#include "lbp/evidence.hpp"
#include "lbp/orbit.hpp"
#include "lbp/random.hpp"
#include "lbp/semantics.hpp"

namespace lbp {

inline constexpr std::size_t kMaxCheckStates = 12;
inline constexpr std::size_t kMaxCheckStrings = 64;
inline constexpr double kMassTolerance = 1e-12;
inline constexpr double kIdentityTolerance = 1e-9;

/// Explicit finite distribution over strings.
struct DistributionTable {
  std::map<std::string, double> mass;  // normalized string -> probability

  static DistributionTable from(const std::vector<std::pair<std::string, double>>& entries) {
    DistributionTable t;
    for (const auto& [s, p] : entries) t.mass[normalize(s)] += p;
    t.validate();
    return t;
  }

  void validate() const {
    double total = 0.0;
    for (const auto& [s, p] : mass) {
      if (!(p >= 0.0)) throw DomainError("negative mass for '" + s + "'");
      total += p;
    }
    if (std::abs(total - 1.0) > kMassTolerance) {
      throw DomainError("distribution masses sum to " + std::to_string(total) + ", not 1");
    }
  }

  double at(const std::string& s) const {
    auto it = mass.find(s);
    return it == mass.end() ? 0.0 : it->second;
  }

  /// Highest-mass string; ties go to the lexicographically smallest.
  std::string argmax() const {
    std::string best;
    double best_p = -1.0;
    for (const auto& [s, p] : mass) {
      if (p > best_p) {
        best = s;
        best_p = p;
      }
    }
    return best;
  }
};

using Generator = std::variant<NgramModel, DistributionTable>;

/// A finite instance small enough for exhaustive enumeration.
struct CheckInstance {
  WorldModel world;
  std::vector<SentenceString> corpus;
  SentenceString prompt;
  Generator generator;

  void validate() const {
    if (world.states().size() > kMaxCheckStates) {
      throw CapacityError("check instance has " + std::to_string(world.states().size()) +
                          " states (limit " + std::to_string(kMaxCheckStates) + ")");
    }
    if (world.language().size() > kMaxCheckStrings) {
      throw CapacityError("check instance has " + std::to_string(world.language().size()) +
                          " strings (limit " + std::to_string(kMaxCheckStrings) + ")");
    }
  }
};

/// argmax_x f̂(x | C, P). The generator never sees a valuation, so the same
/// call serves for every structure.
inline std::string generator_argmax(const Generator& g, const SentenceString& prompt) {
  if (const auto* table = std::get_if<DistributionTable>(&g)) return table->argmax();
  GenerationRequest req;
  req.prompt = prompt;
  req.mode = DecodeMode::kArgmax;
  return babble(std::get<NgramModel>(g), req).front().text();
}

/// A pair of structures (s, s') from the full valuation family that disagree
/// on the referent of `yhat`: V_s[R(yhat)] = 1 and V_s'[R(yhat)] = 0.
struct Witness {
  bool found = false;
  std::string yhat;
  Structure s;
  Structure s_prime;
  bool s_prime_is_designated = false;
  bool validated = false;
  std::vector<std::string> trace;
  std::string reason;  ///< why no witness exists, when !found
};

namespace detail {

/// s0's valuation with one state forced to `value`, named as in the full
/// enumeration.
inline Structure flip_of_designated(const WorldModel& w, std::size_t state, bool value) {
  Structure s;
  s.valuation = w.designated().valuation;
  s.valuation[state] = value ? 1 : 0;
  s.name = "v";
  for (auto b : s.valuation) s.name.push_back(b ? '1' : '0');
  if (s.valuation == w.designated().valuation) s.name = w.designated().name;
  return s;
}

inline bool in_full_family(const WorldModel& w, const Structure& s) {
  if (s.valuation.size() != w.states().size()) return false;
  return std::all_of(s.valuation.begin(), s.valuation.end(),
                     [](std::uint8_t b) { return b <= 1; });
}

inline std::string describe(const WorldModel& w, const Structure& s) {
  std::string out = s.name + " {";
  for (std::size_t i = 0; i < s.valuation.size(); ++i) {
    if (i) out += ", ";
    out += w.states()[i] + "=" + (s.valuation[i] ? "1" : "0");
  }
  return out + "}";
}

}  // namespace detail

/// Re-checks a non-factuality witness against its instance.
inline bool validate_nonfactuality(const CheckInstance& inst, const Witness& w) {
  if (!w.found) return false;
  const SentenceString y(w.yhat);
  if (!inst.world.contains(y)) return false;
  const std::size_t r = inst.world.referent(y);
  if (!detail::in_full_family(inst.world, w.s) || !detail::in_full_family(inst.world, w.s_prime)) {
    return false;
  }
  if (!w.s.obtains(r) || w.s_prime.obtains(r)) return false;
  // The generator is valuation-free: its argmax is the same under s and s'.
  return generator_argmax(inst.generator, inst.prompt) == w.yhat;
}

/// Argmax output that is true under one structure and false under another,
/// with the false one taken to be the actual world.
inline Witness check_nonfactuality(const CheckInstance& inst) {
  inst.validate();
  Witness wit;
  wit.yhat = generator_argmax(inst.generator, inst.prompt);
  const SentenceString y(wit.yhat);
  if (!inst.world.contains(y)) {
    throw DomainError("generator argmax '" + wit.yhat + "' is outside the language");
  }
  const std::size_t r = inst.world.referent(y);
  wit.s = detail::flip_of_designated(inst.world, r, true);
  wit.s_prime = detail::flip_of_designated(inst.world, r, false);
  wit.s_prime_is_designated = !inst.world.designated().obtains(r);
  wit.found = true;
  wit.trace = {
      "argmax of the generator: '" + wit.yhat + "'",
      "referent: " + inst.world.states()[r],
      "s  = " + detail::describe(inst.world, wit.s) + " makes it true",
      "s' = " + detail::describe(inst.world, wit.s_prime) + " makes it false",
      "the generator takes no valuation, so the argmax is identical under s and s'",
      std::string("taking V0 = V_s' the output is false") +
          (wit.s_prime_is_designated ? " (s' is the designated s0)" : "")};
  wit.validated = validate_nonfactuality(inst, wit);
  return wit;
}

/// Re-checks a verified-corpus witness against its instance.
inline bool validate_verified_corpus(const CheckInstance& inst, const Witness& w) {
  if (!w.found) return false;
  const SentenceString y(w.yhat);
  if (!inst.world.contains(y)) return false;
  const std::size_t r = inst.world.referent(y);
  if (!detail::in_full_family(inst.world, w.s) || !detail::in_full_family(inst.world, w.s_prime)) {
    return false;
  }
  for (const auto& c : inst.corpus) {
    if (c == y) return false;
    const std::size_t rc = inst.world.referent(c);
    if (rc == r) return false;
    if (!w.s.obtains(rc) || !w.s_prime.obtains(rc)) return false;
    if (!inst.world.designated().obtains(rc)) return false;
  }
  return w.s.obtains(r) && !w.s_prime.obtains(r);
}

/// Output outside the referents of a verified corpus, with structures that
/// agree (true) on every corpus referent but disagree on the output.
inline Witness check_verified_corpus_insufficient(const CheckInstance& inst,
                                                  std::size_t babble_trials = 1000) {
  inst.validate();
  std::set<std::size_t> corpus_referents;
  std::set<std::string> corpus_strings;
  for (const auto& c : inst.corpus) {
    if (!inst.world.contains(c)) {
      throw DomainError("corpus string '" + c.text() + "' is outside the language");
    }
    if (!actually_true(inst.world, c)) {
      throw DomainError("corpus is not verified: '" + c.text() + "' is false under s0");
    }
    corpus_referents.insert(inst.world.referent(c));
    corpus_strings.insert(c.text());
  }
  auto novel = [&](const std::string& s) {
    SentenceString l(s);
    return inst.world.contains(l) && !corpus_strings.count(l.text()) &&
           !corpus_referents.count(inst.world.referent(l));
  };

  Witness wit;
  std::string how;
  const std::string argmax = generator_argmax(inst.generator, inst.prompt);
  if (novel(argmax)) {
    wit.yhat = argmax;
    how = "argmax of the generator";
  } else if (const auto* model = std::get_if<NgramModel>(&inst.generator)) {
    // Look for a novel emission among sampled candidates; prefer a false one.
    std::optional<std::pair<std::string, std::size_t>> first_novel;
    for (std::size_t t = 0; t < babble_trials; ++t) {
      GenerationRequest req;
      req.prompt = inst.prompt;
      req.mode = DecodeMode::kSample;
      req.seed = t;
      const auto cand = babble(*model, req).front().text();
      if (!novel(cand)) continue;
      if (!actually_true(inst.world, SentenceString(cand))) {
        first_novel.emplace(cand, t);
        break;
      }
      if (!first_novel) first_novel.emplace(cand, t);
    }
    if (first_novel) {
      wit.yhat = first_novel->first;
      how = "sampled from the generator with seed " + std::to_string(first_novel->second);
    }
  } else {
    const auto& table = std::get<DistributionTable>(inst.generator);
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [s, p] : table.mass) {
      if (p > 0 && novel(s)) ranked.emplace_back(-p, s);
    }
    std::sort(ranked.begin(), ranked.end());
    if (!ranked.empty()) {
      wit.yhat = ranked.front().second;
      how = "highest-mass novel string in the generator's support";
    }
  }
  if (wit.yhat.empty()) {
    for (const auto& s : inst.world.language()) {
      if (novel(s)) {
        wit.yhat = s;
        how = "string of the language outside the corpus referents";
        break;
      }
    }
  }
  if (wit.yhat.empty()) {
    wit.reason = "no witness: every string of the language shares a referent with the corpus";
    return wit;
  }

  const std::size_t r = inst.world.referent(SentenceString(wit.yhat));
  wit.s = detail::flip_of_designated(inst.world, r, true);
  wit.s_prime = detail::flip_of_designated(inst.world, r, false);
  wit.s_prime_is_designated = !inst.world.designated().obtains(r);
  wit.found = true;
  wit.trace = {
      "corpus of " + std::to_string(inst.corpus.size()) + " verified strings covering " +
          std::to_string(corpus_referents.size()) + " states",
      "output '" + wit.yhat + "' (" + how + ") refers to " + inst.world.states()[r] +
          ", outside the corpus referents",
      "s  = " + detail::describe(inst.world, wit.s),
      "s' = " + detail::describe(inst.world, wit.s_prime),
      "s and s' make every corpus string true and disagree on the output",
      std::string("taking V0 = V_s' the output is false") +
          (wit.s_prime_is_designated ? " (s' is the designated s0)" : "")};
  wit.validated = validate_verified_corpus(inst, wit);
  return wit;
}

/// Exhaustive pair scan: equal referents and a true first string imply a
/// true second string under s0.
struct PropertyReport {
  std::string name;
  bool passed = true;
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::string witness;
};

inline PropertyReport check_closure_synonymy(const WorldModel& w) {
  PropertyReport rep;
  rep.name = "closure_synonymy";
  const auto& lang = w.language();
  const auto& s0 = w.designated();
  for (const auto& a : lang) {
    for (const auto& b : lang) {
      ++rep.checked;
      const SentenceString la(a), lb(b);
      if (w.referent(la) == w.referent(lb) && evaluate_truth(w, s0, la) &&
          !evaluate_truth(w, s0, lb)) {
        ++rep.violations;
        if (rep.passed) rep.witness = "'" + a + "' true but synonym '" + b + "' false";
        rep.passed = false;
      }
    }
  }
  return rep;
}

/// Factor tables for the evidence-grounded decompositions over one finite
/// instance. Orbits are indexed 0..|orbits|-1.
struct DecompositionInstance {
  std::vector<std::string> language;       ///< L, normalized
  std::vector<StateId> states;             ///< Ω
  std::vector<std::size_t> referent;       ///< R, indexed like language
  std::vector<std::uint8_t> actual;        ///< V0, indexed like states
  std::vector<std::string> source;         ///< L+ ⊆ L
  DistributionTable llm;                   ///< f(ℓ | C, P)
  std::vector<std::vector<std::size_t>> orbits;     ///< partition of L (language indices)
  std::vector<std::vector<double>> intensional;     ///< f(ℓ | I)   [orbit][string]
  std::vector<std::vector<double>> extensional;     ///< f(I | ω)   [orbit][state]
  std::vector<double> perceptual;                   ///< f(ω)       [state]
  std::vector<double> orbit_evidence;               ///< f(V0[I]=1) [orbit]

  /// Orbits containing at least one source string (the set 𝓘+).
  std::vector<std::size_t> source_orbits() const {
    std::set<std::string> src(source.begin(), source.end());
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o < orbits.size(); ++o) {
      for (std::size_t i : orbits[o]) {
        if (src.count(language[i])) {
          out.push_back(o);
          break;
        }
      }
    }
    return out;
  }
};

/// Builds consistent learners for a world: orbits from reference,
/// f(ℓ|I) = 𝕀{ℓ ∈ I}, f(I|ω) = 𝕀{R[I] = ω}, f(ω) = V0(ω).
inline DecompositionInstance make_decomposition_instance(const WorldModel& w,
                                                         const DistributionTable& llm,
                                                         const std::vector<std::string>& source) {
  DecompositionInstance d;
  d.language = w.language();
  d.states = w.states();
  for (const auto& l : d.language) d.referent.push_back(w.reference().at(l));
  d.actual = w.designated().valuation;
  for (const auto& s : source) d.source.push_back(normalize(s));
  d.llm = llm;
  const auto p = orbits_from_reference(w);
  std::map<std::string, std::size_t> lang_index;
  for (std::size_t i = 0; i < d.language.size(); ++i) lang_index[d.language[i]] = i;
  for (std::size_t b = 0; b < p.block_count(); ++b) {
    std::vector<std::size_t> members;
    for (const auto& s : p.block(b)) members.push_back(lang_index.at(s));
    d.orbits.push_back(std::move(members));
  }
  const std::size_t no = d.orbits.size();
  d.intensional.assign(no, std::vector<double>(d.language.size(), 0.0));
  d.extensional.assign(no, std::vector<double>(d.states.size(), 0.0));
  for (std::size_t o = 0; o < no; ++o) {
    for (std::size_t i : d.orbits[o]) d.intensional[o][i] = 1.0;
    d.extensional[o][d.referent[d.orbits[o].front()]] = 1.0;
  }
  d.perceptual.assign(d.actual.begin(), d.actual.end());
  d.orbit_evidence.resize(no);
  for (std::size_t o = 0; o < no; ++o) {
    d.orbit_evidence[o] = d.actual[d.referent[d.orbits[o].front()]] ? 1.0 : 0.0;
  }
  return d;
}

struct IdentityCheck {
  std::string name;
  bool passed = true;
  bool degenerate = false;
  double max_deviation = 0.0;
  std::string offending;
};

struct IdentityReport {
  std::vector<IdentityCheck> checks;
  double unnormalized_orbit_mass = 0.0;  ///< Σ_ℓ of the orbit-sum product form
  double unnormalized_state_mass = 0.0;  ///< Σ_ℓ of the state-sum product form
  double constraint_mass = 0.0;          ///< f(Ê | C, P)
  /// Normalized distributions indexed like the instance's language:
  /// "filtered", "conditional", "orbit_sum", "state_sum".
  std::map<std::string, std::vector<double>> distributions;

  bool degenerate() const {
    return std::any_of(checks.begin(), checks.end(),
                       [](const IdentityCheck& c) { return c.degenerate; });
  }
  bool passed() const {
    return !degenerate() && std::all_of(checks.begin(), checks.end(),
                                        [](const IdentityCheck& c) { return c.passed; });
  }
  std::string status() const { return degenerate() ? "degenerate" : passed() ? "pass" : "fail"; }
};

namespace detail {

inline IdentityCheck compare(const std::string& name, const std::vector<std::string>& language,
                             const std::vector<double>& a, const std::vector<double>& b,
                             double tol) {
  IdentityCheck c;
  c.name = name;
  for (std::size_t i = 0; i < language.size(); ++i) {
    const double dev = std::abs(a[i] - b[i]);
    if (dev > c.max_deviation) {
      c.max_deviation = dev;
      c.offending = language[i];
    }
  }
  c.passed = c.max_deviation <= tol;
  return c;
}

/// Normalizes in place; returns the pre-normalization total.
inline double normalize_mass(std::vector<double>& v) {
  double z = 0.0;
  for (double x : v) z += x;
  if (z > 0) {
    for (double& x : v) x /= z;
  }
  return z;
}

}  // namespace detail

/// Verifies, within `tol`:
///  - model2_filter: f(ℓ|C,P)·𝕀{ℓ ∈ Ê}, renormalized, equals f conditioned on
///    the constraint event {ℓ ∈ Ê};
///  - orbit_sum: the normalized orbit-sum product over 𝓘+ equals it;
///  - state_sum: the normalized state-sum product over 𝓘+ and Ω equals it;
///  - sensor_evidence: f(V0[I]=1) = Σ_ω f(I|ω) f(ω) for every source orbit;
///  - evidence_set: Ê built by closure equals the strings whose source
///    orbit is valued true.
/// An empty constraint set is flagged degenerate rather than passed.
inline IdentityReport check_decompositions(const DecompositionInstance& d,
                                           double tol = kIdentityTolerance) {
  d.llm.validate();
  const std::size_t n = d.language.size();
  if (n > kMaxCheckStrings || d.states.size() > kMaxCheckStates) {
    throw CapacityError("decomposition instance exceeds the checker bounds");
  }
  IdentityReport rep;
  const auto src_orbits = d.source_orbits();

  // Ê through the evidence-store path: label source strings with their
  // orbit's evidence and close under the orbit partition.
  DisjointSetForest forest(n);
  for (const auto& o : d.orbits) {
    for (std::size_t k = 1; k < o.size(); ++k) forest.unite(o[0], o[k]);
  }
  const OrbitPartition partition(d.language, forest);
  std::vector<std::size_t> orbit_of_string(n);
  for (std::size_t o = 0; o < d.orbits.size(); ++o) {
    for (std::size_t i : d.orbits[o]) orbit_of_string[i] = o;
  }
  std::map<std::string, std::size_t> lang_index;
  for (std::size_t i = 0; i < n; ++i) lang_index[d.language[i]] = i;
  std::vector<LabeledString> labeled;
  for (const auto& s : d.source) {
    const std::size_t o = orbit_of_string[lang_index.at(s)];
    labeled.push_back({SentenceString(s), d.orbit_evidence[o] >= 1.0});
  }
  const EvidenceSet evidence = build_evidence(labeled, partition);

  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = d.llm.at(d.language[i]);

  // Model 2 product form.
  std::vector<double> filtered(n);
  for (std::size_t i = 0; i < n; ++i) {
    filtered[i] = f[i] * (contains(evidence, SentenceString(d.language[i])) ? 1.0 : 0.0);
  }
  const double z_filtered = detail::normalize_mass(filtered);

  // Conditional of f on the event {ℓ ∈ Ê}: joint over (ℓ, z), then Bayes.
  std::vector<double> joint_in(n, 0.0);
  double event_mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool z = evidence.members().count(d.language[i]) != 0;
    if (z) {
      joint_in[i] = f[i];
      event_mass += f[i];
    }
  }
  std::vector<double> conditional(n, 0.0);
  if (event_mass > 0) {
    for (std::size_t i = 0; i < n; ++i) conditional[i] = joint_in[i] / event_mass;
  }
  rep.constraint_mass = event_mass;

  // Orbit-sum product form.
  std::vector<double> orbit_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o : src_orbits) {
      orbit_sum[i] += f[i] * d.intensional[o][i] * d.orbit_evidence[o];
    }
  }
  rep.unnormalized_orbit_mass = detail::normalize_mass(orbit_sum);

  // State-sum product form.
  std::vector<double> state_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o : src_orbits) {
      for (std::size_t w = 0; w < d.states.size(); ++w) {
        state_sum[i] += f[i] * d.intensional[o][i] * d.extensional[o][w] * d.perceptual[w];
      }
    }
  }
  rep.unnormalized_state_mass = detail::normalize_mass(state_sum);

  const bool degenerate = z_filtered <= 0.0 || event_mass <= 0.0;
  auto push = [&](IdentityCheck c) {
    if (degenerate) {
      c.degenerate = true;
      c.passed = false;
    }
    rep.checks.push_back(std::move(c));
  };
  rep.distributions = {{"filtered", filtered},
                       {"conditional", conditional},
                       {"orbit_sum", orbit_sum},
                       {"state_sum", state_sum}};
  push(detail::compare("model2_filter", d.language, filtered, conditional, tol));
  push(detail::compare("orbit_sum", d.language, orbit_sum, conditional, tol));
  push(detail::compare("state_sum", d.language, state_sum, conditional, tol));

  IdentityCheck sensor;
  sensor.name = "sensor_evidence";
  for (std::size_t o : src_orbits) {
    double via_states = 0.0;
    for (std::size_t w = 0; w < d.states.size(); ++w) {
      via_states += d.extensional[o][w] * d.perceptual[w];
    }
    const double dev = std::abs(via_states - d.orbit_evidence[o]);
    if (dev > sensor.max_deviation) {
      sensor.max_deviation = dev;
      sensor.offending = d.language[d.orbits[o].front()];
    }
  }
  sensor.passed = sensor.max_deviation <= tol;
  rep.checks.push_back(sensor);

  IdentityCheck eset;
  eset.name = "evidence_set";
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t o = orbit_of_string[i];
    const bool expected = std::find(src_orbits.begin(), src_orbits.end(), o) != src_orbits.end() &&
                          d.orbit_evidence[o] >= 1.0;
    if (expected != contains(evidence, SentenceString(d.language[i]))) {
      eset.passed = false;
      eset.max_deviation = 1.0;
      eset.offending = d.language[i];
      break;
    }
  }
  rep.checks.push_back(eset);
  return rep;
}

/// Two model pairs whose unconditioned divergence is below epsilon while the
/// divergence after conditioning on truth under V0 is not.
struct KlDemonstration {
  double epsilon = 0.01;
  double kl_unconditioned = 0.0;
  double kl_conditioned = 0.0;
  bool demonstrated = false;
};

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) return INFINITY;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

inline KlDemonstration demonstrate_kl_nonimplication(double epsilon = 0.01) {
  // Strings: two true, one false. The learned model differs from the target
  // only inside the low-mass true region.
  const std::vector<double> target{0.001, 0.001, 0.998};
  const std::vector<double> learned{0.00199, 0.00001, 0.998};
  const std::vector<std::uint8_t> truth{1, 1, 0};
  auto condition = [&](const std::vector<double>& p) {
    std::vector<double> out(p.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (truth[i]) z += p[i];
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (truth[i]) out[i] = p[i] / z;
    }
    return out;
  };
  KlDemonstration d;
  d.epsilon = epsilon;
  d.kl_unconditioned = kl_divergence(learned, target);
  d.kl_conditioned = kl_divergence(condition(learned), condition(target));
  d.demonstrated = d.kl_unconditioned < epsilon && !(d.kl_conditioned < epsilon);
  return d;
}

// Random instances.

/// World with a full structure family over 1..max_states states and
/// 1..max_strings strings, every state referenced by at least one string
/// when the string count allows.
inline WorldModel random_world(Rng& rng, std::size_t max_states = kMaxCheckStates,
                               std::size_t max_strings = kMaxCheckStrings,
                               std::size_t min_states = 1) {
  const std::size_t n_states = min_states + rng.below(max_states - min_states + 1);
  const std::size_t min_strings = std::min(n_states, max_strings);
  const std::size_t n_strings = min_strings + rng.below(max_strings - min_strings + 1);
  std::vector<StateId> states;
  for (std::size_t i = 0; i < n_states; ++i) states.push_back("w" + std::to_string(i));
  std::map<std::string, StateId> reference;
  std::vector<std::string> language;
  for (std::size_t i = 0; i < n_strings; ++i) {
    const std::size_t r = i < n_states ? i : rng.below(n_states);
    std::string s = "sentence " + std::to_string(i) + " about " + states[r];
    language.push_back(s);
    reference[s] = states[r];
  }
  std::vector<std::uint8_t> actual(n_states);
  for (auto& b : actual) b = rng.bernoulli(0.5) ? 1 : 0;
  return WorldModel::with_full_structures(states, reference, language, actual, kMaxCheckStates);
}

inline DistributionTable random_table(Rng& rng, const std::vector<std::string>& support) {
  std::vector<double> w(support.size());
  double z = 0.0;
  for (auto& x : w) {
    x = 0.05 + rng.uniform();
    z += x;
  }
  DistributionTable t;
  for (std::size_t i = 0; i < support.size(); ++i) t.mass[support[i]] = w[i] / z;
  // Absorb rounding so the masses sum to 1 within tolerance.
  double total = 0.0;
  for (const auto& [s, p] : t.mass) total += p;
  t.mass.begin()->second += 1.0 - total;
  return t;
}

inline CheckInstance random_check_instance(std::uint64_t seed,
                                           std::size_t max_states = kMaxCheckStates,
                                           std::size_t max_strings = kMaxCheckStrings) {
  Rng rng(seed);
  WorldModel w = random_world(rng, max_states, max_strings, std::min<std::size_t>(2, max_states));
  // Verified corpus: true strings over a strict subset of the true states.
  std::vector<SentenceString> corpus;
  std::set<std::size_t> true_states;
  for (std::size_t i = 0; i < w.states().size(); ++i) {
    if (w.designated().obtains(i)) true_states.insert(i);
  }
  std::set<std::size_t> covered;
  for (std::size_t st : true_states) {
    if (covered.size() + 1 < w.states().size() && rng.bernoulli(0.6)) covered.insert(st);
  }
  for (const auto& l : w.language()) {
    if (covered.count(w.reference().at(l))) corpus.emplace_back(l);
  }
  auto table = random_table(rng, w.language());
  return CheckInstance{std::move(w), std::move(corpus), SentenceString(""), std::move(table)};
}

inline DecompositionInstance random_decomposition_instance(std::uint64_t seed,
                                                           std::size_t n_strings = 8) {
  Rng rng(seed);
  const std::size_t n_states = 2 + rng.below(4);
  std::vector<StateId> states;
  for (std::size_t i = 0; i < n_states; ++i) states.push_back("w" + std::to_string(i));
  std::map<std::string, StateId> reference;
  std::vector<std::string> language;
  for (std::size_t i = 0; i < n_strings; ++i) {
    std::string s = "string " + std::to_string(i);
    language.push_back(s);
    reference[s] = states[rng.below(n_states)];
  }
  std::vector<std::uint8_t> actual(n_states);
  for (auto& b : actual) b = rng.bernoulli(0.6) ? 1 : 0;
  WorldModel w = WorldModel::with_full_structures(states, reference, language, actual);
  std::vector<std::string> source;
  for (const auto& l : w.language()) {
    if (rng.bernoulli(0.5)) source.push_back(l);
  }
  return make_decomposition_instance(w, random_table(rng, w.language()), source);
}

// Check suite.

struct SuiteOptions {
  std::vector<std::string> only;  ///< empty runs every check
  std::size_t seeds = 100;
  std::size_t world_seeds = 1000;
  std::size_t max_states = kMaxCheckStates;
  std::size_t max_strings = kMaxCheckStrings;
  std::uint64_t base_seed = 0;
};

struct CheckOutcome {
  std::string name;
  std::string status;  ///< pass | fail | degenerate
  std::size_t instances = 0;
  std::size_t failures = 0;
  std::size_t degenerate = 0;
  double max_deviation = 0.0;
  std::string detail;
  double seconds = 0.0;
};

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{
      "closure_synonymy", "nonfactuality",  "verified_corpus",
      "decompositions",   "group_axioms",   "kl_nonimplication"};
  return names;
}

inline void validate(const SuiteOptions& o) {
  if (o.max_states == 0 || o.max_states > kMaxCheckStates) {
    throw ConfigError("max states must lie in [1, " + std::to_string(kMaxCheckStates) + "]");
  }
  if (o.max_strings == 0 || o.max_strings > kMaxCheckStrings) {
    throw ConfigError("max strings must lie in [1, " + std::to_string(kMaxCheckStrings) + "]");
  }
  for (const auto& n : o.only) {
    if (std::find(check_names().begin(), check_names().end(), n) == check_names().end()) {
      throw ConfigError("unknown check '" + n + "'");
    }
  }
}

inline CheckOutcome run_check(const std::string& name, const SuiteOptions& o) {
  CheckOutcome out;
  out.name = name;
  out.status = "pass";
  const auto start = std::chrono::steady_clock::now();
  auto fail = [&](std::string why) {
    ++out.failures;
    if (out.detail.empty()) out.detail = std::move(why);
  };

  if (name == "closure_synonymy") {
    for (std::size_t k = 0; k < o.world_seeds; ++k) {
      Rng rng(derive_seed(o.base_seed, k));
      const auto w = random_world(rng, o.max_states, o.max_strings);
      const auto rep = check_closure_synonymy(w);
      ++out.instances;
      if (!rep.passed) fail("seed " + std::to_string(k) + ": " + rep.witness);
    }
  } else if (name == "nonfactuality" || name == "verified_corpus") {
    for (std::size_t k = 0; k < o.seeds; ++k) {
      const auto inst = random_check_instance(derive_seed(o.base_seed, k), o.max_states,
                                              o.max_strings);
      const auto wit = name == "nonfactuality" ? check_nonfactuality(inst)
                                               : check_verified_corpus_insufficient(inst);
      ++out.instances;
      if (!wit.found || !wit.validated) {
        fail("seed " + std::to_string(k) + ": " +
             (wit.found ? "witness failed self-validation" : wit.reason));
      }
    }
  } else if (name == "decompositions") {
    for (std::size_t k = 0; k < o.seeds; ++k) {
      const auto d = random_decomposition_instance(derive_seed(o.base_seed, k));
      const auto rep = check_decompositions(d);
      ++out.instances;
      if (rep.degenerate()) {
        ++out.degenerate;
        continue;
      }
      for (const auto& c : rep.checks) out.max_deviation = std::max(out.max_deviation, c.max_deviation);
      if (!rep.passed()) {
        for (const auto& c : rep.checks) {
          if (!c.passed) {
            fail("seed " + std::to_string(k) + ": " + c.name + " deviates by " +
                 std::to_string(c.max_deviation) + " at '" + c.offending + "'");
          }
        }
      }
    }
  } else if (name == "group_axioms") {
    // Fully enumerated paraphrase group of a 4-string, 2-referent language,
    // then the same set with a referent-crossing transposition added.
    const auto w = WorldModel::with_full_structures(
        {"a", "b"}, {{"a one", "a"}, {"a two", "a"}, {"b one", "b"}, {"b two", "b"}},
        {"a one", "a two", "b one", "b two"}, {1, 0});
    auto maps = enumerate_paraphrase_maps(w);
    ++out.instances;
    if (maps.size() != 4 || !verify_group_axioms(w, maps).all_passed()) {
      fail("enumerated paraphrase group does not satisfy the axioms");
    }
    ParaphraseMap bad = ParaphraseMap::identity(4);
    std::swap(bad.image[0], bad.image[2]);
    maps.push_back(bad);
    const auto rep = verify_group_axioms(w, maps);
    ++out.instances;
    if (!rep.get("symmetry").passed || rep.get("paraphrase").passed) {
      fail("injected referent-crossing map was not detected");
    }
  } else if (name == "kl_nonimplication") {
    const auto d = demonstrate_kl_nonimplication();
    ++out.instances;
    out.detail = "KL unconditioned " + std::to_string(d.kl_unconditioned) + ", conditioned " +
                 std::to_string(d.kl_conditioned);
    if (!d.demonstrated) fail("construction did not separate the divergences");
  } else {
    throw ConfigError("unknown check '" + name + "'");
  }

  if (out.failures > 0) {
    out.status = "fail";
  } else if (out.degenerate > 0 && out.degenerate == out.instances) {
    out.status = "degenerate";
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline std::vector<CheckOutcome> run_check_suite(const SuiteOptions& o) {
  validate(o);
  std::vector<CheckOutcome> out;
  for (const auto& name : check_names()) {
    if (!o.only.empty() && std::find(o.only.begin(), o.only.end(), name) == o.only.end()) {
      continue;
    }
    out.push_back(run_check(name, o));
  }
  return out;
}

inline nlohmann::json to_json(const CheckOutcome& c) {
  return {{"name", c.name},
          {"status", c.status},
          {"instances", c.instances},
          {"failures", c.failures},
          {"degenerate", c.degenerate},
          {"max_deviation", c.max_deviation},
          {"detail", c.detail}};
}

}  // namespace lbp
