#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lbp/learners.hpp"
#include "lbp/orbit.hpp"

using namespace lbp;

namespace {

const std::map<std::string, std::string> kTemplates{{"*", "there is a {object} at cell {x} {y}"}};

}  // namespace

TEST(GridState, IdRoundTrip) {
  const GridFact f{2, 3, "key"};
  EXPECT_EQ(grid_state_id(f), "cell(2,3)-contains-key");
  EXPECT_EQ(parse_grid_state_id("cell(2,3)-contains-key"), f);
  EXPECT_THROW(parse_grid_state_id("cell(2)-contains-key"), DomainError);
  EXPECT_THROW(parse_grid_state_id("room(1,1)-contains-x"), DomainError);
}

TEST(GenerateWorld, DensityExtremesAndDeterminism) {
  const auto none = generate_world(3, 2, {"a", "b"}, 0.0, 5);
  const auto all = generate_world(3, 2, {"a", "b"}, 1.0, 5);
  EXPECT_EQ(none.state_count(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_FALSE(none.holds(i));
    EXPECT_TRUE(all.holds(i));
  }
  EXPECT_EQ(generate_world(4, 4, {"a"}, 0.5, 9), generate_world(4, 4, {"a"}, 0.5, 9));
  EXPECT_THROW(generate_world(0, 4, {"a"}, 0.5, 1), DomainError);
  EXPECT_THROW(generate_world(2, 2, {}, 0.5, 1), DomainError);
  EXPECT_THROW(generate_world(2, 2, {"a"}, 1.5, 1), DomainError);
}

TEST(GridWorld, StateOrderIsRowMajorThenObject) {
  const auto w = generate_world(2, 2, {"key", "box"}, 0.5, 1);
  EXPECT_EQ(w.state(0), "cell(0,0)-contains-key");
  EXPECT_EQ(w.state(1), "cell(0,0)-contains-box");
  EXPECT_EQ(w.state(2), "cell(1,0)-contains-key");
  EXPECT_EQ(w.state(4), "cell(0,1)-contains-key");
  EXPECT_EQ(w.index("cell(1,1)-contains-box"), 7u);
}

TEST(Perceive, OracleAndZeroNoiseMatchFacts) {
  const auto w = generate_world(5, 5, {"a", "b"}, 0.5, 2);
  const auto oracle = perceive(w, PerceptionMode::oracle(), 0);
  const auto zero = perceive(w, PerceptionMode::with_noise(0.0), 77);
  for (std::size_t i = 0; i < w.state_count(); ++i) {
    EXPECT_EQ(oracle[i].observed, w.holds(i));
    EXPECT_EQ(zero[i].observed, w.holds(i));
    EXPECT_EQ(oracle[i].state, w.state(i));
  }
  EXPECT_THROW(perceive(w, PerceptionMode::with_noise(1.0), 0), DomainError);
}

TEST(Perceive, FlipFractionWithinThreeSigma) {
  std::vector<std::string> vocab;
  for (int k = 0; k < 10; ++k) vocab.push_back("o" + std::to_string(k));
  const auto w = generate_world(10, 10, vocab, 0.5, 3);
  ASSERT_EQ(w.state_count(), 1000u);
  const auto r = perceive(w, PerceptionMode::with_noise(0.1), 42);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < 1000; ++i) flips += r[i].observed != w.holds(i);
  const double frac = static_cast<double>(flips) / 1000.0;
  const double sigma = std::sqrt(0.1 * 0.9 / 1000.0);
  EXPECT_NEAR(frac, 0.1, 3 * sigma);
}

TEST(Readings, SaveLoadRoundTrip) {
  const auto w = generate_world(2, 2, {"a"}, 0.5, 4);
  const auto r = perceive(w, PerceptionMode::with_noise(0.25), 1);
  std::stringstream ss;
  save_readings(r, ss);
  const auto back = load_readings(ss);
  ASSERT_EQ(back.size(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(back[i].state, r[i].state);
    EXPECT_EQ(back[i].observed, r[i].observed);
    EXPECT_TRUE(back[i].mode.noisy);
    EXPECT_DOUBLE_EQ(back[i].mode.epsilon, 0.25);
  }
}

TEST(RenderSource, TemplateApplication) {
  std::vector<std::uint8_t> facts(4 * 4, 0);
  GridWorld w(4, 4, {"key"}, facts);
  std::vector<std::uint8_t> one(16, 0);
  one[w.index("cell(2,3)-contains-key")] = 1;
  GridWorld w2(4, 4, {"key"}, one);
  const TemplateRenderer t(kTemplates);

  const auto none = render_source(perceive(w, PerceptionMode::oracle(), 0), t);
  EXPECT_TRUE(std::none_of(none.begin(), none.end(), [](auto& l) { return l.label; }));

  const auto src = render_source(perceive(w2, PerceptionMode::oracle(), 0), t);
  std::vector<std::string> positives;
  for (const auto& l : src) {
    if (l.label) positives.push_back(l.string.text());
  }
  EXPECT_EQ(positives, std::vector<std::string>{"there is a key at cell 2 3"});
}

TEST(RenderSource, MissingTemplateNamesState) {
  const auto w = generate_world(1, 1, {"key", "box"}, 1.0, 0);
  const TemplateRenderer t(std::map<std::string, std::string>{{"key", "a key at {x} {y}"}});
  try {
    render_source(perceive(w, PerceptionMode::oracle(), 0), t);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("cell(0,0)-contains-box"), std::string::npos);
  }
}

TEST(RenderSource, NonInjectiveTemplatesRejected) {
  const auto w = generate_world(2, 1, {"key"}, 1.0, 0);
  const TemplateRenderer t(std::map<std::string, std::string>{{"*", "there is a {object}"}});
  EXPECT_THROW(render_source(perceive(w, PerceptionMode::oracle(), 0), t), DomainError);
  EXPECT_THROW(canonical_language(w, t), DomainError);
}

TEST(OracleChain, DirectEvidenceIsActuallyTrue) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto w = generate_world(4, 3, {"key", "box"}, 0.4, seed);
    const TemplateRenderer t(kTemplates);
    const auto src = render_source(perceive(w, PerceptionMode::oracle(), seed), t);
    const auto lang = canonical_language(w, t);
    const auto e = build_evidence(src, orbits_from_rules(lang, {}, {}));
    for (const auto& d : e.direct_members()) {
      const auto pos = std::find(lang.begin(), lang.end(), d) - lang.begin();
      EXPECT_TRUE(w.holds(static_cast<std::size_t>(pos))) << d;
    }
  }
}
