#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "lbp/babbler.hpp"
#include "lbp/evidence.hpp"
#include "support.hpp"

using namespace lbp;

namespace {

std::vector<SentenceString> election_corpus() {
  std::vector<SentenceString> out;
  for (auto& ls : ingest_corpus(test::data("election_corpus.jsonl"), true)) {
    out.push_back(ls.string);
  }
  return out;
}

}  // namespace

TEST(Train, DirectCountFormula) {
  const double a = 0.1;
  const auto m = train({"a b"}, 2, a);
  EXPECT_EQ(m.vocabulary(), (std::vector<std::string>{"</s>", "a", "b"}));
  EXPECT_DOUBLE_EQ(m.probability({"a"}, "b"), (1 + a) / (1 + a * 3));
  EXPECT_DOUBLE_EQ(m.probability({"a"}, "a"), a / (1 + a * 3));
  EXPECT_DOUBLE_EQ(m.probability({"<s>"}, "a"), (1 + a) / (1 + a * 3));
  EXPECT_DOUBLE_EQ(m.probability({"zzz"}, "a"), 1.0 / 3);
  EXPECT_EQ(m.probability({"a"}, "<s>"), 0.0);
}

TEST(Train, DuplicateSentenceDoublesCounts) {
  const auto once = train({"a b", "c"}, 2);
  const auto twice = train({"a b", "a b", "c"}, 2);
  EXPECT_EQ(once.count({"a"}, "b"), 1u);
  EXPECT_EQ(twice.count({"a"}, "b"), 2u);
  EXPECT_EQ(twice.count({"<s>"}, "a"), 2u);
  EXPECT_EQ(twice.count({"<s>"}, "c"), 1u);
}

TEST(Train, Errors) {
  EXPECT_THROW(train({}, 2), Error);
  EXPECT_THROW(train({"a"}, 0), Error);
  EXPECT_THROW(train({"a"}, 2, 0.0), Error);
}

TEST(Train, DistributionsSumToOne) {
  const auto m = train(election_corpus(), 3);
  for (const std::vector<std::string>& ctx :
       {std::vector<std::string>{"<s>", "<s>"}, {"won", "the"}, {"x", "y"}}) {
    const auto p = m.distribution(ctx);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Perplexity, TrainingBeatsUniform) {
  const auto corpus = election_corpus();
  for (std::size_t order : {1u, 2u, 3u}) {
    const auto m = train(corpus, order);
    EXPECT_LE(m.perplexity(corpus), static_cast<double>(m.vocabulary_size())) << order;
  }
  EXPECT_THROW(train(corpus, 2).perplexity({"unseen words"}), DomainError);
}

TEST(Babble, ArgmaxOnOneSentenceReproducesIt) {
  const auto m = train({"a key is in the box"}, 2);
  GenerationRequest req;
  req.mode = DecodeMode::kArgmax;
  req.num_candidates = 5;
  const auto out = babble(m, req);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text(), "a key is in the box");
}

TEST(Babble, ArgmaxTiesBreakLexicographically) {
  const auto m = train({"b", "a"}, 2);
  GenerationRequest req;
  req.mode = DecodeMode::kArgmax;
  EXPECT_EQ(babble(m, req)[0].text(), "a");
}

TEST(Babble, AdversarialCorpusEmitsFalseSentence) {
  const auto m = train(election_corpus(), 2);
  GenerationRequest req;
  req.num_candidates = 500;
  req.seed = 1;
  bool found = false;
  for (const auto& c : babble(m, req)) {
    found = found || c.text() == "donald trump won the 2020 presidential election";
  }
  EXPECT_TRUE(found);
}

TEST(Babble, DeterministicForSeed) {
  const auto m = train(election_corpus(), 2);
  GenerationRequest req;
  req.num_candidates = 20;
  req.seed = 99;
  EXPECT_EQ(babble(m, req), babble(m, req));
  req.seed = 100;
  const auto other = babble(m, req);
  req.seed = 99;
  EXPECT_NE(babble(m, req), other);
}

TEST(Babble, PromptIsForcedPrefixAndMayBeOutOfVocabulary) {
  const auto m = train(election_corpus(), 2);
  GenerationRequest req;
  req.prompt = "Zorblax says";
  req.num_candidates = 10;
  req.max_tokens = 4;
  for (const auto& c : babble(m, req)) {
    EXPECT_EQ(c.text().rfind("zorblax says", 0), 0u);
    EXPECT_LE(c.tokens().size(), 6u);
  }
  req.prompt = "joe biden won the";
  req.mode = DecodeMode::kArgmax;
  req.max_tokens = 32;
  const auto out = babble(m, req)[0].text();
  EXPECT_EQ(out.rfind("joe biden won the ", 0), 0u);
}

TEST(Babble, TopOneEqualsArgmax) {
  const auto m = train(election_corpus(), 3);
  GenerationRequest req;
  req.mode = DecodeMode::kArgmax;
  const auto greedy = babble(m, req)[0];
  req.mode = DecodeMode::kSample;
  req.top_k = 1;
  req.num_candidates = 5;
  for (const auto& c : babble(m, req)) EXPECT_EQ(c, greedy);
}

TEST(Babble, SampledFirstTokenFrequenciesMatchModel) {
  const auto m = train({"a", "a", "a", "b"}, 1, 0.5);
  GenerationRequest req;
  req.num_candidates = 20000;
  req.max_tokens = 1;
  req.seed = 5;
  std::map<std::string, int> counts;
  for (const auto& c : babble(m, req)) ++counts[c.text()];
  const auto p = m.distribution({});
  const double n = 20000;
  for (std::size_t id = 0; id < m.vocabulary_size(); ++id) {
    const std::string tok = m.vocabulary()[id] == kEndMarker ? "" : m.vocabulary()[id];
    const double sigma = std::sqrt(p[id] * (1 - p[id]) / n);
    EXPECT_NEAR(counts[tok] / n, p[id], 4 * sigma) << tok;
  }
}

TEST(DecodeMode, Parse) {
  EXPECT_EQ(parse_decode_mode("argmax"), DecodeMode::kArgmax);
  EXPECT_EQ(parse_decode_mode("sample"), DecodeMode::kSample);
  EXPECT_THROW(parse_decode_mode("beam"), ConfigError);
  GenerationRequest bad;
  bad.num_candidates = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
