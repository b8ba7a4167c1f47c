#include <gtest/gtest.h>

#include "lbp/random.hpp"
#include "lbp/sentence.hpp"

using namespace lbp;

TEST(Normalize, FoldsCaseAndWhitespace) {
  EXPECT_EQ(normalize("  The  Eiffel\tTower "), "the eiffel tower");
  EXPECT_EQ(normalize("Hello."), "hello");
  EXPECT_EQ(normalize("Hello?!"), "hello");
  EXPECT_EQ(normalize("a . b."), "a . b");
  EXPECT_EQ(normalize(""), "");
  EXPECT_EQ(normalize(" ... "), "");
}

TEST(Normalize, KeepsNonAsciiBytes) {
  EXPECT_EQ(normalize("Caf\xC3\xA9 OK"), "caf\xC3\xA9 ok");
}

TEST(Normalize, IdempotentOnRandomStrings) {
  const std::string alphabet = "aB .,!?;:\t\nxY";
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    std::string s;
    const auto len = rng.below(20);
    for (std::uint64_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
    const auto once = normalize(s);
    ASSERT_EQ(normalize(once), once) << "input '" << s << "'";
    ASSERT_EQ(join_tokens(split_tokens(once)), once);
  }
}

TEST(SentenceString, EqualityIsOnNormalizedText) {
  SentenceString a("Joe Biden won."), b("joe   biden WON");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.raw(), "Joe Biden won.");
  EXPECT_EQ(a.tokens(), (std::vector<std::string>{"joe", "biden", "won"}));
  EXPECT_EQ(std::hash<SentenceString>{}(a), std::hash<SentenceString>{}(b));
  EXPECT_TRUE(SentenceString(" . ").empty());
  EXPECT_LT(SentenceString("a"), SentenceString("b"));
}
