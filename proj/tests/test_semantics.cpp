#include <gtest/gtest.h>

#include "lbp/random.hpp"
#include "lbp/semantics.hpp"
#include "support.hpp"

using namespace lbp;

namespace {

WorldModel election() { return load_world(test::data("election_world.json")); }

}  // namespace

TEST(Truth, ElectionFixture) {
  const auto w = election();
  const auto& s0 = w.designated();
  EXPECT_TRUE(evaluate_truth(w, s0, "Joe Biden won the 2020 President election"));
  EXPECT_FALSE(evaluate_truth(w, s0, "Donald Trump won the 2020 Presidential election"));
  EXPECT_TRUE(actually_true(w, "Joe Biden won the 2020 Presidential election."));
  const Structure* s1 = w.find_structure("s1");
  ASSERT_NE(s1, nullptr);
  EXPECT_TRUE(evaluate_truth(w, *s1, "Donald Trump won the 2020 Presidential election"));
}

TEST(Truth, AllZeroStructureMakesEverythingFalse) {
  const auto w = WorldModel::with_full_structures(
      {"a", "b", "c"}, {{"x", "a"}, {"y", "b"}, {"z", "c"}}, {"x", "y", "z"}, {1, 1, 1});
  const Structure& zero = w.structures()[0];
  for (const auto& l : w.language()) EXPECT_FALSE(evaluate_truth(w, zero, l));
}

TEST(Truth, UnknownStringOrStructureIsDomainError) {
  const auto w = election();
  EXPECT_THROW(evaluate_truth(w, w.designated(), "the moon is cheese"), DomainError);
  Structure alien{"alien", std::vector<std::uint8_t>(w.states().size(), 1)};
  EXPECT_THROW(evaluate_truth(w, alien, "joe biden won the 2020 presidential election"),
               DomainError);
}

TEST(Synonymy, Reflexive) {
  const auto w = election();
  for (const auto& l : w.language()) EXPECT_TRUE(are_synonymous(w, l, l));
}

TEST(Synonymy, EiffelPairSharesReferent) {
  const auto w = load_world(test::data("eiffel_world.json"));
  EXPECT_EQ(w.family(), StructureFamily::kFull);
  EXPECT_TRUE(are_synonymous(
      w, "The Eiffel Tower is the tallest building in France",
      "It is not the case that the Eiffel Tower is not the tallest building in France"));
  EXPECT_FALSE(are_synonymous(w, "Morning Star is bright",
                              "The Eiffel Tower is the tallest building in France"));
}

TEST(Synonymy, DistinctReferentsSeparatedUnderFullFamily) {
  // Oracle: for every pair with distinct referents, some valuation separates them.
  const auto w = WorldModel::with_full_structures(
      {"p", "q", "r"}, {{"one", "p"}, {"two", "q"}, {"three", "r"}, {"uno", "p"}},
      {"one", "two", "three", "uno"}, {0, 1, 0});
  for (const auto& a : w.language()) {
    for (const auto& b : w.language()) {
      const bool same = w.referent(a) == w.referent(b);
      bool separated = false;
      for (std::uint64_t mask = 0; mask < 8; ++mask) {
        const bool ta = (mask >> w.referent(a)) & 1u;
        const bool tb = (mask >> w.referent(b)) & 1u;
        if (ta != tb) separated = true;
      }
      EXPECT_EQ(are_synonymous(w, a, b), !separated) << a << " / " << b;
      EXPECT_EQ(are_synonymous(w, a, b), same);
    }
  }
}

TEST(Synonymy, RelativeToGivenFamily) {
  // Two states that every given structure values alike: synonymous relative
  // to the given family only.
  std::vector<Structure> s{{"s0", {1, 1}}, {"s1", {0, 0}}};
  const auto w = WorldModel::create({"p", "q"}, s, {{"x", "p"}, {"y", "q"}}, {"x", "y"});
  EXPECT_EQ(w.family(), StructureFamily::kGiven);
  EXPECT_STREQ(to_string(w.family()), "relative-to-given-S");
  EXPECT_TRUE(are_synonymous(w, "x", "y"));
}

TEST(Enumerate, Counts) {
  EXPECT_EQ(enumerate_structures({"a"}).size(), 2u);
  EXPECT_EQ(enumerate_structures({"a", "b", "c"}).size(), 8u);
  EXPECT_THROW(enumerate_structures({}), DomainError);
  std::vector<StateId> many(21, "x");
  for (std::size_t i = 0; i < many.size(); ++i) many[i] += std::to_string(i);
  EXPECT_THROW(enumerate_structures(many), CapacityError);
  const auto all = enumerate_structures({"a", "b", "c"});
  std::set<std::vector<std::uint8_t>> distinct;
  for (const auto& s : all) distinct.insert(s.valuation);
  EXPECT_EQ(distinct.size(), 8u);
  EXPECT_EQ(all[5].name, "v101");
}

TEST(WorldModel, Validation) {
  std::vector<Structure> s{{"s0", {1}}};
  EXPECT_THROW(WorldModel::create({}, s, {}, {}), DomainError);
  EXPECT_THROW(WorldModel::create({"a"}, s, {{"x", "b"}}, {"x"}), DomainError);
  EXPECT_THROW(WorldModel::create({"a"}, s, {}, {"x"}), DomainError);
  EXPECT_THROW(WorldModel::create({"a"}, s, {{"x", "a"}}, {"x"}, "nope"), DomainError);
  EXPECT_THROW(WorldModel::create({"a"}, {{"s0", {1, 0}}}, {{"x", "a"}}, {"x"}), DomainError);
}

TEST(WorldModel, JsonRoundTrip) {
  const auto w = election();
  const auto again = world_from_json(to_json(w));
  EXPECT_EQ(again.language(), w.language());
  EXPECT_EQ(again.states(), w.states());
  EXPECT_EQ(again.designated().valuation, w.designated().valuation);
  EXPECT_EQ(to_json(again), to_json(w));
}
