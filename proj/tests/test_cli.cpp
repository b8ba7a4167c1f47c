#include <gtest/gtest.h>

#include <sstream>

#include "lbp/commands.hpp"
#include "support.hpp"

using namespace lbp;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "lbp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// One-sentence corpus: argmax decoding can only reproduce that sentence.
std::string write_sky_config(test::TempDir& dir, std::size_t trials = 3) {
  dir.write("corpus.jsonl", R"({"text": "The sky is blue."})" "\n");
  dir.write("world.json", R"({"states": ["sky_blue", "sky_red"],
    "structures": [{"name": "s0", "valuation": {"sky_blue": 1, "sky_red": 0}}],
    "reference": {"the sky is blue": "sky_blue", "the sky is red": "sky_red"},
    "language": ["the sky is blue", "the sky is red"]})");
  dir.write("config.json", json{{"mode", "text-to-text"},
                                {"corpus", "corpus.jsonl"},
                                {"world_file", "world.json"},
                                {"generator", {{"order", 2}, {"decode", "argmax"}}},
                                {"trials", trials},
                                {"seed", 5}}
                               .dump());
  return dir.file("config.json");
}

}  // namespace

TEST(Cli, RunGoldenOutput) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  const auto r = run({"run", "--config", cfg, "--out", dir.file("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "trials 3, accepted 3\n");
  EXPECT_EQ(test::slurp(dir.file("out/trials.jsonl")), test::slurp(test::data("sky_trials.golden.jsonl")));
  EXPECT_EQ(test::slurp(dir.file("out/report.json")), test::slurp(test::data("sky_report.golden.json")));
  const auto m = json::parse(test::slurp(dir.file("out/manifest.json")));
  EXPECT_EQ(m["artifacts"]["trials.jsonl"], sha256_file(dir.file("out/trials.jsonl")));
  EXPECT_EQ(m["seeds"]["seed"], 5);
}

TEST(Cli, MissingCorpusIsUsageError) {
  test::TempDir dir;
  dir.write("config.json", R"({"mode": "text-to-text", "trials": 2})");
  const auto r = run({"run", "--config", dir.file("config.json"), "--out", dir.file("out")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("corpus"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"run", "--bogus"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
}

TEST(Cli, ConfigAndManifestAreExclusive) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  EXPECT_EQ(run({"run", "--out", dir.file("o")}).code, 2);
  EXPECT_EQ(run({"run", "--config", cfg, "--manifest", cfg, "--out", dir.file("o")}).code, 2);
}

TEST(Cli, ManifestRerunIsByteIdentical) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir, 20);
  ASSERT_EQ(run({"run", "--config", cfg, "--out", dir.file("a")}).code, 0);
  const auto r = run({"run", "--manifest", dir.file("a/manifest.json"), "--out", dir.file("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"trials.jsonl", "trials.csv", "report.json", "manifest.json"}) {
    EXPECT_EQ(test::slurp(dir.file(std::string("a/") + f)), test::slurp(dir.file(std::string("b/") + f)))
        << f;
  }
}

TEST(Cli, ManifestRejectsChangedInput) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  ASSERT_EQ(run({"run", "--config", cfg, "--out", dir.file("a")}).code, 0);
  dir.write("corpus.jsonl", R"({"text": "The sky is green."})" "\n");
  const auto r = run({"run", "--manifest", dir.file("a/manifest.json"), "--out", dir.file("b")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("changed"), std::string::npos) << r.err;
}

TEST(Cli, LearnThenPrune) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", dir.file("learn")}).code, 0);
  dir.write("cands.txt", "the sky is blue!\nthe sky is red\n");
  const auto r = run({"prune", "--evidence", dir.file("learn/evidence.jsonl"), "--candidates",
                      dir.file("cands.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string l1, l2;
  std::getline(lines, l1);
  std::getline(lines, l2);
  EXPECT_EQ(json::parse(l1)["accepted"], true);
  EXPECT_EQ(json::parse(l1)["output"], "the sky is blue!");
  EXPECT_EQ(json::parse(l2)["accepted"], false);
  EXPECT_EQ(json::parse(l2)["output"], "I don't know.");
}

TEST(Cli, PruneEmptyCandidatesAndMalformedSnapshot) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", dir.file("learn")}).code, 0);
  dir.write("empty.txt", "");
  auto r = run({"prune", "--evidence", dir.file("learn/evidence.jsonl"), "--candidates",
                dir.file("empty.txt")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "");
  dir.write("bad.jsonl", "{not json\n");
  r = run({"prune", "--evidence", dir.file("bad.jsonl"), "--candidates", dir.file("empty.txt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, BabbleArgmax) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  const auto r = run({"babble", "--config", cfg, "--decode", "argmax"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "the sky is blue\n");
}

TEST(Cli, CheckSelectionAndBounds) {
  auto r = run({"check", "--check", "kl_nonimplication"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("pass kl_nonimplication (1 instances)", 0), 0u) << r.out;
  EXPECT_EQ(run({"check", "--max-states", "13"}).code, 2);
  EXPECT_EQ(run({"check", "--max-strings", "65"}).code, 2);
  EXPECT_EQ(run({"check", "--check", "nope"}).code, 2);
}

TEST(Cli, CheckWritesResults) {
  test::TempDir dir;
  const auto r = run({"check", "--seeds", "5", "--world-seeds", "10", "--out", dir.file("c")});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto j = json::parse(test::slurp(dir.file("c/check_results.json")));
  EXPECT_EQ(j.size(), check_names().size());
}

TEST(Cli, ReportRecomputesFromTrials) {
  test::TempDir dir;
  const auto cfg = write_sky_config(dir);
  ASSERT_EQ(run({"run", "--config", cfg, "--out", dir.file("a")}).code, 0);
  ASSERT_EQ(run({"report", "--trials", dir.file("a/trials.jsonl"), "--out", dir.file("r")}).code, 0);
  EXPECT_EQ(test::slurp(dir.file("a/report.json")), test::slurp(dir.file("r/report.json")));
}
