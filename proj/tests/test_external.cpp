#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "lbp/external.hpp"
#include "support.hpp"

using namespace lbp;
using namespace std::chrono_literals;

namespace {

std::string stub(const std::string& args) {
  return std::string("exec:") + LBP_STUB_GENERATOR + " " + args;
}

std::string fixed_stub() {
  return stub("--mode fixed --fixture " + test::data("fixed_candidates.txt"));
}

GenerationRequest request(const std::string& prompt, std::size_t n = 1, std::uint64_t seed = 0) {
  GenerationRequest r;
  r.prompt = prompt;
  r.num_candidates = n;
  r.seed = seed;
  return r;
}

GeneratorError::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const GeneratorError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a GeneratorError";
  return GeneratorError::Kind::kRemote;
}

}  // namespace

TEST(Protocol, RequestRoundTrip) {
  auto r = request("Hello there", 3, 12345678901234ull);
  r.mode = DecodeMode::kArgmax;
  r.max_tokens = 7;
  const auto back = decode_request(encode_request(r));
  EXPECT_EQ(back.prompt.raw(), "Hello there");
  EXPECT_EQ(back.num_candidates, 3u);
  EXPECT_EQ(back.max_tokens, 7u);
  EXPECT_EQ(back.mode, DecodeMode::kArgmax);
  EXPECT_EQ(back.seed, 12345678901234ull);
}

TEST(Protocol, ResponseValidation) {
  const auto ok = decode_response(R"({"candidates":["Hi There.","x"]})", 2);
  EXPECT_EQ(ok[0].text(), "hi there");
  EXPECT_EQ(kind_of([] { decode_response("nope", 1); }), GeneratorError::Kind::kProtocol);
  EXPECT_EQ(kind_of([] { decode_response("[1]", 1); }), GeneratorError::Kind::kProtocol);
  EXPECT_EQ(kind_of([] { decode_response(R"({"candidates":[1]})", 1); }),
            GeneratorError::Kind::kProtocol);
  EXPECT_EQ(kind_of([] { decode_response(R"({"candidates":["a","b"]})", 1); }),
            GeneratorError::Kind::kProtocol);
  EXPECT_EQ(kind_of([] { decode_response(R"({"error":"boom"})", 1); }),
            GeneratorError::Kind::kRemote);
}

TEST(ExternalGenerator, EchoStub) {
  auto g = ExternalGenerator::open(stub("--mode echo"), 10s);
  const auto out = g->generate(request("hello"));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text(), "hello");
}

TEST(ExternalGenerator, FixedStubReturnsCandidatesInOrder) {
  auto g = ExternalGenerator::open(fixed_stub(), 10s);
  const auto out = g->generate(request("", 3));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].text(), "joe biden won the 2020 presidential election");
  EXPECT_EQ(out[1].text(), "donald trump won the 2020 presidential election");
  EXPECT_EQ(out[2].text(), "hillary clinton lost the 2016 presidential election");
}

TEST(ExternalGenerator, HundredCyclesMatchFixture) {
  std::vector<std::string> fixture;
  {
    std::ifstream in(test::data("fixed_candidates.txt"));
    for (std::string l; std::getline(in, l);) {
      if (!l.empty()) fixture.push_back(normalize(l));
    }
  }
  auto g = ExternalGenerator::open(fixed_stub(), 10s);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const std::size_t n = 1 + k % 4;
    const auto out = g->generate(request("p" + std::to_string(k), n, k));
    ASSERT_EQ(out.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_EQ(out[i].text(), fixture[(k + i) % fixture.size()]);
    }
  }
}

TEST(ExternalGenerator, SilentStubTimesOut) {
  auto g = ExternalGenerator::open(stub("--mode silent"), 200ms);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(kind_of([&] { g->generate(request("x")); }), GeneratorError::Kind::kTimeout);
  const auto took = std::chrono::steady_clock::now() - start;
  EXPECT_GE(took, 190ms);
  EXPECT_LT(took, 5s);
  EXPECT_EQ(kind_of([&] { g->generate(request("x")); }), GeneratorError::Kind::kChannel);
}

TEST(ExternalGenerator, GarbageIsProtocolErrorThenChannelClosed) {
  auto g = ExternalGenerator::open(stub("--mode garbage"), 10s);
  EXPECT_EQ(kind_of([&] { g->generate(request("x")); }), GeneratorError::Kind::kProtocol);
  EXPECT_EQ(kind_of([&] { g->generate(request("x")); }), GeneratorError::Kind::kChannel);
}

TEST(ExternalGenerator, OverflowIsProtocolError) {
  auto g = ExternalGenerator::open(stub("--mode overflow"), 10s);
  EXPECT_EQ(kind_of([&] { g->generate(request("x", 2)); }), GeneratorError::Kind::kProtocol);
}

TEST(ExternalGenerator, RemoteErrorKeepsSession) {
  auto g = ExternalGenerator::open(stub("--mode error"), 10s);
  EXPECT_EQ(kind_of([&] { g->generate(request("x")); }), GeneratorError::Kind::kRemote);
  EXPECT_EQ(kind_of([&] { g->generate(request("y")); }), GeneratorError::Kind::kRemote);
}

TEST(ExternalGenerator, ClosedChannel) {
  auto g = ExternalGenerator::open(stub("--mode echo --exit-after 1"), 10s);
  EXPECT_EQ(g->generate(request("one"))[0].text(), "one");
  EXPECT_EQ(kind_of([&] { g->generate(request("two")); }), GeneratorError::Kind::kChannel);

  auto missing = ExternalGenerator::open("exec:/nonexistent/generator", 5s);
  EXPECT_EQ(kind_of([&] { missing->generate(request("x")); }), GeneratorError::Kind::kChannel);
}

TEST(ExternalGenerator, BadAddress) {
  EXPECT_THROW(ExternalGenerator::open("http://x"), ConfigError);
  EXPECT_THROW(ExternalGenerator::open("tcp:nohostport"), ConfigError);
  EXPECT_EQ(kind_of([] { ExternalGenerator::open("tcp:127.0.0.1:1", 1s); }),
            GeneratorError::Kind::kChannel);
}

TEST(ExternalGenerator, TcpTransport) {
  test::TempDir dir;
  const auto port_file = dir.file("port");
  const std::string cmd = std::string(LBP_STUB_GENERATOR) + " --mode echo --listen 0 --port-file " +
                          port_file + " &";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  for (int i = 0; i < 500 && !std::filesystem::exists(port_file); ++i) {
    std::this_thread::sleep_for(10ms);
  }
  ASSERT_TRUE(std::filesystem::exists(port_file));
  const auto port = test::slurp(port_file);
  auto g = ExternalGenerator::open("tcp:127.0.0.1:" + port.substr(0, port.find('\n')), 10s);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(g->generate(request("ping " + std::to_string(k)))[0].text(),
              "ping " + std::to_string(k));
  }
}

TEST(Deadline, EnvironmentOverride) {
  ::setenv("LBP_GENERATOR_DEADLINE", "0.25", 1);
  EXPECT_EQ(generator_deadline_from_env(), 250ms);
  ::setenv("LBP_GENERATOR_DEADLINE", "soon", 1);
  EXPECT_THROW(generator_deadline_from_env(), ConfigError);
  ::unsetenv("LBP_GENERATOR_DEADLINE");
  EXPECT_EQ(generator_deadline_from_env(), kDefaultGeneratorDeadline);
  EXPECT_EQ(generator_deadline_from_env(5s), 5s);
}
