// Deterministic stand-in for an external generator. Reads one JSON request
// per line and answers with one JSON response per line, over stdin/stdout or
// a single accepted TCP connection.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "lbp/external.hpp"

namespace {

struct Options {
  std::string mode = "echo";  // echo | fixed | silent | garbage | error | overflow
  std::string fixture;
  long exit_after = -1;
  int listen_port = -1;
  std::string port_file;
};

std::vector<std::string> load_fixture(const std::string& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw std::runtime_error("fixture is empty");
  return lines;
}

std::string answer(const Options& o, const std::vector<std::string>& fixture,
                   const std::string& line) {
  lbp::GenerationRequest req;
  try {
    req = lbp::decode_request(line);
  } catch (const std::exception&) {
    return nlohmann::json{{"error", "parse"}}.dump();
  }
  nlohmann::json cands = nlohmann::json::array();
  if (o.mode == "echo") {
    cands.push_back(req.prompt.raw());
  } else if (o.mode == "fixed") {
    // Candidate i is fixture line (seed + i) mod size.
    for (std::size_t i = 0; i < req.num_candidates; ++i) {
      cands.push_back(fixture[(req.seed % fixture.size() + i) % fixture.size()]);
    }
  } else if (o.mode == "garbage") {
    return "this is not json";
  } else if (o.mode == "error") {
    return nlohmann::json{{"error", "stub failure"}}.dump();
  } else if (o.mode == "overflow") {
    for (std::size_t i = 0; i <= req.num_candidates; ++i) cands.push_back(req.prompt.raw());
  }
  return nlohmann::json{{"candidates", cands}}.dump();
}

int serve(const Options& o, FILE* in, FILE* out) {
  const auto fixture = o.mode == "fixed" ? load_fixture(o.fixture) : std::vector<std::string>{};
  char* buf = nullptr;
  size_t cap = 0;
  long served = 0;
  ssize_t n;
  while ((n = getline(&buf, &cap, in)) >= 0) {
    std::string line(buf, static_cast<std::size_t>(n));
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    if (o.mode == "silent") continue;
    std::fprintf(out, "%s\n", answer(o, fixture, line).c_str());
    std::fflush(out);
    if (o.exit_after >= 0 && ++served >= o.exit_after) break;
  }
  std::free(buf);
  return 0;
}

int serve_tcp(const Options& o) {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  int one = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(o.listen_port));
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(srv, 1) != 0) {
    std::perror("stub_generator: bind");
    return 1;
  }
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  if (!o.port_file.empty()) {
    // Write then rename so readers never see a partial file.
    const std::string tmp = o.port_file + ".tmp";
    std::ofstream(tmp) << ntohs(addr.sin_port) << '\n';
    std::rename(tmp.c_str(), o.port_file.c_str());
  }
  const int conn = ::accept(srv, nullptr, nullptr);
  ::close(srv);
  if (conn < 0) return 1;
  FILE* in = fdopen(conn, "r");
  FILE* out = fdopen(::dup(conn), "w");
  const int rc = serve(o, in, out);
  std::fclose(in);
  std::fclose(out);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Stub generator for the babbler wire protocol"};
  app.add_option("--mode", o.mode)
      ->check(CLI::IsMember({"echo", "fixed", "silent", "garbage", "error", "overflow"}));
  app.add_option("--fixture", o.fixture, "Candidate lines for fixed mode");
  app.add_option("--exit-after", o.exit_after, "Exit after this many responses");
  app.add_option("--listen", o.listen_port, "Serve one TCP connection on this port (0 picks one)");
  app.add_option("--port-file", o.port_file, "Write the bound port here");
  CLI11_PARSE(app, argc, argv);
  try {
    return o.listen_port >= 0 ? serve_tcp(o) : serve(o, stdin, stdout);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stub_generator: %s\n", e.what());
    return 1;
  }
}
