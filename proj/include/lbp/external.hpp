#pragma once

#include <chrono>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "lbp/babbler.hpp"
#include "lbp/errors.hpp"

extern char** environ;

namespace lbp {

inline constexpr std::chrono::milliseconds kDefaultGeneratorDeadline{30000};

/// Deadline override from LBP_GENERATOR_DEADLINE (seconds, may be
/// fractional); the default otherwise.
inline std::chrono::milliseconds generator_deadline_from_env(
    std::chrono::milliseconds fallback = kDefaultGeneratorDeadline) {
  const char* v = std::getenv("LBP_GENERATOR_DEADLINE");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const double secs = std::strtod(v, &end);
  if (end == v || *end != '\0' || !(secs > 0)) {
    throw ConfigError(std::string("LBP_GENERATOR_DEADLINE must be a positive "
                                  "number of seconds, got '") + v + "'");
  }
  return std::chrono::milliseconds(static_cast<long long>(secs * 1000.0));
}

// Wire protocol, one JSON object per line in each direction:
//   request  {"prompt": str, "n": int, "max_tokens": int,
//             "mode": "argmax"|"sample", "seed": int}
//   response {"candidates": [str, ...]} | {"error": str}

inline std::string encode_request(const GenerationRequest& req) {
  nlohmann::json j{{"prompt", req.prompt.raw()},
                   {"n", req.num_candidates},
                   {"max_tokens", req.max_tokens},
                   {"mode", to_string(req.mode)},
                   {"seed", req.seed}};
  return j.dump();
}

inline GenerationRequest decode_request(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  GenerationRequest req;
  req.prompt = SentenceString(j.at("prompt").get<std::string>());
  req.num_candidates = j.at("n").get<std::size_t>();
  req.max_tokens = j.at("max_tokens").get<std::size_t>();
  req.mode = parse_decode_mode(j.at("mode").get<std::string>());
  req.seed = j.at("seed").get<std::uint64_t>();
  return req;
}

/// Parses one response line; candidates are normalized on receipt.
inline std::vector<SentenceString> decode_response(const std::string& line,
                                                   std::size_t max_candidates) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw GeneratorError(GeneratorError::Kind::kProtocol,
                         "generator sent malformed JSON: " + line);
  }
  if (!j.is_object()) {
    throw GeneratorError(GeneratorError::Kind::kProtocol,
                         "generator response is not an object");
  }
  if (j.contains("error")) {
    const auto& e = j["error"];
    throw GeneratorError(GeneratorError::Kind::kRemote,
                         "generator error: " + (e.is_string() ? e.get<std::string>() : e.dump()));
  }
  if (!j.contains("candidates") || !j["candidates"].is_array()) {
    throw GeneratorError(GeneratorError::Kind::kProtocol,
                         "generator response lacks a candidates array");
  }
  std::vector<SentenceString> out;
  for (const auto& c : j["candidates"]) {
    if (!c.is_string()) {
      throw GeneratorError(GeneratorError::Kind::kProtocol,
                           "generator candidate is not a string");
    }
    out.emplace_back(c.get<std::string>());
  }
  if (out.size() > max_candidates) {
    throw GeneratorError(GeneratorError::Kind::kProtocol,
                         "generator returned " + std::to_string(out.size()) +
                             " candidates for n=" + std::to_string(max_candidates));
  }
  return out;
}

/// A line-oriented request/response channel to an external generator.
/// Addresses: "exec:<shell command>" spawns a process and talks over its
/// stdin/stdout; "tcp:<host>:<port>" connects a socket. One request is in
/// flight at a time. After a timeout or I/O failure the channel is unusable.
class ExternalGenerator {
 public:
  ExternalGenerator(const ExternalGenerator&) = delete;
  ExternalGenerator& operator=(const ExternalGenerator&) = delete;

  static std::unique_ptr<ExternalGenerator> open(
      const std::string& address,
      std::chrono::milliseconds deadline = generator_deadline_from_env()) {
    std::unique_ptr<ExternalGenerator> g(new ExternalGenerator(deadline));
    if (address.rfind("exec:", 0) == 0) {
      g->spawn(address.substr(5));
    } else if (address.rfind("tcp:", 0) == 0) {
      g->connect_tcp(address.substr(4));
    } else {
      throw ConfigError("generator address must start with exec: or tcp:, got '" +
                        address + "'");
    }
    g->address_ = address;
    return g;
  }

  ~ExternalGenerator() { shutdown(); }

  const std::string& address() const noexcept { return address_; }
  std::chrono::milliseconds deadline() const noexcept { return deadline_; }

  std::vector<SentenceString> generate(const GenerationRequest& req) {
    req.validate();
    std::lock_guard<std::mutex> lock(mu_);
    if (broken_) {
      throw GeneratorError(GeneratorError::Kind::kChannel,
                           "generator channel is closed after an earlier failure");
    }
    const auto until = std::chrono::steady_clock::now() + deadline_;
    try {
      write_all(encode_request(req) + "\n", until);
      return decode_response(read_line(until), req.num_candidates);
    } catch (const GeneratorError& e) {
      if (e.kind() != GeneratorError::Kind::kRemote) broken_ = true;
      throw;
    }
  }

 private:
  explicit ExternalGenerator(std::chrono::milliseconds deadline) : deadline_(deadline) {}

  void spawn(const std::string& command) {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) fail_channel("pipe");
    if (pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      fail_channel("pipe");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, to_child[1]);
    posix_spawn_file_actions_addclose(&actions, from_child[0]);
    std::string sh = "/bin/sh", flag = "-c", cmd = "exec " + command;
    char* argv[] = {sh.data(), flag.data(), cmd.data(), nullptr};
    const int rc = posix_spawn(&child_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
    if (rc != 0) {
      child_ = -1;
      fail_channel(std::string("cannot spawn generator: ") + std::strerror(rc));
    }
  }

  void connect_tcp(const std::string& hostport) {
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) {
      throw ConfigError("tcp generator address needs host:port, got '" + hostport + "'");
    }
    const std::string host = hostport.substr(0, colon);
    const std::string port = hostport.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
      fail_channel("cannot resolve generator address '" + hostport + "'");
    }
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype | SOCK_CLOEXEC, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) fail_channel("cannot connect to generator at '" + hostport + "'");
    socket_ = true;
    read_fd_ = write_fd_ = fd;
  }

  [[noreturn]] void fail_channel(const std::string& what) {
    broken_ = true;
    throw GeneratorError(GeneratorError::Kind::kChannel, what);
  }

  int remaining_ms(std::chrono::steady_clock::time_point until) const {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        until - std::chrono::steady_clock::now());
    return left.count() > 0 ? static_cast<int>(left.count()) : 0;
  }

  [[noreturn]] void fail_timeout() {
    throw GeneratorError(GeneratorError::Kind::kTimeout,
                         "generator did not answer within " +
                             std::to_string(deadline_.count()) + " ms");
  }

  void write_all(const std::string& data, std::chrono::steady_clock::time_point until) {
    std::size_t off = 0;
    while (off < data.size()) {
      pollfd pfd{write_fd_, POLLOUT, 0};
      const int ready = ::poll(&pfd, 1, remaining_ms(until));
      if (ready == 0) fail_timeout();
      if (ready < 0) {
        if (errno == EINTR) continue;
        fail_channel("poll failed while writing to generator");
      }
      const ssize_t n = socket_ ? ::send(write_fd_, data.data() + off, data.size() - off,
                                         MSG_NOSIGNAL)
                                : ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        fail_channel("generator channel closed while writing");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::steady_clock::time_point until) {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, remaining_ms(until));
      if (ready == 0) fail_timeout();
      if (ready < 0) {
        if (errno == EINTR) continue;
        fail_channel("poll failed while reading from generator");
      }
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        fail_channel("generator channel read failed");
      }
      if (n == 0) {
        throw GeneratorError(GeneratorError::Kind::kChannel,
                             "generator closed the channel");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (child_ > 0) {
      ::kill(child_, SIGTERM);
      int status = 0;
      ::waitpid(child_, &status, 0);
      child_ = -1;
    }
  }

  std::chrono::milliseconds deadline_;
  std::string address_;
  std::mutex mu_;
  int read_fd_ = -1;
  int write_fd_ = -1;
  bool socket_ = false;
  pid_t child_ = -1;
  bool broken_ = false;
  std::string buffer_;
};

inline std::vector<SentenceString> babble_external(ExternalGenerator& endpoint,
                                                   const GenerationRequest& req) {
  return endpoint.generate(req);
}

}  // namespace lbp
