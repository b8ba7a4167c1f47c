#pragma once

#include <stdexcept>
#include <string>

namespace lbp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ill-formed use of a WorldModel: unknown string, state or structure.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A configured enumeration or closure bound was exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Input file could not be parsed. Carries the 1-based line when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Two labels for the same orbit (or the same string) disagree.
class LabelConflictError : public Error {
 public:
  using Error::Error;
};

/// External generator failed: protocol violation, timeout or dead channel.
class GeneratorError : public Error {
 public:
  enum class Kind { kProtocol, kTimeout, kChannel, kRemote };

  GeneratorError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid configuration. Maps to the usage exit code in the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Error raised inside one Learn-Babble-Prune phase, tagged with its name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace lbp
