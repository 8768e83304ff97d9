#pragma once

#include <stdexcept>
#include <string>

namespace cnnforge {

/// Failure classes, mapped one-to-one onto CLI exit codes.
enum class ErrorKind {
  input = 2,       // unreadable or malformed input
  contract = 3,    // violated precondition or dimension mismatch
  divergence = 4,  // unstable dynamics or search failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time)
      : Error(ErrorKind::divergence, what), time_(time) {}
  /// Simulation time at which the state first left the admissible range.
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Malformed text file; carries the 1-based offending line.
class ParseError : public InputError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : InputError(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cnnforge
