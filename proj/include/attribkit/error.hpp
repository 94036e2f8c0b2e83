#pragma once

#include <stdexcept>
#include <string>

namespace attribkit {

enum class ErrorKind {
  InvalidArgument,
  Io,
  Parse,
  Validation,
  Transport,  // retryable
  Remote,     // non-retryable response problem
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept { return kind_ == ErrorKind::Transport; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace attribkit
