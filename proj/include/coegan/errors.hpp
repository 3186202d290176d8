#pragma once

#include <stdexcept>
#include <string>

namespace coegan {

// Base for every error raised by the library. `code()` is a stable
// machine-readable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message) : Error("precondition", message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

}  // namespace coegan
