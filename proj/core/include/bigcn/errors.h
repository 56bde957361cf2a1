#ifndef BIGCN_ERRORS_H_
#define BIGCN_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace bigcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied an empty or otherwise unusable input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A propagation tree violates its structural invariants.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Model parameters do not match the model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Two values that must come from the same computation do not.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data. Carries the file and 1-based line number.
class ParseError : public Error {
 public:
  /// `line` 0 means the error is not tied to a line (binary or missing files).
  ParseError(std::string file, std::size_t line, const std::string& message)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) +
              ": " + message),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace bigcn

#endif  // BIGCN_ERRORS_H_
