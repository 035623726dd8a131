#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cellsense {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on arguments was violated (empty input, out-of-range value).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A text file did not follow its format. line() is 1-based, 0 when unknown.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// The estimator has no evidence it can use for this observation.
class NotLocatable : public Error {
 public:
  using Error::Error;
};

// Linear algebra failed (non-finite input, matrix not positive definite).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cellsense
