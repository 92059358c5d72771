#pragma once

#include <stdexcept>
#include <string>

namespace ntvml {

/// Precondition violated by the caller (bad width, NaN input, out-of-range probability).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tree too large for the comparator-array + LUT form.
class UnsupportedTree : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Voter weights sum to zero.
class DegenerateWeights : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dual solver did not converge.
class TrainingFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stratified split left a class without training rows.
class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ntvml
