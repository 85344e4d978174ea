#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cosdpo {

/// Raised when an argument violates an operation's precondition.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised while reading malformed text or binary input.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  /// 1-based line number, or 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a computation produces a non-finite value or is numerically unstable.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string primitive, const std::string& what)
      : std::runtime_error(primitive + ": " + what), primitive_(std::move(primitive)) {}

  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

/// A training loop hit a non-finite loss. Carries the step and the failing component.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(std::size_t step, const std::string& primitive, const std::string& what)
      : NumericalError(primitive, "step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace cosdpo
