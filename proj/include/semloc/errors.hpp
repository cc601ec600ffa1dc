#pragma once

#include <stdexcept>
#include <string>

namespace semloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number of the offending line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that breaks a data invariant (undeclared concept, bad polygon...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation parameters outside their precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Numeric domain violation (non-SPD covariance, negative distance, point above horizon).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Two operands that must agree structurally do not (e.g. descriptor layouts).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace semloc
