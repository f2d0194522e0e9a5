#pragma once

#include <stdexcept>
#include <string>

namespace meanflow {

// Invalid user input: mesh resolutions, config files, group generator lists,
// out-of-range parameters. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Syntax error from the expression parser. Carries the byte offset of the
// first character that could not be consumed.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : ConfigError(msg), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// A parsed expression produced a non-finite or domain-violating value when
// evaluated (log of a non-positive argument, negative base with a fractional
// exponent, division by zero).
class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Newton solver failed: iteration budget exhausted or the line search could
// not reduce the residual. Carries the residual at the point of failure.
class NoConvergence : public std::runtime_error {
 public:
  NoConvergence(const std::string& msg, double final_residual)
      : std::runtime_error(msg), final_residual_(final_residual) {}
  double final_residual() const { return final_residual_; }

 private:
  double final_residual_;
};

// Programming error: a Field was used with a mesh it does not belong to, or
// an operation was called on the wrong mesh kind.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace meanflow
