#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace restcn {

/// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument is outside the domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid model, training or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A call violated an API contract (e.g. decomposing a train-mode cache).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Data-level problem: unknown ids, inconsistent datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed skeleton text, located by line number.
class ParseError : public DataError {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Checkpoint could not be decoded (bad magic, version, truncation).
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interpretability operations refuse models whose skip paths are not
/// identities unless explicitly forced.
class InterpretabilityRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace restcn
