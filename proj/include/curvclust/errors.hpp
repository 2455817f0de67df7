#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace curvclust {

// Malformed input text. Carries the 1-based line number of the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A node without neighbors has no Ricci mass distribution.
class EmptyNeighborhoodError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InfeasibleTransportError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Point off its factor manifold, or a singular map input.
class ConstraintError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class NumericDomainError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace curvclust
