#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace soad {

/// Argument outside the mathematical domain of an operation (e.g. t outside [0, 1]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Vector or matrix dimensions that do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed user input: empty datasets, non-finite values, layout mismatches.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values or files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical breakdown: singular systems, non-finite intermediate values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss during training.
class TrainingDivergence : public NumericalError {
 public:
  TrainingDivergence(std::size_t step, const std::string& what)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Non-finite state during reverse-time sampling or time integration.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(double t, std::size_t step, const std::string& what)
      : NumericalError(what), t_(t), step_(step) {}
  double time() const noexcept { return t_; }
  std::size_t step() const noexcept { return step_; }

 private:
  double t_;
  std::size_t step_;
};

/// Binary container or JSON document that cannot be parsed.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace soad
