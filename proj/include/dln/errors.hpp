#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dln {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix shapes do not conform, or a requested dimension is zero.
class InvalidDimension : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf found in numeric input.
class NumericInput : public Error {
 public:
  using Error::Error;
};

/// Input violates a structural requirement (e.g. symmetry, parameter range).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A problem instance with no usable data (rank zero, zero spectrum).
class DegenerateInstance : public Error {
 public:
  using Error::Error;
};

class InvalidIndex : public Error {
 public:
  using Error::Error;
};

/// Exact materialization refused because the operator exceeds the size threshold.
class TooLarge : public Error {
 public:
  using Error::Error;
};

class PreconditionFailed : public Error {
 public:
  using Error::Error;
};

/// Gradient descent produced a non-finite value or blew past the divergence threshold.
class Divergence : public Error {
 public:
  Divergence(std::size_t iteration, const std::string& what)
      : Error("diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Malformed experiment configuration. `where` names the field path or line:column.
class ConfigError : public Error {
 public:
  ConfigError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace dln
