#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hamlab {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical blow-up. The CLI maps every subclass to exit code 2.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class PropagationDiverged : public DivergenceError {
 public:
  PropagationDiverged(std::size_t index, double value)
      : DivergenceError("state propagation diverged at index " + std::to_string(index) +
                        " (value " + std::to_string(value) + ")"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class AdjointDiverged : public DivergenceError {
 public:
  AdjointDiverged(std::size_t index, double value)
      : DivergenceError("costate back-propagation diverged at index " + std::to_string(index) +
                        " (value " + std::to_string(value) + ")"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Lengths or dimensions of inputs disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid argument outside of dimension checks (non-positive step, bad id, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class SingularMetric : public Error {
 public:
  using Error::Error;
};

class DegenerateGrid : public Error {
 public:
  using Error::Error;
};

// Malformed experiment configuration. The CLI maps it to exit code 3.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hamlab
