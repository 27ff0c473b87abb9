#pragma once

#include <stdexcept>
#include <string>

namespace dstf {

// Shapes that do not line up for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model or run configuration (bad divisibility, unknown token, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad input data: out-of-range ids, empty corpus, unreadable files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An API called in a state where it cannot be used.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A metric that cannot be evaluated on the given input.
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dstf
