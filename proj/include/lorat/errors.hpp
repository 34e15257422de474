#pragma once

#include <stdexcept>
#include <string>

namespace lorat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or grids that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a precondition that is not about shapes or ranges.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation not permitted in the object's current state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lorat
