#pragma once

#include <stdexcept>
#include <string>

namespace lit {

// Base of every error raised by the library. Subclasses let callers (and the
// CLI exit-code mapping) distinguish configuration mistakes from faults.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A user-supplied configuration value is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A precondition of an API call was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Two parameter stores (or a store and a config) disagree structurally.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared during evaluation.
class NumericFault : public Error {
 public:
  using Error::Error;
};

}  // namespace lit
