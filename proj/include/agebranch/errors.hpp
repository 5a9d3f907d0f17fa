#pragma once

#include <stdexcept>
#include <string>

namespace agebranch {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violates a documented domain (negative age, z outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation needs at least one particle.
class EmptyPopulationError : public Error {
 public:
  using Error::Error;
};

/// Implicit step of a solver did not contract; the message names the offending dt.
class ContractionError : public Error {
 public:
  using Error::Error;
};

/// A series or integral remainder could not be pushed below the requested tolerance.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// A mathematical precondition (e.g. certified ergodicity) does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A sampled group or population exceeds the configured capacity.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration. The message lists every offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace agebranch
