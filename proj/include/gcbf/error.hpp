#pragma once

#include <stdexcept>
#include <string>

namespace gcbf {

// Base of everything the library throws. The CLI maps the subclasses onto
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class UnknownPrimitiveError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CorruptPayloadError : public Error {
 public:
  using Error::Error;
};

class EnvMismatchError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling could not place agents/goals under the clearance rules.
class InfeasibleScenarioError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcbf
