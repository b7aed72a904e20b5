#pragma once

#include <stdexcept>
#include <string>

namespace vgseg {

// Error taxonomy shared by every module. Callers that only care about
// "something went wrong" can catch vgseg::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files: header/payload mismatches, bad sidecars, corrupt graphs.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Payloads that parse but hold unusable values (NaN, Inf).
class DataError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

// Violated preconditions between arguments (shape or dims mismatch, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was invoked before the stage it depends on.
class StageError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training (loss became NaN/Inf).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace vgseg
