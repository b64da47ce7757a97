#pragma once

#include <stdexcept>
#include <string>

namespace carekit {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree with an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its admissible domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Masked cross entropy called with every position masked out.
class EmptyLossError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// An argument lies outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A primitive produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Sequence longer than the model's context.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Token id outside the vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent persisted data (checkpoints, vocabularies).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined on the given input (e.g. no n-grams at all).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Degenerate input for a regression or interval statistic.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace carekit
