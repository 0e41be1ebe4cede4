#pragma once

#include <stdexcept>
#include <string>

namespace bora {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible; the message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// A row/column norm fell below the configured floor in strict mode.
struct DegenerateNormError : Error {
  using Error::Error;
};

// An API precondition was violated (non-scalar loss, unsorted snapshots, ...).
struct ContractError : Error {
  using Error::Error;
};

// An index is out of range (class label, archive offset, ...).
struct IndexError : Error {
  using Error::Error;
};

// A computation produced a non-finite value outside of training.
struct NumericError : Error {
  using Error::Error;
};

// Too few snapshots / runs to compute the requested quantity.
struct InsufficientDataError : Error {
  using Error::Error;
};

// Series cannot be combined because their timestep grids differ.
struct AlignmentError : Error {
  using Error::Error;
};

// A ratio whose denominator is zero.
struct UndefinedRatioError : Error {
  using Error::Error;
};

// Invalid configuration; carries the offending field path (e.g. "adapter.rank").
struct ConfigError : Error {
  ConfigError(std::string field_path, const std::string& message)
      : Error(field_path.empty() ? message : field_path + ": " + message),
        field(std::move(field_path)) {}
  std::string field;
};

// Training produced a non-finite loss; carries the offending step.
struct DivergenceError : Error {
  DivergenceError(long at_step, const std::string& message)
      : Error(message), step(at_step) {}
  long step;
};

// A snapshot archive exists but is malformed.
struct ArchiveError : Error {
  using Error::Error;
};

// A snapshot archive (or run directory) is absent.
struct ArchiveMissingError : Error {
  using Error::Error;
};

// Runs under comparison have incompatible snapshot grids.
struct GridMismatchError : Error {
  using Error::Error;
};

}  // namespace bora
