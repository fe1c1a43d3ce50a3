#pragma once

#include <stdexcept>
#include <string>

namespace goalgen {

// Base for everything thrown by the library. CLI maps categories to exit
// codes: UsageError -> 2, DataError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : Error {
  using Error::Error;
};

// I/O and format problems (bad magic, truncation, malformed JSON, missing files).
struct DataError : Error {
  using Error::Error;
};

// Numeric / geometric failures during computation.
struct NumericError : Error {
  using Error::Error;
};

struct DegenerateInput : NumericError {
  using NumericError::NumericError;
};
struct SizeMismatch : UsageError {
  using UsageError::UsageError;
};
struct SizeError : UsageError {
  using UsageError::UsageError;
};
struct ShapeMismatch : UsageError {
  using UsageError::UsageError;
};
struct WidthMismatch : UsageError {
  using UsageError::UsageError;
};
struct RangeError : UsageError {
  using UsageError::UsageError;
};
struct IndexError : UsageError {
  using UsageError::UsageError;
};
struct StepError : UsageError {
  using UsageError::UsageError;
};

struct NoContacts : NumericError {
  using NumericError::NumericError;
};
struct NonConvergence : NumericError {
  using NumericError::NumericError;
};
struct NoFreePose : NumericError {
  using NumericError::NumericError;
};
struct SamplingExhausted : NumericError {
  using NumericError::NumericError;
};
struct NoMatchingLink : NumericError {
  using NumericError::NumericError;
};
struct ZeroDisplacement : NumericError {
  using NumericError::NumericError;
};
struct NoFeasibleSplit : NumericError {
  using NumericError::NumericError;
};
struct NonFiniteLoss : NumericError {
  using NumericError::NumericError;
};

}  // namespace goalgen
