#pragma once

#include <stdexcept>
#include <string>

namespace slotgram {

// Data-level failures (malformed files, schema violations, bad I/O).
// The CLI maps these to exit code 2; usage errors exit with 1.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : DataError {
  using DataError::DataError;
};

struct SchemaError : DataError {
  using DataError::DataError;
};

struct IoError : DataError {
  using DataError::DataError;
};

}  // namespace slotgram
