#pragma once

#include <stdexcept>
#include <string>

namespace mmt {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary container errors. Kept as distinct types so callers can tell a
// wrong file apart from a damaged one.
struct BadMagicError : Error {
  using Error::Error;
};
struct TruncatedFileError : Error {
  using Error::Error;
};
struct DimOverflowError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace mmt
