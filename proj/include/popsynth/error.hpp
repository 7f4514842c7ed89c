#pragma once

#include <stdexcept>
#include <string>

namespace popsynth {

/// Broad failure class; the CLI maps each one to a process exit code.
enum class ErrorKind { config, data, divergence, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::divergence, what) {}
};

// Data-side specializations. Tests catch these by type.
struct OutOfRangeError : DataError {
  using DataError::DataError;
};
struct DegenerateColumnError : DataError {
  using DataError::DataError;
};
struct UnknownCategoryError : DataError {
  using DataError::DataError;
};
struct SchemaMismatchError : DataError {
  using DataError::DataError;
};
struct InsufficientDataError : DataError {
  using DataError::DataError;
};
struct NumericInputError : DataError {
  using DataError::DataError;
};
struct IncomparableDistributionsError : DataError {
  using DataError::DataError;
};
struct UnreachableContextError : DataError {
  using DataError::DataError;
};

struct ExactSearchLimitError : ConfigError {
  using ConfigError::ConfigError;
};

struct StaleCacheError : Error {
  explicit StaleCacheError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config:
      return 2;
    case ErrorKind::data:
      return 3;
    case ErrorKind::divergence:
      return 4;
    case ErrorKind::internal:
      break;
  }
  return 1;
}

}  // namespace popsynth
