#pragma once

#include <stdexcept>
#include <string>

namespace nanoflow {

/// Failure categories. The numeric values double as C API status codes and
/// CLI exit codes.
enum class ErrorKind : int {
  Config = 2,     ///< invalid input, precondition or validation failure
  Numerical = 3,  ///< NaN/Inf or non-convergence
  Io = 4,         ///< missing, unreadable, unwritable or malformed file
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Precondition violations (bad ranges, shape mismatches).
inline Error domain_error(const std::string& what) { return Error(ErrorKind::Config, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::Numerical, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::Io, what); }

}  // namespace nanoflow
