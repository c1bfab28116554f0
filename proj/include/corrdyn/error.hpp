#pragma once

#include <stdexcept>
#include <string>

namespace corrdyn {

/// Broad failure category; the CLI maps each one to an exit code.
enum class ErrorKind {
  kConfig,     // bad parameters or config file
  kData,       // malformed, missing or insufficient input data
  kNumerical,  // divergence, non-convergence, undefined statistic
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Parse failure in an input file. Line numbers are 1-based.
class FormatError : public DataError {
 public:
  FormatError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InsufficientDataError : public DataError {
 public:
  explicit InsufficientDataError(const std::string& what) : DataError("insufficient data: " + what) {}
};

class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& what) : DataError("dimension mismatch: " + what) {}
};

class ValidationError : public DataError {
 public:
  explicit ValidationError(const std::string& what) : DataError("validation failed: " + what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

/// Exit code used by the CLI for a given error category.
int exit_code(ErrorKind kind) noexcept;

}  // namespace corrdyn
