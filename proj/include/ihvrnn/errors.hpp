#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ihvrnn {

// Base of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. Carries the 1-based line number when one is known.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input whose content violates a data contract.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class VariantMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace ihvrnn
