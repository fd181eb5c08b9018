#pragma once

#include <stdexcept>
#include <string>

namespace holefill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: mismatched dimensions, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Inconsistent training/sampling configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public IoError {
 public:
  using IoError::IoError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CancelledError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

// Job store or queue cannot take more work.
class CapacityError : public Error {
 public:
  using Error::Error;
};

}  // namespace holefill
