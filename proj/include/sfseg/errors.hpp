#pragma once

#include <stdexcept>
#include <string>

namespace sfseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid operator hyperparameters (kernel size, stride, factor, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Object used in a state that does not allow the call.
class StateError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error("config error in '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Malformed labels or datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

class EmptySketchError : public Error {
 public:
  using Error::Error;
};

class UnmappedLabelError : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

// P/C metrics on a truth map without any stroke pixel.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfseg
