#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scp {

/// Base of every error the toolkit throws. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value (out-of-range timestep, bad beta range, k > n, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Data violates a domain invariant (non-finite token, class id out of range, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A mask references a class for which the prior bank holds no statistics.
class UnknownClassError : public Error {
 public:
  explicit UnknownClassError(int class_id)
      : Error("class " + std::to_string(class_id) + " is absent from the prior bank"),
        class_id_(class_id) {}
  int class_id() const noexcept { return class_id_; }

 private:
  int class_id_;
};

/// Training produced a non-finite loss or parameter.
class TrainingError : public NumericalError {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : NumericalError("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace scp
