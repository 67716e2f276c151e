#pragma once

#include <stdexcept>
#include <string>

namespace rot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs does not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Overflow or non-finite values met during a computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative scaling did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Training loss blew past the divergence threshold.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// File access or parse failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rot
