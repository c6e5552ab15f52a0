#pragma once

#include <stdexcept>
#include <string>

namespace netspai {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or block-size vectors do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (bad parameter, malformed file).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The numerical problem is ill-posed for the requested method
/// (indefinite Gramian, rank deficiency, unstable model).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace netspai
