#pragma once

#include <stdexcept>
#include <string>

namespace absope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: shape mismatch, out-of-range parameter, invalid file.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A ratio needs a positive denominator where the numerator is positive.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver ran out of iterations.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The behavior chain has no unique stationary distribution, or a quantity
/// conditions on a state of zero stationary mass.
class ChainStructureError : public Error {
 public:
  using Error::Error;
};

}  // namespace absope
