#pragma once

#include <stdexcept>
#include <string>

namespace dyadic {

/// Bad input: wrong dimensions, non-positive ratios, out-of-range parameters.
/// The CLI maps this to exit status 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation that theory says cannot fail did fail (Cholesky breakdown,
/// singular mixed system, inconsistent inlet pressure). Exit status 2.
class NumericalDegeneracyError : public std::runtime_error {
 public:
  explicit NumericalDegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dyadic
