#pragma once

#include <stdexcept>
#include <string>

namespace mulch {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// precondition or domain violations (bad bounds, out-of-range values, ...)
class ValidationError : public Error {
public:
  using Error::Error;
};

// numerical failures (non-SPD covariance, MLE that never converged, ...)
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace mulch
