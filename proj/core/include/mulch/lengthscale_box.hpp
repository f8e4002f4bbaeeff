#pragma once

#include <vector>

namespace mulch {

// per-dimension lengthscale bounds in log coordinates, metalearned from the
// best GP fits across past tasks and used as the MAP box during fitting
struct LengthscaleBox {
  std::vector<double> log_lower;
  std::vector<double> log_upper;

  std::size_t dimension() const { return log_lower.size(); }
  void validate() const;
};

} // namespace mulch
