#pragma once

#include "mulch/search_space.hpp"

#include <cstdint>
#include <functional>

namespace mulch {

struct EvalOutcome {
  double metric = 0.0;
  double wall_time = 0.0;
  bool failed = false;
};

// (configuration, fidelity r, evaluation seed) -> outcome; implementations
// must be deterministic in their arguments
using Objective =
    std::function<EvalOutcome(const Configuration&, double, std::uint64_t)>;

} // namespace mulch
