#pragma once

#include <cstdint>
#include <vector>

namespace mulch {

// Gray-code Sobol sequence with a per-dimension random digital shift.
// The shift (drawn from the seed) scrambles the net while preserving its
// low-discrepancy structure; a fixed seed reproduces the exact stream.
class SobolSequence {
public:
  static constexpr std::size_t kMaxDimension = 21;

  SobolSequence(std::size_t dimension, std::uint64_t seed);

  std::size_t dimension() const { return dimension_; }

  // next point in (0,1)^d
  std::vector<double> next();

  void next_into(double* out);

private:
  std::size_t dimension_;
  std::uint64_t index_ = 0;
  std::vector<std::uint32_t> state_;                 // per-dim Gray-code accumulator
  std::vector<std::uint32_t> shift_;                 // per-dim digital shift
  std::vector<std::vector<std::uint32_t>> direction_; // [dim][bit]
};

} // namespace mulch
