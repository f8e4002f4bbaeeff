#include "mulch/sobol.hpp"

#include "mulch/errors.hpp"
#include "mulch/rng.hpp"

#include <bit>

namespace mulch {

namespace {

struct DirectionSpec {
  unsigned degree;
  std::uint32_t poly; // interior coefficient bits, Joe-Kuo encoding
  std::uint32_t m[7]; // initial direction numbers, m[k] odd and < 2^(k+1)
};

// Primitive polynomials and initial direction numbers for dimensions 2..21
// (dimension 1 is the van der Corput sequence in base 2).
constexpr DirectionSpec kSpecs[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
};

constexpr unsigned kBits = 32;

} // namespace

SobolSequence::SobolSequence(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension) {
  if (dimension == 0) throw ValidationError("sobol: dimension must be >= 1");
  if (dimension > kMaxDimension) {
    throw ValidationError("sobol: dimension " + std::to_string(dimension) +
                          " exceeds supported maximum " +
                          std::to_string(kMaxDimension));
  }

  direction_.assign(dimension_, std::vector<std::uint32_t>(kBits));
  // dimension 1: v_k = 2^(32-k)
  for (unsigned k = 0; k < kBits; ++k) direction_[0][k] = 1u << (kBits - 1 - k);

  for (std::size_t d = 1; d < dimension_; ++d) {
    const DirectionSpec& spec = kSpecs[d - 1];
    const unsigned s = spec.degree;
    auto& v = direction_[d];
    for (unsigned k = 0; k < s && k < kBits; ++k) {
      v[k] = spec.m[k] << (kBits - 1 - k);
    }
    for (unsigned k = s; k < kBits; ++k) {
      std::uint32_t value = v[k - s] ^ (v[k - s] >> s);
      for (unsigned j = 1; j < s; ++j) {
        if ((spec.poly >> (s - 1 - j)) & 1u) value ^= v[k - j];
      }
      v[k] = value;
    }
  }

  state_.assign(dimension_, 0);
  shift_.resize(dimension_);
  Rng rng(mix_seed(seed ^ 0x536f626f6cULL));
  for (auto& s : shift_) s = static_cast<std::uint32_t>(rng.next_u64() >> 32);
}

std::vector<double> SobolSequence::next() {
  std::vector<double> point(dimension_);
  next_into(point.data());
  return point;
}

void SobolSequence::next_into(double* out) {
  if (index_ > 0) {
    const unsigned bit =
        static_cast<unsigned>(std::countr_zero(index_)); // Gray-code step
    for (std::size_t d = 0; d < dimension_; ++d) state_[d] ^= direction_[d][bit];
  }
  ++index_;
  for (std::size_t d = 0; d < dimension_; ++d) {
    const std::uint32_t scrambled = state_[d] ^ shift_[d];
    out[d] = (static_cast<double>(scrambled) + 0.5) * 0x1.0p-32;
  }
}

} // namespace mulch
