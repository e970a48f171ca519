#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace anm::nn {

/// Unscrambled Sobol sequence in up to 32 dimensions, Gray-code order,
/// starting from the origin. Joe-Kuo direction numbers.
class SobolSampler {
 public:
  static constexpr int max_dimension = 32;

  explicit SobolSampler(int dimension);

  int dimension() const { return dim_; }
  std::uint64_t index() const { return index_; }

  std::vector<double> next();
  /// Jumps so that the next call to next() returns point number `n`.
  SobolSampler& skip(std::uint64_t n);

 private:
  int dim_;
  std::uint64_t index_ = 0;
  std::vector<std::uint32_t> x_;
  std::vector<std::vector<std::uint32_t>> v_;  // [dim][bit]
};

/// Affine map of a unit-cube point onto per-dimension [lo, hi] ranges.
std::vector<double> scale_to(const std::vector<double>& unit, const std::vector<std::pair<double, double>>& ranges);

}  // namespace anm::nn
