#include "anm/nn/sobol.hpp"

#include <bit>
#include <stdexcept>

namespace anm::nn {

namespace {

struct JoeKuo {
  int d;
  int s;
  unsigned a;
  std::uint32_t m[8];
};

// new-joe-kuo-6.21201, dimensions 2..32.
constexpr JoeKuo kTable[] = {
    {2, 1, 0, {1}},
    {3, 2, 1, {1, 3}},
    {4, 3, 1, {1, 3, 1}},
    {5, 3, 2, {1, 1, 1}},
    {6, 4, 1, {1, 1, 3, 3}},
    {7, 4, 4, {1, 3, 5, 13}},
    {8, 5, 2, {1, 1, 5, 5, 17}},
    {9, 5, 4, {1, 1, 5, 5, 5}},
    {10, 5, 7, {1, 1, 7, 11, 19}},
    {11, 5, 11, {1, 1, 5, 1, 1}},
    {12, 5, 13, {1, 1, 1, 3, 11}},
    {13, 5, 14, {1, 3, 5, 5, 31}},
    {14, 6, 1, {1, 3, 3, 9, 7, 49}},
    {15, 6, 13, {1, 1, 1, 15, 21, 21}},
    {16, 6, 16, {1, 3, 1, 13, 27, 49}},
    {17, 6, 19, {1, 1, 1, 15, 7, 5}},
    {18, 6, 22, {1, 3, 1, 15, 13, 25}},
    {19, 6, 25, {1, 1, 5, 5, 19, 61}},
    {20, 7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {21, 7, 4, {1, 3, 7, 13, 13, 15, 69}},
    {22, 7, 7, {1, 1, 3, 13, 7, 35, 63}},
    {23, 7, 8, {1, 3, 5, 9, 1, 25, 53}},
    {24, 7, 14, {1, 3, 1, 13, 9, 35, 107}},
    {25, 7, 19, {1, 3, 1, 5, 27, 61, 31}},
    {26, 7, 21, {1, 1, 5, 11, 19, 41, 61}},
    {27, 7, 28, {1, 3, 5, 3, 3, 13, 69}},
    {28, 7, 31, {1, 1, 7, 13, 1, 19, 1}},
    {29, 7, 32, {1, 3, 7, 5, 13, 19, 59}},
    {30, 7, 37, {1, 1, 3, 9, 25, 29, 41}},
    {31, 7, 41, {1, 3, 5, 13, 23, 1, 55}},
    {32, 7, 42, {1, 3, 7, 3, 13, 59, 17}},
};

constexpr int kBits = 32;

}  // namespace

SobolSampler::SobolSampler(int dimension) : dim_(dimension) {
  if (dimension < 1 || dimension > max_dimension)
    throw std::invalid_argument("SobolSampler: dimension must lie in [1, 32]");
  x_.assign(dim_, 0);
  v_.assign(dim_, std::vector<std::uint32_t>(kBits));
  for (int i = 0; i < kBits; ++i) v_[0][i] = 1u << (kBits - 1 - i);
  for (int j = 1; j < dim_; ++j) {
    const auto& row = kTable[j - 1];
    const int s = row.s;
    auto& v = v_[j];
    for (int i = 0; i < s && i < kBits; ++i) v[i] = row.m[i] << (kBits - 1 - i);
    for (int i = s; i < kBits; ++i) {
      v[i] = v[i - s] ^ (v[i - s] >> s);
      for (int k = 1; k < s; ++k)
        if ((row.a >> (s - 1 - k)) & 1u) v[i] ^= v[i - k];
    }
  }
}

std::vector<double> SobolSampler::next() {
  std::vector<double> out(dim_);
  constexpr double scale = 1.0 / 4294967296.0;
  for (int j = 0; j < dim_; ++j) out[j] = x_[j] * scale;
  // Gray-code update for the following point.
  const int c = std::countr_one(index_);
  if (c < kBits)
    for (int j = 0; j < dim_; ++j) x_[j] ^= v_[j][c];
  ++index_;
  return out;
}

SobolSampler& SobolSampler::skip(std::uint64_t n) {
  const std::uint64_t gray = n ^ (n >> 1);
  for (int j = 0; j < dim_; ++j) {
    std::uint32_t x = 0;
    for (int b = 0; b < kBits; ++b)
      if ((gray >> b) & 1u) x ^= v_[j][b];
    x_[j] = x;
  }
  index_ = n;
  return *this;
}

std::vector<double> scale_to(const std::vector<double>& unit, const std::vector<std::pair<double, double>>& ranges) {
  if (unit.size() > ranges.size()) throw std::invalid_argument("scale_to: fewer ranges than dimensions");
  std::vector<double> out(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) out[i] = ranges[i].first + unit[i] * (ranges[i].second - ranges[i].first);
  return out;
}

}  // namespace anm::nn
