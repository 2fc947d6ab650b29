#pragma once

// Shared helpers for the test suites.

#include <cmath>
#include <vector>

#include "crl/prng.hpp"
#include "crl/tensor.hpp"

namespace crl::testutil {

inline Tensor random_tensor(PrngStream& s, const Shape& shape, double lo = -2.0,
                            double hi = 2.0) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = lo + (hi - lo) * draw_uniform01(s);
  return Tensor(shape, std::move(v));
}

// Random values bounded away from zero, for kink-sensitive ops.
inline Tensor random_tensor_away_from(PrngStream& s, const Shape& shape, double gap,
                                      double hi = 2.0) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) {
    const double mag = gap + (hi - gap) * draw_uniform01(s);
    x = draw_uniform01(s) < 0.5 ? -mag : mag;
  }
  return Tensor(shape, std::move(v));
}

inline bool all_close(const Tensor& a, const Tensor& b, double tol) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace crl::testutil
