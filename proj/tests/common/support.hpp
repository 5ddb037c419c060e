#pragma once

// Helpers shared by the unit tests. Nothing in here calls library code that
// a test is meant to check against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gradsurgeon/numerics.hpp"

namespace testing {

inline gradsurgeon::Vec64 random_vec(gradsurgeon::Rng& rng, std::size_t d, double scale = 1.0) {
  std::vector<double> v(d);
  for (auto& x : v) x = scale * rng.normal();
  return gradsurgeon::Vec64(std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double plain_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double plain_norm(std::span<const double> a) { return std::sqrt(plain_dot(a, a)); }

}  // namespace testing
