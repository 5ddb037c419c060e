#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance checks. Scalar loops only; the library is used for data types.

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "gradsurgeon/encoders.hpp"
#include "gradsurgeon/numerics.hpp"

namespace testing {

using namespace gradsurgeon;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Solves A y = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * y[c];
    y[i] = s / a[i][i];
  }
  return y;
}

// argmin 0.5 |x - g|^2 subject to <x, h> = 0, by eliminating the coordinate
// where h is largest and solving the normal equations of the free ones.
inline std::vector<double> constrained_ls(const Vec64& g, const Vec64& h) {
  const std::size_t d = g.dim();
  std::size_t k = 0;
  for (std::size_t i = 1; i < d; ++i)
    if (std::abs(h[i]) > std::abs(h[k])) k = i;
  // x = M y, M is d x (d-1).
  std::vector<std::vector<double>> m(d, std::vector<double>(d - 1, 0.0));
  std::size_t col = 0;
  for (std::size_t i = 0; i < d; ++i) {
    if (i == k) continue;
    m[i][col] = 1.0;
    m[k][col] = -h[i] / h[k];
    ++col;
  }
  std::vector<std::vector<double>> mtm(d - 1, std::vector<double>(d - 1, 0.0));
  std::vector<double> mtg(d - 1, 0.0);
  for (std::size_t a = 0; a < d - 1; ++a) {
    for (std::size_t b = 0; b < d - 1; ++b)
      for (std::size_t i = 0; i < d; ++i) mtm[a][b] += m[i][a] * m[i][b];
    for (std::size_t i = 0; i < d; ++i) mtg[a] += m[i][a] * g[i];
  }
  const auto y = solve_dense(mtm, mtg);
  std::vector<double> x(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t a = 0; a < d - 1; ++a) x[i] += m[i][a] * y[a];
  return x;
}

// Straight backprop of the image loss alone through head and adapter,
// written with scalar loops. Returns mean (grad_A, grad_B).
inline std::pair<std::vector<double>, std::vector<double>> backprop_image_loss(
    const DetectorModel& m, const std::vector<FeatureRecord>& batch,
    const std::vector<std::optional<DropoutMask>>& masks) {
  const auto& ad = m.student.adapter;
  const std::size_t d = ad.b.rows(), r = ad.rank;
  const double s = ad.alpha / static_cast<double>(r);
  std::vector<double> ga(r * d, 0.0), gb(d * r, 0.0);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Vec64 base = m.student.base.forward(batch[n].x);
    std::vector<double> hdrop(d);
    for (std::size_t j = 0; j < d; ++j) hdrop[j] = base[j] * (masks[n] ? masks[n]->multipliers[j] : 1.0);
    std::vector<double> p(r, 0.0);
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t j = 0; j < d; ++j) p[k] += ad.a(k, j) * hdrop[j];
    std::vector<double> f(d);
    for (std::size_t i = 0; i < d; ++i) {
      f[i] = base[i];
      for (std::size_t k = 0; k < r; ++k) f[i] += s * ad.b(i, k) * p[k];
    }
    double z = m.head_img.b;
    for (std::size_t i = 0; i < d; ++i) z += m.head_img.w[i] * f[i];
    const double dz = sigmoid(z) - batch[n].label;
    std::vector<double> df(d), dp(r, 0.0);
    for (std::size_t i = 0; i < d; ++i) df[i] = dz * m.head_img.w[i];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < r; ++k) {
        gb[i * r + k] += s * df[i] * p[k];
        dp[k] += s * df[i] * ad.b(i, k);
      }
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t j = 0; j < d; ++j) ga[k * d + j] += dp[k] * hdrop[j];
  }
  for (auto& v : ga) v /= static_cast<double>(batch.size());
  for (auto& v : gb) v /= static_cast<double>(batch.size());
  return {ga, gb};
}

}  // namespace testing
