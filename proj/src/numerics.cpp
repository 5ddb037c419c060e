#include "gradsurgeon/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

bool finite_range(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

Vec64::Vec64(std::size_t dim, double fill) : values_(dim, fill) {
  if (dim == 0) throw ValidationError("Vec64: dimension must be positive");
  if (!std::isfinite(fill)) throw ValidationError("Vec64: non-finite fill value");
}

Vec64::Vec64(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("Vec64: dimension must be positive");
  if (!all_finite()) throw ValidationError("Vec64: non-finite entry");
}

Vec64::Vec64(std::initializer_list<double> values) : Vec64(std::vector<double>(values)) {}

bool Vec64::all_finite() const noexcept { return finite_range(values_); }

Mat64::Mat64(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ValidationError("Mat64: shape must be positive");
  if (!std::isfinite(fill)) throw ValidationError("Mat64: non-finite fill value");
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows == 0 || cols == 0) throw ValidationError("Mat64: shape must be positive");
  require_same_dim("Mat64 values", values_.size(), rows * cols);
  if (!all_finite()) throw ValidationError("Mat64: non-finite entry");
}

Mat64 Mat64::identity(std::size_t n) {
  Mat64 m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Mat64::all_finite() const noexcept { return finite_range(values_); }

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent_seed, std::uint64_t stream_id) noexcept {
  return splitmix64_mix(parent_seed ^ splitmix64_mix(stream_id + kGolden));
}

std::uint64_t Rng::next_u64() noexcept {
  ++counter_;
  return splitmix64_mix(seed_ + counter_ * kGolden);
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) noexcept {
  __extension__ using u128 = unsigned __int128;
  const auto wide = static_cast<u128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double Rng::normal() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::derive(std::uint64_t stream_id) const noexcept {
  return Rng(derive_seed(seed_, stream_id));
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim("dot", a.size(), b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double dot(const Vec64& a, const Vec64& b) { return dot(a.span(), b.span()); }

double l2_norm(const Vec64& a) noexcept {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return std::sqrt(acc);
}

double stable_sigmoid(double z) noexcept {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Vec64 gaussian_vec(Rng& rng, std::size_t dim, double mean, double stddev) {
  if (dim == 0) throw ValidationError("gaussian_vec: dim must be >= 1");
  if (!(stddev >= 0.0)) throw ValidationError("gaussian_vec: stddev must be >= 0");
  std::vector<double> out(dim);
  for (auto& v : out) v = mean + stddev * rng.normal();
  return Vec64(std::move(out));
}

Vec64 add(const Vec64& a, const Vec64& b) {
  require_same_dim("add", a.dim(), b.dim());
  Vec64 out = a;
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] += b[i];
  return out;
}

Vec64 sub(const Vec64& a, const Vec64& b) {
  require_same_dim("sub", a.dim(), b.dim());
  Vec64 out = a;
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] -= b[i];
  return out;
}

Vec64 scaled(const Vec64& a, double c) {
  Vec64 out = a;
  for (auto& x : out) x *= c;
  return out;
}

void axpy(double c, const Vec64& x, Vec64& y) {
  require_same_dim("axpy", x.dim(), y.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) y[i] += c * x[i];
}

Vec64 matvec(const Mat64& m, const Vec64& v) {
  require_same_dim("matvec", m.cols(), v.dim());
  Vec64 out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * v[c];
    out[r] = acc;
  }
  return out;
}

Vec64 matvec_transposed(const Mat64& m, const Vec64& v) {
  require_same_dim("matvec_transposed", m.rows(), v.dim());
  Vec64 out(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) acc += m(r, c) * v[r];
    out[c] = acc;
  }
  return out;
}

void add_outer(Mat64& m, double c, const Vec64& u, const Vec64& v) {
  require_same_dim("add_outer rows", m.rows(), u.dim());
  require_same_dim("add_outer cols", m.cols(), v.dim());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double cu = c * u[r];
    for (std::size_t k = 0; k < m.cols(); ++k) m(r, k) += cu * v[k];
  }
}

}  // namespace gradsurgeon
