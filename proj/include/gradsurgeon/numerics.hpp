#pragma once

// Dense vector/matrix primitives, stable scalar functions and seeded
// randomness. All reductions accumulate left to right so repeated calls are
// bit-identical.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace gradsurgeon {

/// Dense real vector. A default-constructed Vec64 is empty and means "unset";
/// every other constructor requires finite entries.
class Vec64 {
 public:
  Vec64() = default;
  explicit Vec64(std::size_t dim, double fill = 0.0);
  explicit Vec64(std::vector<double> values);
  Vec64(std::initializer_list<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  friend bool operator==(const Vec64&, const Vec64&) = default;

 private:
  std::vector<double> values_;
};

/// Row-major dense matrix.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Mat64 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Counter-based generator. Draw i of a stream is
/// splitmix64_mix(seed + (i + 1) * 0x9E3779B97F4A7C15), so a (seed, counter)
/// pair fully determines the next value on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() noexcept;

  /// Independent child stream for a named purpose.
  Rng derive(std::uint64_t stream_id) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;
/// Seed of child stream `stream_id` of `parent_seed`.
std::uint64_t derive_seed(std::uint64_t parent_seed, std::uint64_t stream_id) noexcept;

double dot(const Vec64& a, const Vec64& b);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(const Vec64& a) noexcept;

double stable_sigmoid(double z) noexcept;
/// log(1 + e^z) as max(z, 0) + log1p(e^{-|z|}).
double softplus(double z) noexcept;

Vec64 gaussian_vec(Rng& rng, std::size_t dim, double mean, double stddev);

// Small helpers used throughout. All check dimensions.
Vec64 add(const Vec64& a, const Vec64& b);
Vec64 sub(const Vec64& a, const Vec64& b);
Vec64 scaled(const Vec64& a, double c);
/// y += c * x
void axpy(double c, const Vec64& x, Vec64& y);
/// m * v
Vec64 matvec(const Mat64& m, const Vec64& v);
/// m^T * v
Vec64 matvec_transposed(const Mat64& m, const Vec64& v);
/// m += c * u v^T
void add_outer(Mat64& m, double c, const Vec64& u, const Vec64& v);

}  // namespace gradsurgeon
