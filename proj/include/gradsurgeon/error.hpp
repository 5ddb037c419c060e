#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gradsurgeon {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, std::size_t lhs, std::size_t rhs)
      : Error(what + ": dimension mismatch (" + std::to_string(lhs) + " vs " +
              std::to_string(rhs) + ")"),
        lhs_(lhs),
        rhs_(rhs) {}

  std::size_t lhs() const noexcept { return lhs_; }
  std::size_t rhs() const noexcept { return rhs_; }

 private:
  std::size_t lhs_;
  std::size_t rhs_;
};

/// Bad input: malformed files, out-of-range config values, degenerate data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient went non-finite during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require_same_dim(const char* what, std::size_t lhs, std::size_t rhs) {
  if (lhs != rhs) throw DimensionError(what, lhs, rhs);
}

}  // namespace gradsurgeon
