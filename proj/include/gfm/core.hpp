#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gfm {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Largest dimension for which dense d x d evaluation is permitted.
inline constexpr Index kDefaultOracleCap = 256;

// Instances processed per block by the matrix-free kernels. Bounds the
// per-call workspace to kInstanceChunk x m regardless of the batch size.
inline constexpr Index kInstanceChunk = 256;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& axis, Index expected, Index actual)
      : Error("dimension mismatch on " + axis + ": expected " + std::to_string(expected) +
              ", got " + std::to_string(actual)),
        axis_(axis), expected_(expected), actual_(actual) {}

  const std::string& axis() const { return axis_; }
  Index expected() const { return expected_; }
  Index actual() const { return actual_; }

 private:
  std::string axis_;
  Index expected_;
  Index actual_;
};

class OracleCapExceeded : public Error {
 public:
  OracleCapExceeded(Index d, Index cap)
      : Error("dense evaluation refused: d = " + std::to_string(d) + " exceeds oracle cap " +
              std::to_string(cap)) {}
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(Index column)
      : Error("matrix is numerically rank deficient at column " + std::to_string(column)),
        column_(column) {}
  Index column() const { return column_; }

 private:
  Index column_;
};

namespace detail {

inline void expect_dim(const char* axis, Index expected, Index actual) {
  if (expected != actual) throw DimensionMismatch(axis, expected, actual);
}

inline void expect_within_cap(Index d, Index cap) {
  if (d > cap) throw OracleCapExceeded(d, cap);
}

}  // namespace detail
}  // namespace gfm
