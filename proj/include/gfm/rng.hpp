#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "gfm/core.hpp"

namespace gfm {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based generator: the i-th output is splitmix64(key + i * golden),
// so any stream is a pure function of (seed, stream id) and two generators
// with different stream ids never share state. Normals are produced by
// Box-Muller so results do not depend on the standard library's
// distribution implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(splitmix64(seed ^ splitmix64(stream ^ 0xD1B54A32D192ED03ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    ++counter_;
    return splitmix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Independent child generator; does not advance this one.
  CounterRng split(std::uint64_t stream) const { return CounterRng(key_, stream); }

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Column-major fill, so the draw order is fixed by the shape alone.
template <typename Scalar>
Matrix<Scalar> gaussian_matrix(Index rows, Index cols, CounterRng& rng) {
  Matrix<Scalar> out(rows, cols);
  Scalar* data = out.data();
  for (Index i = 0; i < rows * cols; ++i) data[i] = static_cast<Scalar>(rng.normal());
  return out;
}

template <typename Scalar>
Vector<Scalar> gaussian_vector(Index size, CounterRng& rng) {
  Vector<Scalar> out(size);
  for (Index i = 0; i < size; ++i) out[i] = static_cast<Scalar>(rng.normal());
  return out;
}

}  // namespace gfm
