#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "gfm/model.hpp"
#include "gfm/rng.hpp"
#include "gfm/spectral.hpp"

namespace gfm {

enum class SignPattern { all_positive, alternating, random };

struct ResidualSpec {
  double magnitude = 0;  // |largest residual eigenvalue|
  double decay = 1;      // geometric ratio between consecutive residual eigenvalues
};

struct SpectrumSpec {
  enum class Kind { explicit_values, condition };

  Kind kind = Kind::explicit_values;
  std::vector<double> values;  // explicit
  Index k = 0;                 // condition
  double kappa = 1;            // condition: sigma_1 / sigma_k
  SignPattern signs = SignPattern::random;
  std::optional<ResidualSpec> residual;

  static SpectrumSpec explicit_values(std::vector<double> v) {
    SpectrumSpec s;
    s.kind = Kind::explicit_values;
    s.values = std::move(v);
    return s;
  }

  // Magnitudes kappa^{-i/(k-1)}, i = 0..k-1: the top eigenvalue has magnitude one.
  static SpectrumSpec condition(Index k, double kappa, SignPattern signs = SignPattern::random) {
    SpectrumSpec s;
    s.kind = Kind::condition;
    s.k = k;
    s.kappa = kappa;
    s.signs = signs;
    return s;
  }

  SpectrumSpec with_residual(double magnitude, double decay) const {
    SpectrumSpec s = *this;
    s.residual = ResidualSpec{magnitude, decay};
    return s;
  }
};

namespace detail {

enum RngStream : std::uint64_t { basis = 1, first_order = 2, sign = 3, complement = 4 };

template <typename Scalar>
Vector<Scalar> sorted_spectrum(std::vector<double> values) {
  std::stable_sort(values.begin(), values.end(), [](double a, double b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    return a > b;
  });
  Vector<Scalar> out(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out[static_cast<Index>(i)] = Scalar(values[i]);
  return out;
}

}  // namespace detail

template <typename Scalar = double>
GroundTruth<Scalar> sample_ground_truth(Index d, Index k, const SpectrumSpec& spectrum,
                                        double w_norm, double noise_proxy, std::uint64_t seed) {
  if (k <= 0 || k >= d) throw InvalidArgument("sample_ground_truth: need 0 < k < d");
  if (!(w_norm >= 0) || !std::isfinite(w_norm)) throw InvalidArgument("w_norm must be >= 0");
  if (!(noise_proxy >= 0) || !std::isfinite(noise_proxy))
    throw InvalidArgument("noise_proxy must be >= 0");

  std::vector<double> lambda;
  if (spectrum.kind == SpectrumSpec::Kind::explicit_values) {
    if (static_cast<Index>(spectrum.values.size()) != k)
      throw InvalidArgument("explicit spectrum has " + std::to_string(spectrum.values.size()) +
                            " entries but k = " + std::to_string(k));
    for (double v : spectrum.values)
      if (v == 0 || !std::isfinite(v))
        throw InvalidArgument("explicit spectrum entries must be finite and nonzero");
    lambda = spectrum.values;
  } else {
    if (spectrum.k != k)
      throw InvalidArgument("condition spectrum requested for k = " + std::to_string(spectrum.k) +
                            " but k = " + std::to_string(k));
    if (!(spectrum.kappa >= 1) || !std::isfinite(spectrum.kappa))
      throw InvalidArgument("condition number must be finite and >= 1");
    CounterRng sign_rng(seed, detail::sign);
    for (Index i = 0; i < k; ++i) {
      const double mag = k == 1 ? 1.0
                                : std::pow(spectrum.kappa, -static_cast<double>(i) /
                                                               static_cast<double>(k - 1));
      double sign = 1.0;
      switch (spectrum.signs) {
        case SignPattern::all_positive: break;
        case SignPattern::alternating: sign = (i % 2 == 0) ? 1.0 : -1.0; break;
        case SignPattern::random: sign = (sign_rng.next_u64() >> 63) ? -1.0 : 1.0; break;
      }
      lambda.push_back(sign * mag);
    }
  }

  GroundTruth<Scalar> gt;
  gt.lambda_star = detail::sorted_spectrum<Scalar>(lambda);
  gt.noise_proxy = Scalar(noise_proxy);

  CounterRng basis_rng(seed, detail::basis);
  gt.u_star = qr_orthonormalize(gaussian_matrix<Scalar>(d, k, basis_rng));

  CounterRng w_rng(seed, detail::first_order);
  gt.w_star = Vector<Scalar>::Zero(d);
  if (w_norm > 0) {
    Vector<Scalar> g = gaussian_vector<Scalar>(d, w_rng);
    gt.w_star = g * (Scalar(w_norm) / g.norm());
  }

  if (spectrum.residual) {
    const auto& res = *spectrum.residual;
    if (!(res.magnitude >= 0) || !(res.decay > 0 && res.decay <= 1))
      throw InvalidArgument("residual spectrum needs magnitude >= 0 and decay in (0, 1]");
    if (!(res.magnitude < static_cast<double>(gt.sigma_min())))
      throw InvalidArgument("residual magnitude must be below the smallest |lambda_k|");
    Vector<Scalar> residual(d - k);
    double value = res.magnitude;
    for (Index j = 0; j < d - k; ++j, value *= res.decay) residual[j] = Scalar(value);
    CounterRng comp_rng(seed, detail::complement);
    Matrix<Scalar> g = gaussian_matrix<Scalar>(d, d - k, comp_rng);
    for (int pass = 0; pass < 2; ++pass) g -= gt.u_star * (gt.u_star.transpose() * g);
    gt.u_perp = qr_orthonormalize(g);
    gt.residual_spectrum = std::move(residual);
  }
  return gt;
}

// y_i = x_i^T w* + x_i^T M* x_i + xi_i, with the quadratic form evaluated
// through the factors of M*.
template <typename Scalar>
Batch<Scalar> sample_batch(const GroundTruth<Scalar>& gt, Index n, CounterRng& rng) {
  if (n < 1) throw InvalidArgument("sample_batch: n must be >= 1");
  const Index d = gt.dim();
  Batch<Scalar> batch;
  batch.x = gaussian_matrix<Scalar>(d, n, rng);
  batch.y.resize(n);
  for (Index c0 = 0; c0 < n; c0 += kInstanceChunk) {
    const Index len = std::min(kInstanceChunk, n - c0);
    const auto xs = batch.x.middleCols(c0, len);
    const Matrix<Scalar> proj = gt.u_star.transpose() * xs;  // k x len
    auto ys = batch.y.segment(c0, len);
    ys.noalias() = xs.transpose() * gt.w_star;
    ys += (proj.array().square().matrix().transpose() * gt.lambda_star);
    if (gt.residual_spectrum && gt.u_perp) {
      const Matrix<Scalar> perp = gt.u_perp->transpose() * xs;
      ys += perp.array().square().matrix().transpose() * (*gt.residual_spectrum);
    }
  }
  if (gt.noise_proxy > Scalar(0))
    for (Index i = 0; i < n; ++i) batch.y[i] += gt.noise_proxy * Scalar(rng.normal());
  return batch;
}

// A stream of mini-batches. Implementations must never serve an instance twice.
template <typename Scalar = double>
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Batch<Scalar> next_batch() = 0;
  virtual Index dim() const = 0;
  virtual Index batch_size() const = 0;
  virtual Index batches_served() const = 0;
};

// Synthetic unbounded source. Batch t is a pure function of (seed, t).
template <typename Scalar = double>
class SyntheticStream final : public BatchSource<Scalar> {
 public:
  SyntheticStream(GroundTruth<Scalar> gt, Index n, std::uint64_t seed)
      : gt_(std::move(gt)), n_(n), seed_(seed) {
    if (n < 1) throw InvalidArgument("stream batch size must be >= 1");
  }

  Batch<Scalar> next_batch() override { return batch_at(next_++); }

  Batch<Scalar> batch_at(Index t) const {
    CounterRng rng(seed_, static_cast<std::uint64_t>(t));
    return sample_batch(gt_, n_, rng);
  }

  // Position the stream so that the next batch served is batch t.
  void seek(Index t) { next_ = t; }

  Index dim() const override { return gt_.dim(); }
  Index batch_size() const override { return n_; }
  Index batches_served() const override { return next_; }
  const GroundTruth<Scalar>& truth() const { return gt_; }
  std::uint64_t seed() const { return seed_; }

 private:
  GroundTruth<Scalar> gt_;
  Index n_;
  std::uint64_t seed_;
  Index next_ = 0;
};

template <typename Scalar>
SyntheticStream<Scalar> open_stream(const GroundTruth<Scalar>& gt, Index n, std::uint64_t seed) {
  return SyntheticStream<Scalar>(gt, n, seed);
}

}  // namespace gfm
