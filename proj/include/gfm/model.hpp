#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gfm/core.hpp"

namespace gfm {

// Planted parameters: M* = U* diag(lambda*) U*^T + U_perp diag(residual) U_perp^T.
template <typename Scalar = double>
struct GroundTruth {
  Vector<Scalar> w_star;
  Matrix<Scalar> u_star;       // d x k, orthonormal columns
  Vector<Scalar> lambda_star;  // signed, |lambda_1| >= ... >= |lambda_k| > 0
  std::optional<Vector<Scalar>> residual_spectrum;  // length d - k
  std::optional<Matrix<Scalar>> u_perp;              // d x (d - k), present with residual
  Scalar noise_proxy = 0;

  Index dim() const { return u_star.rows(); }
  Index rank() const { return u_star.cols(); }

  Scalar sigma(Index i) const { return std::abs(lambda_star[i]); }
  Scalar sigma_max() const { return rank() > 0 ? sigma(0) : Scalar(0); }
  Scalar sigma_min() const { return rank() > 0 ? sigma(rank() - 1) : Scalar(0); }

  // ||M_perp*||_2, zero when there is no residual spectrum.
  Scalar residual_norm() const {
    if (!residual_spectrum || residual_spectrum->size() == 0) return Scalar(0);
    return residual_spectrum->cwiseAbs().maxCoeff();
  }

  // ||w*||_2 + ||M*||_2 for the exact-rank part.
  Scalar error_scale() const { return w_star.norm() + sigma_max(); }
};

// Solver state. M = (U V^T + V U^T) / 2 is never formed.
template <typename Scalar = double>
struct GfmModel {
  Vector<Scalar> w;
  Matrix<Scalar> u;  // d x k, orthonormal columns
  Matrix<Scalar> v;  // d x k

  static GfmModel zero(Index d, Index k) {
    return {Vector<Scalar>::Zero(d), Matrix<Scalar>::Zero(d, k), Matrix<Scalar>::Zero(d, k)};
  }

  Index dim() const { return w.size(); }
  Index rank() const { return u.cols(); }

  void check_shape() const {
    detail::expect_dim("model.u rows (d)", w.size(), u.rows());
    detail::expect_dim("model.v rows (d)", w.size(), v.rows());
    detail::expect_dim("model.v cols (k)", u.cols(), v.cols());
  }

  // max |U^T U - I_k|
  Scalar orthonormality_error() const {
    const Matrix<Scalar> gram = u.transpose() * u;
    return (gram - Matrix<Scalar>::Identity(rank(), rank())).cwiseAbs().maxCoeff();
  }
};

// One mini-batch. Columns of x are instances.
template <typename Scalar = double>
struct Batch {
  Matrix<Scalar> x;  // d x n
  Vector<Scalar> y;  // n

  Index dim() const { return x.rows(); }
  Index size() const { return x.cols(); }

  void check_shape() const {
    detail::expect_dim("batch.y length (n)", x.cols(), y.size());
    if (x.cols() < 1) throw InvalidArgument("batch must contain at least one instance");
  }
};

struct SolverConfig {
  Index d = 0;
  Index k = 0;
  Index n = 0;
  Index t_max = 0;
  std::uint64_t seed = 0;
  Index init_oversampling = 8;
  Index init_power_iters = 6;
  double spectral_tol = 1e-10;
  Index spectral_max_iters = 300;
  // Relative recovery error, against ||w*|| + sigma_1*, below which a run with
  // known ground truth is reported as converged.
  double converge_rel_tol = 1e-6;

  void validate() const {
    if (d <= 0 || k <= 0 || n <= 0 || t_max < 0)
      throw InvalidArgument("d, k and n must be positive and t_max non-negative");
    if (k >= d) throw InvalidArgument("rank k must be smaller than dimension d");
    if (n < k) throw InvalidArgument("mini-batch size n must be at least k");
    if (init_oversampling <= 0 || init_power_iters <= 0 || spectral_max_iters <= 0)
      throw InvalidArgument("spectral iteration counts must be positive");
    if (!(spectral_tol > 0)) throw InvalidArgument("spectral_tol must be positive");
  }
};

struct TraceRecord {
  Index t = 0;
  double beta = 0;     // ||w* - w||
  double gamma = 0;    // ||M_k* - M||_2
  double epsilon = 0;  // beta + gamma
  double alpha = 0;    // tan of largest canonical angle to U*
  double h2 = 0;
  double step_millis = 0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  const TraceRecord& back() const { return records.back(); }
};

template <typename Scalar, typename Derived>
Scalar predict(const GfmModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  model.check_shape();
  detail::expect_dim("x length (d)", model.dim(), x.size());
  const Vector<Scalar> ux = model.u.transpose() * x;
  const Vector<Scalar> vx = model.v.transpose() * x;
  return x.dot(model.w) + ux.dot(vx);
}

// Dense (U V^T + V U^T) / 2. Test oracle only.
template <typename Scalar>
Matrix<Scalar> densify(const GfmModel<Scalar>& model, Index cap = kDefaultOracleCap) {
  model.check_shape();
  detail::expect_within_cap(model.dim(), cap);
  const Matrix<Scalar> uv = model.u * model.v.transpose();
  Matrix<Scalar> out = uv + uv.transpose();
  out *= Scalar(0.5);
  // a + b and b + a round identically, but be explicit about exact symmetry.
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = j + 1; i < out.rows(); ++i) out(j, i) = out(i, j);
  return out;
}

template <typename Scalar>
Matrix<Scalar> densify_truth(const GroundTruth<Scalar>& gt, Index cap = kDefaultOracleCap) {
  detail::expect_within_cap(gt.dim(), cap);
  Matrix<Scalar> out = gt.u_star * gt.lambda_star.asDiagonal() * gt.u_star.transpose();
  if (gt.residual_spectrum && gt.u_perp)
    out += *gt.u_perp * gt.residual_spectrum->asDiagonal() * gt.u_perp->transpose();
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = j + 1; i < out.rows(); ++i) out(j, i) = out(i, j);
  return out;
}

using GroundTruthd = GroundTruth<double>;
using GfmModeld = GfmModel<double>;
using Batchd = Batch<double>;

}  // namespace gfm
