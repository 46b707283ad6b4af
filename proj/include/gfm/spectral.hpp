#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "gfm/core.hpp"
#include "gfm/operator.hpp"
#include "gfm/rng.hpp"

namespace gfm {

template <typename Scalar = double>
struct AngleReport {
  Scalar sin_theta = 0;
  Scalar cos_theta = 1;
  Scalar tan_theta = 0;  // +infinity when cos_theta < 1e-12
};

enum class SpectralStatus { ok, small_gap, degenerate };

template <typename Scalar = double>
struct TopKResult {
  Matrix<Scalar> vectors;  // d x k
  Vector<Scalar> values;   // Ritz values, |.| descending
  SpectralStatus status = SpectralStatus::ok;
};

template <typename Scalar = double>
struct NormEstimate {
  Scalar value = 0;
  bool converged = false;
  Index iterations = 0;
};

namespace detail {

template <typename Scalar>
inline constexpr Scalar kCosFloor = Scalar(1e-12);

// Thin Q of a Householder QR. Always orthonormal, whatever the rank of a.
template <typename Scalar>
Matrix<Scalar> orthonormal_basis(const Matrix<Scalar>& a) {
  Eigen::HouseholderQR<Matrix<Scalar>> qr(a);
  return qr.householderQ() * Matrix<Scalar>::Identity(a.rows(), a.cols());
}

// Flip each column so its largest-magnitude entry is positive.
template <typename Scalar>
void canonicalize_signs(Matrix<Scalar>& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    Index pivot = 0;
    m.col(j).cwiseAbs().maxCoeff(&pivot);
    if (m(pivot, j) < Scalar(0)) m.col(j) *= Scalar(-1);
  }
}

// Indices ordered by |value| descending, ties with the positive value first.
template <typename Scalar>
std::vector<Index> magnitude_order(const Vector<Scalar>& values) {
  std::vector<Index> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    const Scalar ma = std::abs(values[a]), mb = std::abs(values[b]);
    if (ma != mb) return ma > mb;
    return values[a] > values[b];
  });
  return idx;
}

template <typename Scalar>
Scalar largest_singular_value(const Matrix<Scalar>& m) {
  if (m.size() == 0) return Scalar(0);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m);
  return svd.singularValues()(0);
}

template <typename Scalar>
void expect_orthonormal(const Matrix<Scalar>& u, const char* what) {
  const Matrix<Scalar> gram = u.transpose() * u;
  const Scalar err = (gram - Matrix<Scalar>::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
  if (!(err <= Scalar(1e-8)))
    throw InvalidArgument(std::string(what) + " is not column-orthonormal (max |G - I| = " +
                          std::to_string(static_cast<double>(err)) + ")");
}

// tan of the largest canonical angle between range(a) and range(u_ref), with
// u_ref orthonormal: || (a - u_ref C) C^{-1} ||_2 where C = u_ref^T a.
template <typename Scalar>
Scalar tangent_of(const Matrix<Scalar>& a, const Matrix<Scalar>& u_ref, Scalar a_scale) {
  const Matrix<Scalar> c = u_ref.transpose() * a;
  Eigen::JacobiSVD<Matrix<Scalar>> svd_c(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd_c.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= kCosFloor<Scalar> * a_scale)
    return std::numeric_limits<Scalar>::infinity();
  const Matrix<Scalar> r = a - u_ref * c;
  // C^{-1} = V S^{-1} U^T
  const Matrix<Scalar> c_inv =
      svd_c.matrixV() * sv.cwiseInverse().asDiagonal() * svd_c.matrixU().transpose();
  return largest_singular_value<Scalar>(r * c_inv);
}

}  // namespace detail

// Q factor of a with positive R diagonal. Throws RankDeficient when a column
// has (relative) norm below 1e-12 after projecting out the previous columns.
template <typename Derived>
Matrix<typename Derived::Scalar> qr_orthonormalize(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const Index d = a.rows(), k = a.cols();
  if (k > d) throw InvalidArgument("qr_orthonormalize: more columns than rows");
  const Scalar scale = k > 0 ? a.colwise().norm().maxCoeff() : Scalar(0);
  if (k > 0 && !(scale > Scalar(0))) throw RankDeficient(0);
  if (!a.allFinite()) throw InvalidArgument("qr_orthonormalize: non-finite input");

  Eigen::HouseholderQR<Matrix<Scalar>> qr(a);
  const auto& packed = qr.matrixQR();
  for (Index j = 0; j < k; ++j)
    if (std::abs(packed(j, j)) <= Scalar(1e-12) * scale) throw RankDeficient(j);

  Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(d, k);
  for (Index j = 0; j < k; ++j)
    if (packed(j, j) < Scalar(0)) q.col(j) *= Scalar(-1);
  return q;
}

template <typename Scalar>
AngleReport<Scalar> canonical_angles(const Matrix<Scalar>& u, const Matrix<Scalar>& u_ref) {
  detail::expect_dim("canonical_angles rows (d)", u_ref.rows(), u.rows());
  detail::expect_dim("canonical_angles cols (k)", u_ref.cols(), u.cols());
  detail::expect_orthonormal(u, "u");
  detail::expect_orthonormal(u_ref, "u_ref");

  const Matrix<Scalar> c = u_ref.transpose() * u;
  Eigen::JacobiSVD<Matrix<Scalar>> svd_c(c);
  const auto& sv = svd_c.singularValues();

  AngleReport<Scalar> report;
  report.cos_theta = sv.size() ? std::clamp(sv(sv.size() - 1), Scalar(0), Scalar(1)) : Scalar(1);
  const Matrix<Scalar> r = u - u_ref * c;
  report.sin_theta = std::clamp(detail::largest_singular_value<Scalar>(r), Scalar(0), Scalar(1));
  report.tan_theta = detail::tangent_of<Scalar>(u, u_ref, Scalar(1));
  return report;
}

// tan theta(range(a), range(u_ref)) for any full-column-rank a, computed
// without orthonormalizing a. Invariant under a -> a R for invertible R.
template <typename Scalar>
Scalar tan_theta(const Matrix<Scalar>& a, const Matrix<Scalar>& u_ref) {
  detail::expect_dim("tan_theta rows (d)", u_ref.rows(), a.rows());
  detail::expect_dim("tan_theta cols (k)", u_ref.cols(), a.cols());
  detail::expect_orthonormal(u_ref, "u_ref");
  return detail::tangent_of<Scalar>(a, u_ref, detail::largest_singular_value<Scalar>(a));
}

// Randomized subspace iteration with a final Rayleigh-Ritz step. Columns are
// ordered by |eigenvalue| descending with the largest-magnitude entry of each
// column made positive.
template <typename Scalar>
TopKResult<Scalar> topk_left_singular(const SymmetricOperator<Scalar>& op, Index k,
                                      Index oversampling, Index power_iters, CounterRng& rng) {
  const Index d = op.dim();
  if (k <= 0 || oversampling < 0 || power_iters < 0)
    throw InvalidArgument("topk_left_singular: k must be positive, counts non-negative");
  if (k + oversampling > d)
    throw InvalidArgument("topk_left_singular: k + oversampling exceeds dimension");
  const Index width = k + oversampling;

  Matrix<Scalar> q;
  {
    Matrix<Scalar> y = op.apply(gaussian_matrix<Scalar>(d, width, rng));
    for (Index it = 0; it < power_iters; ++it) {
      q = detail::orthonormal_basis<Scalar>(y);
      y = op.apply(q);
    }
    q = detail::orthonormal_basis<Scalar>(y);
  }

  Matrix<Scalar> projected = q.transpose() * op.apply(q);
  projected = (projected + projected.transpose().eval()) * Scalar(0.5);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(projected);
  const Vector<Scalar>& evals = eig.eigenvalues();
  const auto order = detail::magnitude_order<Scalar>(evals);

  TopKResult<Scalar> out;
  out.vectors.resize(d, k);
  out.values.resize(width);
  for (Index j = 0; j < width; ++j) out.values[j] = evals[order[static_cast<std::size_t>(j)]];
  for (Index j = 0; j < k; ++j)
    out.vectors.col(j) = q * eig.eigenvectors().col(order[static_cast<std::size_t>(j)]);
  detail::canonicalize_signs(out.vectors);

  const Scalar top = std::abs(out.values[0]);
  if (!(top > Scalar(0)) || !std::isfinite(top)) {
    out.status = SpectralStatus::degenerate;
  } else if (width > k &&
             std::abs(out.values[k - 1]) - std::abs(out.values[k]) < Scalar(1e-14) * top) {
    out.status = SpectralStatus::small_gap;
  }
  return out;
}

// Largest |eigenvalue| of a symmetric operator by Lanczos with full
// reorthogonalization, restarted from the leading Ritz vector when the
// basis fills. A Ritz pair is accepted once its residual is below
// tol * |theta|. Three independent probes are run and the largest estimate
// kept; every estimate is a Ritz value, hence never above the true norm.
template <typename Scalar>
NormEstimate<Scalar> spectral_norm(const SymmetricOperator<Scalar>& op, Scalar tol,
                                   Index max_iters, CounterRng& rng, Index probes = 3) {
  if (!(tol > Scalar(0))) throw InvalidArgument("spectral_norm: tol must be positive");
  if (max_iters <= 0) throw InvalidArgument("spectral_norm: max_iters must be positive");
  const Index d = op.dim();
  const Index basis_cap = std::min<Index>(d, 64);

  NormEstimate<Scalar> best;
  best.converged = true;
  for (Index probe = 0; probe < probes; ++probe) {
    Vector<Scalar> start = gaussian_vector<Scalar>(d, rng);
    start.normalize();

    Scalar estimate = 0;
    bool converged = false;
    Index used = 0;
    while (used < max_iters && !converged) {
      Matrix<Scalar> basis(d, basis_cap);
      std::vector<Scalar> alpha, beta;
      basis.col(0) = start;
      Index m = 0;
      Vector<Scalar> ritz_vector = start;
      while (true) {
        Matrix<Scalar> z = op.apply(basis.col(m));
        ++used;
        alpha.push_back(basis.col(m).dot(z.col(0)));
        for (int pass = 0; pass < 2; ++pass) {
          const auto span = basis.leftCols(m + 1);
          z.col(0) -= span * (span.transpose() * z.col(0));
        }
        const Scalar b = z.norm();
        ++m;

        Matrix<Scalar> tri = Matrix<Scalar>::Zero(m, m);
        for (Index i = 0; i < m; ++i) tri(i, i) = alpha[static_cast<std::size_t>(i)];
        for (Index i = 0; i + 1 < m; ++i)
          tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
        Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(tri);
        Index top = 0;
        eig.eigenvalues().cwiseAbs().maxCoeff(&top);
        estimate = std::abs(eig.eigenvalues()[top]);
        const Scalar residual = b * std::abs(eig.eigenvectors()(m - 1, top));
        ritz_vector = basis.leftCols(m) * eig.eigenvectors().col(top);

        const bool invariant = b <= Scalar(1e-14) * std::max(estimate, Scalar(1)) || m == d;
        if (invariant || residual <= tol * estimate) {
          converged = true;
          break;
        }
        if (m == basis_cap || used >= max_iters) break;
        beta.push_back(b);
        basis.col(m) = z.col(0) / b;
      }
      start = ritz_vector.normalized();
    }
    best.iterations = std::max(best.iterations, used);
    best.converged = best.converged && converged;
    best.value = std::max(best.value, estimate);
  }
  return best;
}

using AngleReportd = AngleReport<double>;

}  // namespace gfm
