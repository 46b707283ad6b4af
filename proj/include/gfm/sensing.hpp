#pragma once

#include <algorithm>

#include "gfm/model.hpp"
#include "gfm/operator.hpp"

namespace gfm {

// r = y - A(M) - X^T w for the current model.
template <typename Scalar = double>
struct Residual {
  Vector<Scalar> values;

  Index size() const { return values.size(); }
};

namespace detail {

template <typename Scalar>
void expect_compatible(const Batch<Scalar>& batch, const GfmModel<Scalar>& model) {
  batch.check_shape();
  model.check_shape();
  expect_dim("batch rows vs model (d)", model.dim(), batch.dim());
}

}  // namespace detail

// A(M)_i = x_i^T M x_i = (U^T x_i) . (V^T x_i).
template <typename Scalar>
Vector<Scalar> sense(const Batch<Scalar>& batch, const GfmModel<Scalar>& model) {
  detail::expect_compatible(batch, model);
  const Index n = batch.size();
  Vector<Scalar> out(n);
  const Index k = model.rank();
  for (Index i = 0; i < n; ++i) {
    const auto x = batch.x.col(i);
    Scalar acc = 0;
    for (Index c = 0; c < k; ++c) acc += x.dot(model.u.col(c)) * x.dot(model.v.col(c));
    out[i] = acc;
  }
  return out;
}

template <typename Scalar>
Residual<Scalar> residual(const Batch<Scalar>& batch, const GfmModel<Scalar>& model) {
  Residual<Scalar> r{sense(batch, model)};
  const Index n = batch.size();
  for (Index c0 = 0; c0 < n; c0 += kInstanceChunk) {
    const Index len = std::min(kInstanceChunk, n - c0);
    auto seg = r.values.segment(c0, len);
    seg = batch.y.segment(c0, len) - seg;
    seg.noalias() -= batch.x.middleCols(c0, len).transpose() * model.w;
  }
  return r;
}

// H1 = (1/2n) A'(r): P -> (1/2n) sum_i r_i x_i (x_i^T P). Borrows batch and residual.
template <typename Scalar>
SymmetricOperator<Scalar> h1_operator(const Batch<Scalar>& batch, const Residual<Scalar>& r) {
  batch.check_shape();
  detail::expect_dim("residual length (n)", batch.size(), r.size());
  const Batch<Scalar>* b = &batch;
  const Residual<Scalar>* res = &r;
  return SymmetricOperator<Scalar>(batch.dim(), [b, res](const Matrix<Scalar>& p) {
    const Index n = b->size();
    const Index m = p.cols();
    Matrix<Scalar> out = Matrix<Scalar>::Zero(p.rows(), m);
    // Dot products and axpys only: a GEMM here would allocate packing
    // buffers sized by the CPU cache rather than by d.
    Vector<Scalar> proj(m);
    for (Index i = 0; i < n; ++i) {
      const auto x = b->x.col(i);
      const Scalar ri = res->values[i];
      for (Index c = 0; c < m; ++c) proj[c] = ri * x.dot(p.col(c));
      for (Index c = 0; c < m; ++c) out.col(c) += proj[c] * x;
    }
    out *= Scalar(1) / (Scalar(2) * Scalar(n));
    return out;
  });
}

template <typename Scalar>
Scalar compute_h2(const Residual<Scalar>& r, Index n) {
  detail::expect_dim("residual length (n)", n, r.size());
  if (n < 1) throw InvalidArgument("compute_h2: n must be >= 1");
  Scalar sum = 0;
  for (Index i = 0; i < n; ++i) sum += r.values[i];
  return sum / Scalar(n);
}

template <typename Scalar>
Vector<Scalar> compute_h3(const Batch<Scalar>& batch, const Residual<Scalar>& r) {
  batch.check_shape();
  detail::expect_dim("residual length (n)", batch.size(), r.size());
  const Index n = batch.size();
  Vector<Scalar> out = Vector<Scalar>::Zero(batch.dim());
  for (Index c0 = 0; c0 < n; c0 += kInstanceChunk) {
    const Index len = std::min(kInstanceChunk, n - c0);
    out.noalias() += batch.x.middleCols(c0, len) * r.values.segment(c0, len);
  }
  return out / Scalar(n);
}

// S = H1 - (h2/2) I + M with M = (U V^T + V U^T)/2. S is symmetric, so the
// transpose in the U-update and the plain form in the V-update coincide.
// Borrows the model.
template <typename Scalar>
SymmetricOperator<Scalar> shifted_update_operator(const SymmetricOperator<Scalar>& h1, Scalar h2,
                                                  const GfmModel<Scalar>& model) {
  model.check_shape();
  detail::expect_dim("operator vs model (d)", model.dim(), h1.dim());
  const GfmModel<Scalar>* m = &model;
  SymmetricOperator<Scalar> inner = h1;
  return SymmetricOperator<Scalar>(
      h1.dim(),
      [inner, m](const Matrix<Scalar>& p) {
        Matrix<Scalar> out = inner.apply(p);
        const Matrix<Scalar> vp = m->v.transpose() * p;  // k x cols
        const Matrix<Scalar> up = m->u.transpose() * p;
        out.noalias() += Scalar(0.5) * (m->u * vp);
        out.noalias() += Scalar(0.5) * (m->v * up);
        return out;
      },
      Scalar(-0.5) * h2);
}

// M_k* - M as an implicit operator of rank <= 3k. Borrows truth and model.
template <typename Scalar>
SymmetricOperator<Scalar> truth_minus_model_operator(const GroundTruth<Scalar>& gt,
                                                     const GfmModel<Scalar>& model) {
  model.check_shape();
  detail::expect_dim("truth vs model (d)", gt.dim(), model.dim());
  const GroundTruth<Scalar>* g = &gt;
  const GfmModel<Scalar>* m = &model;
  return SymmetricOperator<Scalar>(gt.dim(), [g, m](const Matrix<Scalar>& p) {
    Matrix<Scalar> coeff = g->u_star.transpose() * p;
    coeff = g->lambda_star.asDiagonal() * coeff;
    Matrix<Scalar> out = g->u_star * coeff;
    const Matrix<Scalar> vp = m->v.transpose() * p;
    const Matrix<Scalar> up = m->u.transpose() * p;
    out.noalias() -= Scalar(0.5) * (m->u * vp);
    out.noalias() -= Scalar(0.5) * (m->v * up);
    return out;
  });
}

}  // namespace gfm
