#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "gfm/core.hpp"

namespace gfm {

// A symmetric linear map on R^d known only through block application.
// Operators built from a Batch or a GfmModel borrow them: the referenced
// objects must outlive the operator.
template <typename Scalar = double>
class SymmetricOperator {
 public:
  using Block = Matrix<Scalar>;
  using ApplyFn = std::function<Block(const Block&)>;

  SymmetricOperator(Index dim, ApplyFn fn, Scalar shift = Scalar(0))
      : dim_(dim), fn_(std::move(fn)), shift_(shift) {}

  Index dim() const { return dim_; }
  Scalar shift() const { return shift_; }

  // Returns base(P) + shift * P for a d x m block P.
  Block apply(const Block& p) const {
    detail::expect_dim("operator block rows (d)", dim_, p.rows());
    Block out = fn_ ? fn_(p) : Block::Zero(p.rows(), p.cols());
    if (shift_ != Scalar(0)) out.noalias() += shift_ * p;
    return out;
  }

  SymmetricOperator shifted(Scalar extra) const { return {dim_, fn_, shift_ + extra}; }

  SymmetricOperator scaled(Scalar c) const {
    auto inner = *this;
    return {dim_, [inner, c](const Block& p) -> Block { return c * inner.apply(p); }};
  }

  static SymmetricOperator zero(Index dim) { return {dim, ApplyFn{}}; }

  // Wraps an explicit symmetric matrix. Oracle and test use.
  static SymmetricOperator dense(Matrix<Scalar> m) {
    auto held = std::make_shared<const Matrix<Scalar>>(std::move(m));
    const Index d = held->rows();
    return {d, [held](const Block& p) -> Block { return (*held) * p; }};
  }

 private:
  Index dim_;
  ApplyFn fn_;
  Scalar shift_;
};

using SymmetricOperatord = SymmetricOperator<double>;

}  // namespace gfm
