#pragma once

#include <cstdint>

#include "gfm/model.hpp"
#include "gfm/rng.hpp"
#include "gfm/sensing.hpp"
#include "gfm/spectral.hpp"

namespace gfm {

template <typename Scalar = double>
struct RecoveryError {
  Scalar beta = 0;   // ||w* - w||_2
  Scalar gamma = 0;  // ||M_k* - M||_2
  Scalar epsilon = 0;
  bool gamma_converged = true;
};

inline constexpr std::uint64_t kRecoveryProbeSeed = 0x6A09E667F3BCC909ULL;

// gamma is measured against the exact-rank part M_k* = U* diag(lambda*) U*^T
// through the implicit difference operator, so nothing d x d is formed.
template <typename Scalar>
RecoveryError<Scalar> recovery_error(const GfmModel<Scalar>& model, const GroundTruth<Scalar>& gt,
                                     Scalar tol = Scalar(1e-10), Index max_iters = 300) {
  model.check_shape();
  detail::expect_dim("truth vs model (d)", gt.dim(), model.dim());
  RecoveryError<Scalar> out;
  out.beta = (gt.w_star - model.w).norm();
  CounterRng rng(kRecoveryProbeSeed);
  const auto norm = spectral_norm(truth_minus_model_operator(gt, model), tol, max_iters, rng);
  out.gamma = norm.value;
  out.gamma_converged = norm.converged;
  out.epsilon = out.beta + out.gamma;
  return out;
}

}  // namespace gfm
