#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

#include "gfm/audit.hpp"
#include "gfm/datagen.hpp"
#include "gfm/model.hpp"
#include "gfm/recovery.hpp"
#include "gfm/sensing.hpp"
#include "gfm/spectral.hpp"

namespace gfm {

enum class StepStatus { ok, degenerate, diverged };
enum class TrainStatus { converged, max_iters, diverged };

inline const char* to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::converged: return "converged";
    case TrainStatus::max_iters: return "max_iters";
    case TrainStatus::diverged: return "diverged";
  }
  return "unknown";
}

template <typename Scalar = double>
struct InitResult {
  GfmModel<Scalar> model;
  SpectralStatus status = SpectralStatus::ok;
  Scalar h2 = 0;
};

template <typename Scalar = double>
struct StepResult {
  GfmModel<Scalar> model;
  StepStatus status = StepStatus::ok;
  Scalar h2 = 0;
};

template <typename Scalar = double>
struct TrainOutcome {
  GfmModel<Scalar> model;
  ConvergenceTrace trace;  // empty unless ground truth was supplied
  Index batches_consumed = 0;
  TrainStatus status = TrainStatus::max_iters;
  bool degenerate_init = false;
};

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void on_record(const TraceRecord& record) = 0;
};

inline constexpr std::uint64_t kSolverStream = 0x534F4C5645520001ULL;

// w = 0, V = 0, U = top-k eigenvectors (by magnitude) of H1 - (h2/2) I
// evaluated with the zero model, i.e. with residual y. A zero operator falls
// back to the first k canonical basis vectors and reports degenerate.
template <typename Scalar>
InitResult<Scalar> initialize(const Batch<Scalar>& batch, const SolverConfig& cfg,
                              CounterRng& rng) {
  cfg.validate();
  batch.check_shape();
  detail::expect_dim("batch rows vs config (d)", cfg.d, batch.dim());

  InitResult<Scalar> out;
  out.model = GfmModel<Scalar>::zero(cfg.d, cfg.k);
  const Residual<Scalar> r{batch.y};
  out.h2 = compute_h2(r, batch.size());
  const auto op = shifted_update_operator(h1_operator(batch, r), out.h2, out.model);

  const Index oversampling = std::min(cfg.init_oversampling, cfg.d - cfg.k);
  auto top = topk_left_singular(op, cfg.k, oversampling, cfg.init_power_iters, rng);
  out.status = top.status;
  if (top.status == SpectralStatus::degenerate)
    out.model.u = Matrix<Scalar>::Identity(cfg.d, cfg.k);
  else
    out.model.u = std::move(top.vectors);
  return out;
}

// One mini-batch update on a fresh batch:
//   S  = H1 - (h2/2) I + M   (statistics from this batch and the incoming model)
//   U' = QR(S U),  w' = w + h3,  V' = S U'.
template <typename Scalar>
StepResult<Scalar> step(const GfmModel<Scalar>& model, const Batch<Scalar>& batch) {
  detail::expect_compatible(batch, model);
  StepResult<Scalar> out;

  const Residual<Scalar> r = residual(batch, model);
  out.h2 = compute_h2(r, batch.size());
  const auto s = shifted_update_operator(h1_operator(batch, r), out.h2, model);

  Matrix<Scalar> u_hat = s.apply(model.u);
  if (!u_hat.allFinite() || !std::isfinite(out.h2)) {
    out.model = model;
    out.status = StepStatus::diverged;
    return out;
  }
  try {
    if (u_hat.cwiseAbs().maxCoeff() == Scalar(0)) {
      // Nothing to learn from this batch: keep the subspace.
      out.model.u = qr_orthonormalize(model.u);
      out.status = StepStatus::degenerate;
    } else {
      out.model.u = qr_orthonormalize(u_hat);
    }
  } catch (const RankDeficient&) {
    out.model = model;
    out.status = StepStatus::diverged;
    return out;
  }
  u_hat.resize(0, 0);

  out.model.w = model.w + compute_h3(batch, r);
  out.model.v = s.apply(out.model.u);
  if (!out.model.w.allFinite() || !out.model.v.allFinite()) out.status = StepStatus::diverged;
  return out;
}

namespace detail {

template <typename Scalar>
class TrainLoop {
 public:
  TrainLoop(const SolverConfig& cfg, const GroundTruth<Scalar>* truth, TraceSink* sink)
      : cfg_(cfg), truth_(truth), sink_(sink) {}

  Batch<Scalar> pull(BatchSource<Scalar>& source, TrainOutcome<Scalar>& out) {
    audit::ScopedExclusion exclude;
    Batch<Scalar> b = source.next_batch();
    ++out.batches_consumed;
    return b;
  }

  // Returns false when the run must stop as diverged.
  bool record(TrainOutcome<Scalar>& out, Index t, Scalar h2, double millis) {
    if (!truth_) return true;
    TraceRecord rec;
    rec.t = t;
    const auto err = recovery_error(out.model, *truth_, Scalar(cfg_.spectral_tol),
                                    cfg_.spectral_max_iters);
    rec.beta = static_cast<double>(err.beta);
    rec.gamma = static_cast<double>(err.gamma);
    rec.epsilon = static_cast<double>(err.epsilon);
    rec.alpha = static_cast<double>(canonical_angles(out.model.u, truth_->u_star).tan_theta);
    rec.h2 = static_cast<double>(h2);
    rec.step_millis = millis;
    out.trace.records.push_back(rec);
    if (sink_) sink_->on_record(rec);

    if (!std::isfinite(rec.epsilon)) return false;
    min_epsilon_ = std::min(min_epsilon_, rec.epsilon);
    if (rec.epsilon > 10.0 * min_epsilon_) return false;
    if (!(rec.alpha <= 2.0)) return false;
    return true;
  }

  void finish(TrainOutcome<Scalar>& out) const {
    if (out.status == TrainStatus::diverged || !truth_ || out.trace.empty()) return;
    const double scale = static_cast<double>(truth_->error_scale());
    if (out.trace.back().epsilon <= cfg_.converge_rel_tol * scale)
      out.status = TrainStatus::converged;
  }

  void run_steps(BatchSource<Scalar>& source, TrainOutcome<Scalar>& out, Index first_t,
                 Index steps) {
    using clock = std::chrono::steady_clock;
    for (Index t = first_t; t < first_t + steps; ++t) {
      const auto start = clock::now();
      StepResult<Scalar> next;
      {
        const Batch<Scalar> batch = pull(source, out);
        next = step(out.model, batch);
      }
      const double millis =
          std::chrono::duration<double, std::milli>(clock::now() - start).count();
      if (next.status == StepStatus::diverged) {
        out.status = TrainStatus::diverged;
        return;
      }
      out.model = std::move(next.model);
      if (!record(out, t, next.h2, millis)) {
        out.status = TrainStatus::diverged;
        return;
      }
    }
  }

  void seed_minimum(const ConvergenceTrace& trace) {
    for (const auto& r : trace.records) min_epsilon_ = std::min(min_epsilon_, r.epsilon);
  }

 private:
  const SolverConfig& cfg_;
  const GroundTruth<Scalar>* truth_;
  TraceSink* sink_;
  double min_epsilon_ = std::numeric_limits<double>::infinity();
};

}  // namespace detail

// Pulls batch 0 for initialization and batches 1..t_max for updates. With a
// ground truth, records (alpha, beta, gamma, epsilon) after every update and
// stops as diverged when epsilon exceeds 10x its running minimum, alpha
// exceeds 2, or a step produces non-finite values.
template <typename Scalar>
TrainOutcome<Scalar> train(BatchSource<Scalar>& source, const SolverConfig& cfg,
                           const GroundTruth<Scalar>* truth = nullptr,
                           TraceSink* sink = nullptr) {
  cfg.validate();
  detail::expect_dim("source dimension (d)", cfg.d, source.dim());
  detail::expect_dim("source batch size (n)", cfg.n, source.batch_size());
  if (truth) detail::expect_dim("truth dimension (d)", cfg.d, truth->dim());

  TrainOutcome<Scalar> out;
  detail::TrainLoop<Scalar> loop(cfg, truth, sink);
  CounterRng rng(cfg.seed, kSolverStream);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  InitResult<Scalar> init;
  {
    const Batch<Scalar> batch = loop.pull(source, out);
    init = initialize(batch, cfg, rng);
  }
  out.model = std::move(init.model);
  out.degenerate_init = init.status == SpectralStatus::degenerate;
  const double millis = std::chrono::duration<double, std::milli>(clock::now() - start).count();
  if (!loop.record(out, 0, init.h2, millis)) {
    out.status = TrainStatus::diverged;
    return out;
  }
  loop.run_steps(source, out, 1, cfg.t_max);
  loop.finish(out);
  return out;
}

// Continues a run from a saved model. The source must already be positioned
// at the next unseen batch; iteration numbers continue from first_t.
template <typename Scalar>
TrainOutcome<Scalar> resume(GfmModel<Scalar> model, Index first_t, BatchSource<Scalar>& source,
                            Index steps, const SolverConfig& cfg,
                            const GroundTruth<Scalar>* truth = nullptr,
                            TraceSink* sink = nullptr, const ConvergenceTrace* history = nullptr) {
  cfg.validate();
  detail::expect_dim("source dimension (d)", cfg.d, source.dim());
  detail::expect_dim("model dimension (d)", cfg.d, model.dim());
  TrainOutcome<Scalar> out;
  out.model = std::move(model);
  detail::TrainLoop<Scalar> loop(cfg, truth, sink);
  if (history) loop.seed_minimum(*history);
  loop.run_steps(source, out, first_t, steps);
  loop.finish(out);
  return out;
}

}  // namespace gfm
