#include "gfm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "gfm/parallel.hpp"

namespace gfm::diagnostics {
namespace {

using Mat = Matrix<double>;
using Vec = Vector<double>;

double symmetric_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// (1/n) sum_i c_i x_i x_i^T, accumulated in instance order.
Mat weighted_outer(const Mat& x, const Vec& c) {
  const Index n = x.cols();
  Mat out = Mat::Zero(x.rows(), x.rows());
  for (Index c0 = 0; c0 < n; c0 += kInstanceChunk) {
    const Index len = std::min(kInstanceChunk, n - c0);
    const auto xs = x.middleCols(c0, len);
    out.noalias() += xs * c.segment(c0, len).asDiagonal() * xs.transpose();
  }
  return out / static_cast<double>(n);
}

Vec quadratic_forms(const Mat& m, const Mat& x) {
  return (x.array() * (m * x).array()).colwise().sum().transpose();
}

bool needs_dense(LemmaId id) { return id != LemmaId::first_order_mean; }

std::uint64_t trial_stream(std::uint64_t family, Index point, Index trial) {
  return (family << 48) ^ (static_cast<std::uint64_t>(point) << 24) ^
         static_cast<std::uint64_t>(trial);
}

}  // namespace

const char* to_string(LemmaId id) {
  switch (id) {
    case LemmaId::trace_conc: return "trace_conc";
    case LemmaId::first_order_mean: return "first_order_mean";
    case LemmaId::adjoint_cross: return "adjoint_cross";
    case LemmaId::cross_term: return "cross_term";
    case LemmaId::covariance: return "covariance";
  }
  return "unknown";
}

std::optional<LemmaId> parse_lemma(std::string_view name) {
  for (LemmaId id : all_lemmas())
    if (name == to_string(id)) return id;
  return std::nullopt;
}

const std::vector<LemmaId>& all_lemmas() {
  static const std::vector<LemmaId> ids = {LemmaId::trace_conc, LemmaId::first_order_mean,
                                           LemmaId::adjoint_cross, LemmaId::cross_term,
                                           LemmaId::covariance};
  return ids;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

Mat random_low_rank_symmetric(Index d, Index k, CounterRng& rng) {
  const Mat u = qr_orthonormalize(gaussian_matrix<double>(d, k, rng));
  Vec lambda(k);
  for (Index i = 0; i < k; ++i) {
    const double sign = (rng.next_u64() >> 63) ? -1.0 : 1.0;
    lambda[i] = sign * (i == 0 ? 1.0 : 0.5 + 0.5 * rng.uniform());
  }
  return u * lambda.asDiagonal() * u.transpose();
}

double shifted_rip_deviation(const Mat& m, const Mat& x) {
  detail::expect_dim("rip: M vs X rows (d)", m.rows(), x.rows());
  const double norm_m = symmetric_norm(m);
  if (norm_m == 0.0) return 0.0;
  Mat dev = 0.5 * weighted_outer(x, quadratic_forms(m, x));
  dev.diagonal().array() -= 0.5 * m.trace();
  dev -= m;
  return symmetric_norm(dev) / norm_m;
}

RipEstimate estimate_rip_delta(Index d, Index k, Index n, Index trials, std::uint64_t seed,
                               Index cap) {
  detail::expect_within_cap(d, cap);
  if (trials < 1 || n < 1 || k < 1 || k > d)
    throw InvalidArgument("estimate_rip_delta: need trials, n >= 1 and 1 <= k <= d");
  RipEstimate out{n, d, k, 0.0, std::vector<double>(static_cast<std::size_t>(trials))};
  parallel_for(trials, [&](Index t) {
    CounterRng rng(seed, trial_stream(0x52, n, t));
    const Mat m = random_low_rank_symmetric(d, k, rng);
    const Mat x = gaussian_matrix<double>(d, n, rng);
    out.per_trial[static_cast<std::size_t>(t)] = shifted_rip_deviation(m, x);
  });
  out.delta_hat = median(out.per_trial);
  return out;
}

double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("fit_log_slope: need >= 2 points");
  double mx = 0, my = 0;
  const double count = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) return std::numeric_limits<double>::quiet_NaN();
    mx += std::log(x[i]) / count;
    my += std::log(y[i]) / count;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

RipReport rip_scaling(Index d, Index k, Index n, Index trials, std::uint64_t seed, Index cap) {
  RipReport report{d, k, trials, {}, 0.0, kPredictedExponent, false};
  std::vector<double> ns, deltas;
  for (Index j = 0; j < 3; ++j) {
    const Index nj = n << j;
    report.estimates.push_back(estimate_rip_delta(d, k, nj, trials, seed, cap));
    ns.push_back(static_cast<double>(nj));
    deltas.push_back(report.estimates.back().delta_hat);
  }
  report.fitted_exponent = fit_log_slope(ns, deltas);
  report.pass = std::abs(report.fitted_exponent - kPredictedExponent) <= kExponentTolerance;
  return report;
}

double lemma_deviation(LemmaId id, const Mat& m, const Vec& w, const Mat& x) {
  const double n = static_cast<double>(x.cols());
  switch (id) {
    case LemmaId::trace_conc:
      return std::abs(quadratic_forms(m, x).sum() / n - m.trace());
    case LemmaId::first_order_mean:
      return std::abs((x.transpose() * w).sum() / n);
    case LemmaId::adjoint_cross:
      return symmetric_norm(weighted_outer(x, x.transpose() * w));
    case LemmaId::cross_term:
      return (x * quadratic_forms(m, x)).norm() / n;
    case LemmaId::covariance: {
      Mat dev = -weighted_outer(x, Vec::Ones(x.cols()));
      dev.diagonal().array() += 1.0;
      return symmetric_norm(dev);
    }
  }
  throw InvalidArgument("unknown lemma id");
}

ConcentrationReport check_lemma(LemmaId id, Index d, Index k, Index n, Index trials,
                                std::uint64_t seed, double scale, Index cap) {
  if (needs_dense(id)) detail::expect_within_cap(d, cap);
  if (trials < 1 || n < 1 || k < 1 || k > d)
    throw InvalidArgument("check_lemma: need trials, n >= 1 and 1 <= k <= d");

  ConcentrationReport report;
  report.lemma = to_string(id);
  report.d = d;
  report.k = k;
  report.trials = trials;
  std::vector<double> ns;
  for (Index j = 0; j < 3; ++j) {
    const Index nj = n << j;
    report.n_values.push_back(nj);
    ns.push_back(static_cast<double>(nj));
    std::vector<double> devs(static_cast<std::size_t>(trials));
    parallel_for(trials, [&](Index t) {
      CounterRng rng(seed, trial_stream(static_cast<std::uint64_t>(id) + 1, j, t));
      Mat m = scale * random_low_rank_symmetric(d, k, rng);
      Vec w = gaussian_vector<double>(d, rng);
      w *= scale / w.norm();
      const Mat x = gaussian_matrix<double>(d, nj, rng);
      devs[static_cast<std::size_t>(t)] = lemma_deviation(id, m, w, x);
    });
    report.median_deviation.push_back(median(devs));
    report.deviations.push_back(std::move(devs));
  }
  report.fitted_exponent = fit_log_slope(ns, report.median_deviation);
  report.pass = std::abs(report.fitted_exponent - kPredictedExponent) <= kExponentTolerance;
  return report;
}

double plateau_epsilon(const ConvergenceTrace& trace) {
  if (trace.empty()) throw InvalidArgument("plateau_epsilon: empty trace");
  const std::size_t count = std::max<std::size_t>(1, trace.size() / 4);
  std::vector<double> tail;
  for (std::size_t i = trace.size() - count; i < trace.size(); ++i)
    tail.push_back(trace.records[i].epsilon);
  return median(std::move(tail));
}

RateFit fit_convergence_rate(const ConvergenceTrace& trace) {
  if (trace.size() < 5) throw InvalidArgument("fit_convergence_rate: fewer than 5 records");
  const double plateau = plateau_epsilon(trace);
  std::size_t window = 0;
  while (window < trace.size() && trace.records[window].epsilon > 100.0 * plateau &&
         std::isfinite(trace.records[window].epsilon))
    ++window;
  if (window < 5)
    throw InvalidArgument("fit_convergence_rate: fewer than 5 pre-plateau points");
  if (!(trace.records[window - 1].epsilon < trace.records[0].epsilon))
    throw InvalidArgument("fit_convergence_rate: epsilon does not decrease");

  double mt = 0, ml = 0;
  const double count = static_cast<double>(window);
  for (std::size_t i = 0; i < window; ++i) {
    mt += static_cast<double>(trace.records[i].t) / count;
    ml += std::log(trace.records[i].epsilon) / count;
  }
  double stl = 0, stt = 0, sll = 0;
  for (std::size_t i = 0; i < window; ++i) {
    const double dt = static_cast<double>(trace.records[i].t) - mt;
    const double dl = std::log(trace.records[i].epsilon) - ml;
    stl += dt * dl;
    stt += dt * dt;
    sll += dl * dl;
  }
  RateFit fit;
  fit.points = static_cast<Index>(window);
  const double slope = stl / stt;
  fit.delta_hat = std::exp(slope);
  fit.r_squared = sll > 0 ? (stl * stl) / (stt * sll) : 1.0;
  return fit;
}

std::optional<RateFit> fit_envelope(const ConvergenceTrace& trace) {
  if (trace.empty()) return std::nullopt;
  const double plateau = plateau_epsilon(trace);
  std::vector<double> t, excess;
  for (const auto& r : trace.records) {
    if (!(r.epsilon > 2.0 * plateau) || !std::isfinite(r.epsilon)) break;
    t.push_back(static_cast<double>(r.t));
    excess.push_back(std::log(r.epsilon - plateau));
  }
  if (t.size() < 3) return std::nullopt;
  const double count = static_cast<double>(t.size());
  double mt = 0, ml = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i] / count;
    ml += excess[i] / count;
  }
  double stl = 0, stt = 0, sll = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stl += (t[i] - mt) * (excess[i] - ml);
    stt += (t[i] - mt) * (t[i] - mt);
    sll += (excess[i] - ml) * (excess[i] - ml);
  }
  RateFit fit;
  fit.points = static_cast<Index>(t.size());
  fit.delta_hat = std::exp(stl / stt);
  fit.r_squared = sll > 0 ? (stl * stl) / (stt * sll) : 1.0;
  return fit;
}

std::optional<Index> iterations_to_target(const ConvergenceTrace& trace, double target) {
  for (const auto& r : trace.records)
    if (r.epsilon <= target) return r.t;
  return std::nullopt;
}

RecursionCheck check_recursion(const ConvergenceTrace& trace, double delta_hat, double sigma_k,
                               double slack) {
  RecursionCheck out;
  if (trace.size() < 2) return out;
  const double bound_coeff = 4.0 * std::sqrt(5.0);
  // Below this the iterates sit at round-off and the bound is meaningless.
  const double floor = 1e-9 * trace.records.front().epsilon;
  for (std::size_t t = 0; t + 1 < trace.size(); ++t) {
    const auto& cur = trace.records[t];
    if (!(cur.alpha <= 2.0) || !(delta_hat * cur.epsilon <= bound_coeff * sigma_k)) continue;
    if (cur.epsilon <= floor) continue;
    ++out.checked;
    const double bound = slack * bound_coeff * delta_hat * (cur.beta + cur.gamma) / sigma_k;
    if (trace.records[t + 1].alpha > bound) ++out.violations;
  }
  return out;
}

GroundTruthd make_truth(const RunSetup& setup, double xi, std::uint64_t seed) {
  return sample_ground_truth<double>(setup.d, setup.k, setup.spectrum, setup.w_norm, xi, seed);
}

TrainOutcome<double> run_seed(const RunSetup& setup, const GroundTruthd& truth,
                              std::uint64_t seed) {
  SolverConfig cfg = setup.solver;
  cfg.d = setup.d;
  cfg.k = setup.k;
  cfg.n = setup.n;
  cfg.t_max = setup.t_max;
  cfg.seed = seed;
  auto stream = open_stream(truth, setup.n, data_stream_seed(seed));
  return train(stream, cfg, &truth);
}

FloorRow plateau_row(const RunSetup& setup, double xi) {
  const Index runs = static_cast<Index>(setup.seeds.size());
  if (runs == 0) throw InvalidArgument("plateau experiment needs at least one seed");
  std::vector<double> plateaus(static_cast<std::size_t>(runs));
  std::vector<double> rates(static_cast<std::size_t>(runs), std::numeric_limits<double>::quiet_NaN());
  std::vector<char> diverged(static_cast<std::size_t>(runs), 0);
  double residual_norm = 0;
  parallel_for(runs, [&](Index i) {
    const auto seed = setup.seeds[static_cast<std::size_t>(i)];
    const auto truth = make_truth(setup, xi, seed);
    if (i == 0) residual_norm = truth.residual_norm();
    const auto outcome = run_seed(setup, truth, seed);
    plateaus[static_cast<std::size_t>(i)] = plateau_epsilon(outcome.trace);
    diverged[static_cast<std::size_t>(i)] = outcome.status == TrainStatus::diverged;
    if (const auto fit = fit_envelope(outcome.trace)) rates[static_cast<std::size_t>(i)] = fit->delta_hat;
  });

  FloorRow row;
  row.xi = xi;
  row.residual_norm = residual_norm;
  std::vector<double> kept, fitted;
  for (Index i = 0; i < runs; ++i) {
    const auto s = static_cast<std::size_t>(i);
    row.per_seed.push_back(plateaus[s]);
    if (diverged[s]) {
      ++row.diverged;
      continue;
    }
    kept.push_back(plateaus[s]);
    if (std::isfinite(rates[s])) fitted.push_back(rates[s]);
  }
  row.plateau = median(kept);
  if (!fitted.empty()) row.envelope_rate = median(fitted);
  return row;
}

std::vector<FloorRow> noisy_floor_experiment(const RunSetup& setup,
                                             const std::vector<double>& xi_values) {
  std::vector<FloorRow> rows;
  for (double xi : xi_values) {
    if (!(xi >= 0)) throw InvalidArgument("noise levels must be non-negative");
    rows.push_back(plateau_row(setup, xi));
  }
  return rows;
}

std::vector<FloorRow> residual_floor_experiment(const RunSetup& setup,
                                                const std::vector<double>& magnitudes) {
  std::vector<FloorRow> rows;
  for (double mag : magnitudes) {
    RunSetup s = setup;
    s.spectrum = setup.spectrum.with_residual(mag, 0.5);
    rows.push_back(plateau_row(s, 0.0));
  }
  return rows;
}

Calibration calibrate_batch_size(RunSetup setup, Index start_n, double target_ratio,
                                 Index max_doublings) {
  Calibration out;
  setup.t_max = 1;
  Index n = start_n;
  for (Index i = 0; i <= max_doublings; ++i, n *= 2) {
    setup.n = n;
    std::vector<double> ratios(setup.seeds.size());
    parallel_for(static_cast<Index>(setup.seeds.size()), [&](Index s) {
      const auto seed = setup.seeds[static_cast<std::size_t>(s)];
      const auto outcome = run_seed(setup, make_truth(setup, 0.0, seed), seed);
      const auto& rec = outcome.trace.records;
      ratios[static_cast<std::size_t>(s)] =
          rec.size() >= 2 ? rec[1].epsilon / rec[0].epsilon
                          : std::numeric_limits<double>::infinity();
    });
    out.steps.push_back({n, median(ratios)});
    if (out.steps.back().median_ratio <= target_ratio) {
      out.n = n;
      out.reached = true;
      return out;
    }
  }
  out.n = n / 2;
  return out;
}

}  // namespace gfm::diagnostics
