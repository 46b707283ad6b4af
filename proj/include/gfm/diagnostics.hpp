#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gfm/datagen.hpp"
#include "gfm/model.hpp"
#include "gfm/recovery.hpp"
#include "gfm/solver.hpp"

namespace gfm::diagnostics {

// Deviation-vs-n scaling expected for every concentration bound checked here.
inline constexpr double kPredictedExponent = -0.5;
inline constexpr double kExponentTolerance = 0.15;

enum class LemmaId { trace_conc, first_order_mean, adjoint_cross, cross_term, covariance };

const char* to_string(LemmaId id);
std::optional<LemmaId> parse_lemma(std::string_view name);
const std::vector<LemmaId>& all_lemmas();

struct ConcentrationReport {
  std::string lemma;
  Index d = 0;
  Index k = 0;
  Index trials = 0;
  std::vector<Index> n_values;
  std::vector<std::vector<double>> deviations;  // [sweep point][trial]
  std::vector<double> median_deviation;
  double fitted_exponent = 0;
  double predicted_exponent = kPredictedExponent;
  bool pass = false;
};

struct RipEstimate {
  Index n = 0;
  Index d = 0;
  Index k = 0;
  double delta_hat = 0;  // median over trials
  std::vector<double> per_trial;
};

struct RipReport {
  Index d = 0;
  Index k = 0;
  Index trials = 0;
  std::vector<RipEstimate> estimates;
  double fitted_exponent = 0;
  double predicted_exponent = kPredictedExponent;
  bool pass = false;
};

struct RateFit {
  double delta_hat = 0;  // per-iteration contraction factor
  double r_squared = 0;
  Index points = 0;
};

struct RecursionCheck {
  Index checked = 0;
  Index violations = 0;
};

// Parameters shared by every experiment that runs the solver on planted data.
struct RunSetup {
  Index d = 0;
  Index k = 0;
  Index n = 0;
  Index t_max = 0;
  SpectrumSpec spectrum;
  double w_norm = 1.0;
  std::vector<std::uint64_t> seeds;
  SolverConfig solver;  // d, k, n, t_max and seed are overwritten per run
};

struct FloorRow {
  double xi = 0;
  double residual_norm = 0;
  double plateau = 0;  // median over seeds of per-run plateaus
  std::vector<double> per_seed;
  Index diverged = 0;
  // Median geometric envelope factor over non-diverged seeds (see fit_envelope).
  std::optional<double> envelope_rate;
};

struct CalibrationStep {
  Index n = 0;
  double median_ratio = 0;
};

struct Calibration {
  Index n = 0;
  bool reached = false;
  std::vector<CalibrationStep> steps;
};

// Seed of the data stream used for a planted run with the given seed.
inline std::uint64_t data_stream_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x44415441ULL); }

// Planted-run helpers.
GroundTruthd make_truth(const RunSetup& setup, double xi, std::uint64_t seed);
TrainOutcome<double> run_seed(const RunSetup& setup, const GroundTruthd& truth, std::uint64_t seed);

// ||(1/2n) A'A(M) - tr(M)/2 I - M||_2 / ||M||_2 for explicit M and X (d x n).
// Zero for M = 0.
double shifted_rip_deviation(const Matrix<double>& m, const Matrix<double>& x);

// Random symmetric rank-k matrix with signed spectrum and unit spectral norm.
Matrix<double> random_low_rank_symmetric(Index d, Index k, CounterRng& rng);

RipEstimate estimate_rip_delta(Index d, Index k, Index n, Index trials, std::uint64_t seed,
                               Index cap = kDefaultOracleCap);
RipReport rip_scaling(Index d, Index k, Index n, Index trials, std::uint64_t seed,
                      Index cap = kDefaultOracleCap);

// Sweeps n, 2n, 4n. `scale` is the norm of the fixed M (or w) drawn per trial.
ConcentrationReport check_lemma(LemmaId id, Index d, Index k, Index n, Index trials,
                                std::uint64_t seed, double scale = 1.0,
                                Index cap = kDefaultOracleCap);
double lemma_deviation(LemmaId id, const Matrix<double>& m, const Vector<double>& w,
                       const Matrix<double>& x);

// Least-squares slope of log(y) against log(x).
double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// Median epsilon over the last quarter of the trace (at least one record).
double plateau_epsilon(const ConvergenceTrace& trace);

// log(epsilon_t) = a + t log(delta) over the pre-plateau prefix (epsilon_t >
// 100 x plateau). Throws InvalidArgument with fewer than 5 such points or no
// decrease.
RateFit fit_convergence_rate(const ConvergenceTrace& trace);

// Fits eps_t - p ~ C q^t, p the plateau, over the leading run of points with
// eps_t > 2p. Returns q and fit quality; nullopt with fewer than 3 such points.
std::optional<RateFit> fit_envelope(const ConvergenceTrace& trace);

// First t with epsilon_t <= target, or nullopt.
std::optional<Index> iterations_to_target(const ConvergenceTrace& trace, double target);

// Whenever alpha_t <= 2 and delta * eps_t <= 4 sqrt(5) sigma_k, checks
// alpha_{t+1} <= slack * 4 sqrt(5) delta eps_t / sigma_k.
RecursionCheck check_recursion(const ConvergenceTrace& trace, double delta_hat, double sigma_k,
                               double slack = 2.0);

FloorRow plateau_row(const RunSetup& setup, double xi);
std::vector<FloorRow> noisy_floor_experiment(const RunSetup& setup,
                                             const std::vector<double>& xi_values);
// Noise-free runs with a residual spectrum of the given magnitudes (decay 1/2).
std::vector<FloorRow> residual_floor_experiment(const RunSetup& setup,
                                                const std::vector<double>& magnitudes);

// Doubles n from start_n until the median one-step ratio eps_1/eps_0 over the
// setup's seeds is <= target_ratio, or max_doublings is exhausted.
Calibration calibrate_batch_size(RunSetup setup, Index start_n, double target_ratio,
                                 Index max_doublings = 8);

double median(std::vector<double> values);

}  // namespace gfm::diagnostics
