// gfm: generate planted data, train One-Pass gFM, evaluate checkpoints, run
// the concentration diagnostics and parameter sweeps.
//
// Exit codes: 0 ok, 1 divergence or failed check, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gfm/datagen.hpp"
#include "gfm/diagnostics.hpp"
#include "gfm/io.hpp"
#include "gfm/solver.hpp"

namespace {

using namespace gfm;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Stream position used for held-out evaluation data; far beyond any training run.
constexpr Index kHeldOutBatch = Index{1} << 40;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TruthFlags {
  Index d = 0;
  Index k = 0;
  std::string spectrum;  // "1,-0.5" | "cond:K[:signs]"; empty = cond:2
  double w_norm = 1.0;
  double noise = 0.0;
  double residual = 0.0;
  double residual_decay = 0.5;

  void add_to(CLI::App& app, bool dims_required) {
    auto* od = app.add_option("--d", d, "feature dimension");
    auto* ok = app.add_option("--k", k, "rank of the second-order matrix");
    if (dims_required) {
      od->required();
      ok->required();
    }
    app.add_option("--spectrum", spectrum,
                   "eigenvalues of M*: comma list (e.g. 1,-0.5) or cond:KAPPA[:positive|alternating|random]");
    app.add_option("--w-norm", w_norm, "norm of the first-order vector w*")->capture_default_str();
    app.add_option("--noise", noise, "label noise standard deviation")->capture_default_str();
    app.add_option("--residual", residual, "largest residual eigenvalue of M* beyond rank k")
        ->capture_default_str();
    app.add_option("--residual-decay", residual_decay, "geometric decay of the residual spectrum")
        ->capture_default_str();
  }
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("cannot parse number '" + item + "'");
    }
    if (used != item.size()) throw UsageError("cannot parse number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

SpectrumSpec spectrum_from(const TruthFlags& f) {
  SpectrumSpec spec;
  const std::string& s = f.spectrum;
  if (s.empty()) {
    spec = SpectrumSpec::condition(f.k, 2.0);
  } else if (s.rfind("cond:", 0) == 0) {
    std::string rest = s.substr(5);
    SignPattern signs = SignPattern::random;
    if (const auto colon = rest.find(':'); colon != std::string::npos) {
      const std::string pattern = rest.substr(colon + 1);
      rest = rest.substr(0, colon);
      if (pattern == "positive") signs = SignPattern::all_positive;
      else if (pattern == "alternating") signs = SignPattern::alternating;
      else if (pattern == "random") signs = SignPattern::random;
      else throw UsageError("unknown sign pattern '" + pattern + "'");
    }
    const auto kappa = parse_list(rest);
    if (kappa.size() != 1) throw UsageError("cond: expects one condition number");
    spec = SpectrumSpec::condition(f.k, kappa[0], signs);
  } else {
    spec = SpectrumSpec::explicit_values(parse_list(s));
  }
  if (f.residual > 0) spec = spec.with_residual(f.residual, f.residual_decay);
  return spec;
}

void check_dims(Index d, Index k) {
  if (d <= 0 || k <= 0) throw UsageError("--d and --k must be positive");
  if (k >= d) throw UsageError("--k must be smaller than --d (k < d)");
}

GroundTruthd truth_from(const TruthFlags& f, std::uint64_t seed) {
  check_dims(f.d, f.k);
  try {
    return sample_ground_truth<double>(f.d, f.k, spectrum_from(f), f.w_norm, f.noise, seed);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- gen

struct GenFlags {
  TruthFlags truth;
  std::uint64_t seed = 0;
  std::string out = "truth.json";
  std::string dump_batch;
  Index n = 0;
  Index batch_index = 0;
};

int cmd_gen(const GenFlags& f) {
  const auto gt = truth_from(f.truth, f.seed);
  nlohmann::json j = {{"d", gt.dim()},
                      {"k", gt.rank()},
                      {"seed", f.seed},
                      {"spectrum", f.truth.spectrum.empty() ? "cond:2" : f.truth.spectrum},
                      {"w_norm", f.truth.w_norm},
                      {"noise", f.truth.noise},
                      {"residual", f.truth.residual},
                      {"residual_decay", f.truth.residual_decay},
                      {"data_stream_seed", diagnostics::data_stream_seed(f.seed)}};
  j["lambda_star"] = std::vector<double>(gt.lambda_star.data(), gt.lambda_star.data() + gt.rank());
  j["w_star"] = std::vector<double>(gt.w_star.data(), gt.w_star.data() + gt.dim());
  j["u_star"] = std::vector<double>(gt.u_star.data(), gt.u_star.data() + gt.u_star.size());
  io::write_report(j, f.out);
  std::cout << "wrote ground truth to " << f.out << "\n";

  if (!f.dump_batch.empty()) {
    if (f.n <= 0) throw UsageError("--dump-batch needs --n > 0");
    const auto stream = open_stream(gt, f.n, diagnostics::data_stream_seed(f.seed));
    const auto batch = stream.batch_at(f.batch_index);
    std::ofstream out(f.dump_batch);
    if (!out) throw io::IoError("cannot open " + f.dump_batch + " for writing");
    out << "y";
    for (Index i = 0; i < gt.dim(); ++i) out << ",x" << i;
    out << "\n";
    char buf[40];
    for (Index c = 0; c < batch.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", batch.y[c]);
      out << buf;
      for (Index i = 0; i < gt.dim(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", batch.x(i, c));
        out << ',' << buf;
      }
      out << "\n";
    }
    std::cout << "wrote batch " << f.batch_index << " (" << batch.size() << " instances) to "
              << f.dump_batch << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  TruthFlags truth;
  Index n = 0;
  Index t_max = 0;
  std::uint64_t seed = 0;
  std::string config;
  std::string checkpoint = "model.gfm";
  std::string trace = "trace.csv";
  bool timings = false;
  Index oversampling = 8;
  Index power_iters = 6;
};

int cmd_train(const TrainFlags& f, const CLI::App& app) {
  SolverConfig cfg;
  if (!f.config.empty()) cfg = io::load_config(f.config);
  if (app.count("--d")) cfg.d = f.truth.d;
  if (app.count("--k")) cfg.k = f.truth.k;
  if (app.count("--n")) cfg.n = f.n;
  if (app.count("--T")) cfg.t_max = f.t_max;
  if (app.count("--oversampling") || f.config.empty()) cfg.init_oversampling = f.oversampling;
  if (app.count("--power-iters") || f.config.empty()) cfg.init_power_iters = f.power_iters;
  cfg.seed = f.seed;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  TruthFlags tf = f.truth;
  tf.d = cfg.d;
  tf.k = cfg.k;
  const auto gt = truth_from(tf, cfg.seed);
  auto stream = open_stream(gt, cfg.n, diagnostics::data_stream_seed(cfg.seed));

  io::CsvTraceSink sink(f.trace, io::TraceWriteOptions{f.timings});
  const auto outcome = train(stream, cfg, &gt, &sink);
  io::save_checkpoint(outcome.model, {cfg, outcome.batches_consumed}, f.checkpoint);

  const auto& last = outcome.trace.back();
  std::cout << "status " << to_string(outcome.status) << "\n"
            << "batches_consumed " << outcome.batches_consumed << "\n"
            << "beta " << fmt(last.beta) << "\n"
            << "gamma " << fmt(last.gamma) << "\n"
            << "epsilon " << fmt(last.epsilon) << "\n";
  try {
    const auto fit = diagnostics::fit_convergence_rate(outcome.trace);
    std::cout << "contraction_rate " << fmt(fit.delta_hat) << " (r2 " << fmt(fit.r_squared) << ")\n";
  } catch (const InvalidArgument&) {
    std::cout << "contraction_rate n/a\n";
  }
  if (outcome.degenerate_init) std::cerr << "warning: degenerate initialization operator\n";
  return outcome.status == TrainStatus::diverged ? kExitFailure : kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  TruthFlags truth;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  Index n_test = 2000;
  std::string out;
};

int cmd_eval(const EvalFlags& f) {
  const auto [model, meta] = io::load_checkpoint(f.checkpoint);
  TruthFlags tf = f.truth;
  tf.d = model.dim();
  tf.k = model.rank();
  const std::uint64_t seed = f.seed.value_or(meta.config.seed);
  const auto gt = truth_from(tf, seed);
  const auto err = recovery_error(model, gt);
  const double alpha = canonical_angles(model.u, gt.u_star).tan_theta;

  const auto stream = open_stream(gt, f.n_test, diagnostics::data_stream_seed(seed));
  const auto batch = stream.batch_at(kHeldOutBatch);
  const auto r = residual(batch, model);
  const double mse = r.values.squaredNorm() / static_cast<double>(batch.size());

  std::cout << "beta " << fmt(err.beta) << "\n"
            << "gamma " << fmt(err.gamma) << "\n"
            << "epsilon " << fmt(err.epsilon) << "\n"
            << "alpha " << fmt(alpha) << "\n"
            << "test_mse " << fmt(mse) << "\n";
  if (!f.out.empty()) {
    io::write_report({{"kind", "eval"},
                      {"checkpoint", f.checkpoint},
                      {"batches_consumed", meta.batches_consumed},
                      {"beta", err.beta},
                      {"gamma", err.gamma},
                      {"epsilon", err.epsilon},
                      {"alpha", alpha},
                      {"test_mse", mse},
                      {"n_test", f.n_test}},
                     f.out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- verify

struct VerifyFlags {
  std::vector<std::string> lemmas;
  bool all = false;
  Index d = 24;
  Index k = 2;
  Index n = 1000;
  Index trials = 20;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_verify(const VerifyFlags& f) {
  if (!f.all && f.lemmas.empty()) throw UsageError("verify needs --lemma or --all");
  if (f.d <= 0 || f.k <= 0 || f.k > f.d || f.n <= 0 || f.trials <= 0)
    throw UsageError("verify needs positive --d, --n, --trials and 1 <= k <= d");
  if (f.d > kDefaultOracleCap)
    throw UsageError("--d " + std::to_string(f.d) + " exceeds the dense oracle cap of " +
                     std::to_string(kDefaultOracleCap) +
                     "; the diagnostics evaluate d x d matrices");

  std::vector<diagnostics::LemmaId> ids;
  bool rip = f.all;
  if (f.all) ids = diagnostics::all_lemmas();
  for (const auto& name : f.lemmas) {
    if (name == "shifted_rip") {
      rip = true;
      continue;
    }
    const auto id = diagnostics::parse_lemma(name);
    if (!id) throw UsageError("unknown lemma id '" + name + "'");
    ids.push_back(*id);
  }

  fs::create_directories(f.out_dir);
  bool ok = true;
  for (auto id : ids) {
    const auto report = diagnostics::check_lemma(id, f.d, f.k, f.n, f.trials, f.seed);
    const auto path = fs::path(f.out_dir) / (report.lemma + ".json");
    io::write_report(io::to_json(report), path);
    std::cout << (report.pass ? "PASS " : "FAIL ") << report.lemma << " exponent "
              << fmt(report.fitted_exponent) << " -> " << path.string() << "\n";
    ok = ok && report.pass;
  }
  if (rip) {
    const auto report = diagnostics::rip_scaling(f.d, f.k, f.n, f.trials, f.seed);
    const auto path = fs::path(f.out_dir) / "shifted_rip.json";
    io::write_report(io::to_json(report), path);
    std::cout << (report.pass ? "PASS " : "FAIL ") << "shifted_rip exponent "
              << fmt(report.fitted_exponent) << " -> " << path.string() << "\n";
    ok = ok && report.pass;
  }
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- sweep

struct SweepFlags {
  TruthFlags truth;
  std::string axis;
  std::string values;
  Index n = 0;
  Index t_max = 0;
  std::uint64_t seed = 0;
  Index seeds = 5;
  std::string out = "sweep.csv";
};

int cmd_sweep(const SweepFlags& f) {
  if (f.axis != "n" && f.axis != "xi" && f.axis != "cond")
    throw UsageError("--axis must be one of n, xi, cond");
  const auto values = parse_list(f.values);
  if (values.empty()) throw UsageError("sweep axis has no values");
  check_dims(f.truth.d, f.truth.k);
  if (f.seeds <= 0 || f.t_max < 0) throw UsageError("--seeds must be positive, --T non-negative");

  diagnostics::RunSetup base;
  base.d = f.truth.d;
  base.k = f.truth.k;
  base.n = f.n;
  base.t_max = f.t_max;
  base.w_norm = f.truth.w_norm;
  for (Index i = 0; i < f.seeds; ++i) base.seeds.push_back(f.seed + static_cast<std::uint64_t>(i));

  std::ofstream out(f.out);
  if (!out) throw io::IoError("cannot open " + f.out + " for writing");
  out << "axis,value,plateau_epsilon,fitted_rate,diverged,seeds\n";
  char buf[200];
  for (double v : values) {
    diagnostics::RunSetup setup = base;
    TruthFlags tf = f.truth;
    double xi = f.truth.noise;
    if (f.axis == "n") {
      if (v < 1 || v != static_cast<double>(static_cast<Index>(v)))
        throw UsageError("n values must be positive integers");
      setup.n = static_cast<Index>(v);
    } else if (f.axis == "xi") {
      if (v < 0) throw UsageError("noise levels must be non-negative");
      xi = v;
    } else {
      tf.spectrum = "cond:" + std::to_string(v);
    }
    try {
      setup.spectrum = spectrum_from(tf);
      setup.solver.d = setup.d;
      setup.solver.k = setup.k;
      setup.solver.n = setup.n;
      setup.solver.t_max = setup.t_max;
      setup.solver.validate();
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    const auto row = diagnostics::plateau_row(setup, xi);
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%ld,%ld\n", f.axis.c_str(), v,
                  row.plateau, row.envelope_rate.value_or(std::nan("")),
                  static_cast<long>(row.diverged), static_cast<long>(f.seeds));
    out << buf;
    std::cout << f.axis << "=" << fmt(v) << " plateau " << fmt(row.plateau) << " rate "
              << (row.envelope_rate ? fmt(*row.envelope_rate) : std::string("n/a")) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-Pass generalized factorization machine: training and diagnostics"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "sample a planted ground truth and optionally dump a batch");
  gen.truth.add_to(*gen_cmd, true);
  gen_cmd->add_option("--seed", gen.seed, "seed")->required();
  gen_cmd->add_option("--out", gen.out, "ground-truth JSON path")->capture_default_str();
  gen_cmd->add_option("--dump-batch", gen.dump_batch, "write one batch as CSV (y, x0..x{d-1})");
  gen_cmd->add_option("--n", gen.n, "batch size for --dump-batch");
  gen_cmd->add_option("--batch-index", gen.batch_index, "stream position of the dumped batch");

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "train on a planted stream and write checkpoint + trace");
  tr.truth.add_to(*train_cmd, false);
  train_cmd->add_option("--n", tr.n, "mini-batch size");
  train_cmd->add_option("--T", tr.t_max, "number of mini-batch updates");
  train_cmd->add_option("--seed", tr.seed, "seed (required)")->required();
  train_cmd->add_option("--config", tr.config, "flat JSON solver config; flags override it");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "checkpoint output")->capture_default_str();
  train_cmd->add_option("--trace", tr.trace, "trace CSV output")->capture_default_str();
  train_cmd->add_flag("--timings", tr.timings, "record wall-clock step times in the trace");
  train_cmd->add_option("--oversampling", tr.oversampling, "init oversampling")->capture_default_str();
  train_cmd->add_option("--power-iters", tr.power_iters, "init power iterations")->capture_default_str();

  EvalFlags ev;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint against its planted truth");
  ev.truth.add_to(*eval_cmd, false);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint to evaluate")->required();
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "truth seed (default: checkpoint seed)");
  eval_cmd->add_option("--n-test", ev.n_test, "held-out instances")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "JSON report path");

  VerifyFlags vf;
  auto* verify_cmd = app.add_subcommand("verify", "Monte-Carlo checks of the concentration bounds");
  verify_cmd->add_option("--lemma", vf.lemmas,
                         "trace_conc | first_order_mean | adjoint_cross | cross_term | covariance | shifted_rip");
  verify_cmd->add_flag("--all", vf.all, "run every check");
  verify_cmd->add_option("--d", vf.d)->capture_default_str();
  verify_cmd->add_option("--k", vf.k)->capture_default_str();
  verify_cmd->add_option("--n", vf.n, "smallest n of the n, 2n, 4n sweep")->capture_default_str();
  verify_cmd->add_option("--trials", vf.trials)->capture_default_str();
  verify_cmd->add_option("--seed", vf.seed, "seed (required)")->required();
  verify_cmd->add_option("--out-dir", vf.out_dir, "report directory")->capture_default_str();

  SweepFlags sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "train across an axis and tabulate plateau error and rate");
  sw.truth.add_to(*sweep_cmd, true);
  sweep_cmd->add_option("--axis", sw.axis, "n | xi | cond")->required();
  sweep_cmd->add_option("--values", sw.values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--n", sw.n, "mini-batch size (ignored on the n axis)");
  sweep_cmd->add_option("--T", sw.t_max, "number of mini-batch updates")->required();
  sweep_cmd->add_option("--seed", sw.seed, "first seed (required)")->required();
  sweep_cmd->add_option("--seeds", sw.seeds, "runs per axis value")->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "table CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*train_cmd) {
      if (tr.n <= 0 && tr.config.empty()) throw UsageError("train needs --n (or --config)");
      return cmd_train(tr, *train_cmd);
    }
    if (*eval_cmd) {
      if (*eval_seed_opt) ev.seed = eval_seed;
      return cmd_eval(ev);
    }
    if (*verify_cmd) return cmd_verify(vf);
    if (*sweep_cmd) return cmd_sweep(sw);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OracleCapExceeded& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
