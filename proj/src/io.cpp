#include "gfm/io.hpp"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iterator>
#include <sstream>

namespace gfm::io {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  template <typename Derived>
  void fill(Eigen::PlainObjectBase<Derived>& m) {
    double* data = m.data();
    for (Index i = 0; i < m.size(); ++i) data[i] = f64();
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 4;
};

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& field, const std::filesystem::path& path, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size() || (errno == ERANGE && std::isinf(v)))
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

std::ofstream open_for_write(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open " + path.string() + " for writing: " + std::strerror(errno));
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const GfmModeld& model, const CheckpointMeta& meta) {
  model.check_shape();
  const auto& c = meta.config;
  std::vector<std::uint8_t> out;
  out.reserve(kCheckpointHeaderBytes + 8 * static_cast<std::size_t>(model.w.size() + 2 * model.u.size()));
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, static_cast<std::uint64_t>(model.dim()));
  put_u64(out, static_cast<std::uint64_t>(model.rank()));
  put_u64(out, static_cast<std::uint64_t>(c.n));
  put_u64(out, static_cast<std::uint64_t>(c.t_max));
  put_u64(out, c.seed);
  put_u64(out, static_cast<std::uint64_t>(meta.batches_consumed));
  put_u64(out, static_cast<std::uint64_t>(c.init_oversampling));
  put_u64(out, static_cast<std::uint64_t>(c.init_power_iters));
  put_u64(out, static_cast<std::uint64_t>(c.spectral_max_iters));
  put_f64(out, c.spectral_tol);
  put_f64(out, c.converge_rel_tol);
  for (Index i = 0; i < model.w.size(); ++i) put_f64(out, model.w.data()[i]);
  for (Index i = 0; i < model.u.size(); ++i) put_f64(out, model.u.data()[i]);
  for (Index i = 0; i < model.v.size(); ++i) put_f64(out, model.v.data()[i]);
  return out;
}

std::pair<GfmModeld, CheckpointMeta> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 4) throw CheckpointError(Kind::truncated, "checkpoint truncated before magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError(Kind::bad_magic, "not a checkpoint: bad magic bytes");
  if (bytes.size() < 8) throw CheckpointError(Kind::truncated, "checkpoint truncated in header");
  Reader in(bytes);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  if (bytes.size() < kCheckpointHeaderBytes)
    throw CheckpointError(Kind::truncated, "checkpoint truncated in header");

  const std::uint64_t d = in.u64();
  const std::uint64_t k = in.u64();
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 40;
  if (d == 0 || k == 0 || k >= d || d > kLimit || k * d > kLimit)
    throw CheckpointError(Kind::corrupt, "checkpoint has implausible dimensions");
  const std::uint64_t expected = kCheckpointHeaderBytes + 8 * d * (1 + 2 * k);
  if (bytes.size() < expected)
    throw CheckpointError(Kind::truncated, "checkpoint truncated: " + std::to_string(bytes.size()) +
                                               " of " + std::to_string(expected) + " bytes");
  if (bytes.size() > expected)
    throw CheckpointError(Kind::corrupt, "checkpoint has trailing bytes");

  CheckpointMeta meta;
  auto& c = meta.config;
  c.d = static_cast<Index>(d);
  c.k = static_cast<Index>(k);
  c.n = static_cast<Index>(in.u64());
  c.t_max = static_cast<Index>(in.u64());
  c.seed = in.u64();
  meta.batches_consumed = static_cast<Index>(in.u64());
  c.init_oversampling = static_cast<Index>(in.u64());
  c.init_power_iters = static_cast<Index>(in.u64());
  c.spectral_max_iters = static_cast<Index>(in.u64());
  c.spectral_tol = in.f64();
  c.converge_rel_tol = in.f64();

  GfmModeld model = GfmModeld::zero(c.d, c.k);
  in.fill(model.w);
  in.fill(model.u);
  in.fill(model.v);
  return {std::move(model), meta};
}

void save_checkpoint(const GfmModeld& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model, meta);
  auto out = open_for_write(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::pair<GfmModeld, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string format_trace_row(const TraceRecord& r, const TraceWriteOptions& opts) {
  std::string row = std::to_string(r.t);
  for (double v : {r.beta, r.gamma, r.epsilon, r.alpha, r.h2, opts.timings ? r.step_millis : 0.0}) {
    row += ',';
    row += format_number(v);
  }
  return row;
}

void write_trace(const ConvergenceTrace& trace, const std::filesystem::path& path,
                 const TraceWriteOptions& opts) {
  auto out = open_for_write(path, std::ios::trunc);
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) out << format_trace_row(r, opts) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

ConvergenceTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw IoError(path.string() + ": missing or unexpected trace header");
  ConvergenceTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    TraceRecord r;
    r.t = static_cast<Index>(parse_number(fields[0], path, lineno));
    r.beta = parse_number(fields[1], path, lineno);
    r.gamma = parse_number(fields[2], path, lineno);
    r.epsilon = parse_number(fields[3], path, lineno);
    r.alpha = parse_number(fields[4], path, lineno);
    r.h2 = parse_number(fields[5], path, lineno);
    r.step_millis = parse_number(fields[6], path, lineno);
    trace.records.push_back(r);
  }
  return trace;
}

CsvTraceSink::CsvTraceSink(const std::filesystem::path& path, TraceWriteOptions opts)
    : path_(path), out_(open_for_write(path, std::ios::trunc)), opts_(opts) {
  out_ << kTraceHeader << '\n';
}

void CsvTraceSink::on_record(const TraceRecord& record) {
  out_ << format_trace_row(record, opts_) << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing " + path_.string());
}

nlohmann::json to_json(const SolverConfig& c) {
  return {{"d", c.d},
          {"k", c.k},
          {"n", c.n},
          {"t_max", c.t_max},
          {"seed", c.seed},
          {"init_oversampling", c.init_oversampling},
          {"init_power_iters", c.init_power_iters},
          {"spectral_tol", c.spectral_tol},
          {"spectral_max_iters", c.spectral_max_iters},
          {"converge_rel_tol", c.converge_rel_tol}};
}

SolverConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw IoError("config must be a JSON object");
  SolverConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "d") c.d = value.get<Index>();
      else if (key == "k") c.k = value.get<Index>();
      else if (key == "n") c.n = value.get<Index>();
      else if (key == "t_max") c.t_max = value.get<Index>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "init_oversampling") c.init_oversampling = value.get<Index>();
      else if (key == "init_power_iters") c.init_power_iters = value.get<Index>();
      else if (key == "spectral_tol") c.spectral_tol = value.get<double>();
      else if (key == "spectral_max_iters") c.spectral_max_iters = value.get<Index>();
      else if (key == "converge_rel_tol") c.converge_rel_tol = value.get<double>();
      else throw IoError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw IoError("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

void save_config(const SolverConfig& cfg, const std::filesystem::path& path) {
  write_report(to_json(cfg), path);
}

SolverConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

nlohmann::json to_json(const diagnostics::ConcentrationReport& r) {
  return {{"kind", "concentration"},
          {"lemma", r.lemma},
          {"d", r.d},
          {"k", r.k},
          {"trials", r.trials},
          {"n_values", r.n_values},
          {"median_deviation", r.median_deviation},
          {"deviations", r.deviations},
          {"fitted_exponent", r.fitted_exponent},
          {"predicted_exponent", r.predicted_exponent},
          {"exponent_tolerance", diagnostics::kExponentTolerance},
          {"pass", r.pass}};
}

nlohmann::json to_json(const diagnostics::RipReport& r) {
  nlohmann::json estimates = nlohmann::json::array();
  std::vector<Index> ns;
  std::vector<double> deltas;
  for (const auto& e : r.estimates) {
    ns.push_back(e.n);
    deltas.push_back(e.delta_hat);
    estimates.push_back({{"n", e.n}, {"delta_hat", e.delta_hat}, {"per_trial", e.per_trial}});
  }
  return {{"kind", "rip"},
          {"lemma", "shifted_rip"},
          {"d", r.d},
          {"k", r.k},
          {"trials", r.trials},
          {"n_values", ns},
          {"median_deviation", deltas},
          {"estimates", estimates},
          {"fitted_exponent", r.fitted_exponent},
          {"predicted_exponent", r.predicted_exponent},
          {"exponent_tolerance", diagnostics::kExponentTolerance},
          {"pass", r.pass}};
}

nlohmann::json to_json(const std::vector<diagnostics::FloorRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = {{"xi", row.xi},
                        {"residual_norm", row.residual_norm},
                        {"plateau", row.plateau},
                        {"per_seed", row.per_seed},
                        {"diverged", row.diverged}};
    j["envelope_rate"] = row.envelope_rate ? nlohmann::json(*row.envelope_rate) : nlohmann::json(nullptr);
    out.push_back(std::move(j));
  }
  return {{"kind", "floor"}, {"rows", out}};
}

void write_report(const nlohmann::json& report, const std::filesystem::path& path) {
  auto out = open_for_write(path, std::ios::trunc);
  out << report.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace gfm::io
