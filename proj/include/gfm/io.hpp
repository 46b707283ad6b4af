#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfm/diagnostics.hpp"
#include "gfm/model.hpp"
#include "gfm/solver.hpp"

namespace gfm::io {

inline constexpr char kCheckpointMagic[4] = {'G', 'F', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 96;

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public IoError {
 public:
  enum class Kind { bad_magic, truncated, version_mismatch, corrupt };
  CheckpointError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointMeta {
  SolverConfig config;
  Index batches_consumed = 0;
};

// Layout (all little-endian): magic "GFM1" | version u32 | d u64 | k u64 |
// n u64 | t_max u64 | seed u64 | batches_consumed u64 | init_oversampling u64 |
// init_power_iters u64 | spectral_max_iters u64 | spectral_tol f64 |
// converge_rel_tol f64 | w[d] | U[d*k] | V[d*k], arrays column-major f64.
std::vector<std::uint8_t> encode_checkpoint(const GfmModeld& model, const CheckpointMeta& meta);
std::pair<GfmModeld, CheckpointMeta> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const GfmModeld& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
std::pair<GfmModeld, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

struct TraceWriteOptions {
  // When false the step_millis column is written as 0 so that files are
  // reproducible byte for byte.
  bool timings = true;
};

inline constexpr const char* kTraceHeader = "t,beta,gamma,epsilon,alpha,h2,step_millis";

std::string format_trace_row(const TraceRecord& r, const TraceWriteOptions& opts = {});
void write_trace(const ConvergenceTrace& trace, const std::filesystem::path& path,
                 const TraceWriteOptions& opts = {});
ConvergenceTrace read_trace(const std::filesystem::path& path);

// Appends one CSV row per record as the solver emits it.
class CsvTraceSink final : public TraceSink {
 public:
  explicit CsvTraceSink(const std::filesystem::path& path, TraceWriteOptions opts = {});
  void on_record(const TraceRecord& record) override;

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  TraceWriteOptions opts_;
};

nlohmann::json to_json(const SolverConfig& cfg);
SolverConfig config_from_json(const nlohmann::json& j);
void save_config(const SolverConfig& cfg, const std::filesystem::path& path);
SolverConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const diagnostics::ConcentrationReport& report);
nlohmann::json to_json(const diagnostics::RipReport& report);
nlohmann::json to_json(const std::vector<diagnostics::FloorRow>& rows);
void write_report(const nlohmann::json& report, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace gfm::io
