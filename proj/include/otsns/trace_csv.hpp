#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "otsns/core.hpp"

namespace otsns {

inline constexpr const char* kTraceHeader =
    "stage,iteration,elapsed_seconds,potential_value,marginal_kl,l1_marginal_error,"
    "hessian_sparsity";

/// One CSV line (no newline). Reals use 17 significant digits; an absent
/// sparsity is an empty field. With include_timing=false the elapsed field is
/// left empty, which makes rows comparable across runs.
std::string format_trace_row(const TraceRecord& row, bool include_timing = true);

/// Streams records to a CSV file, flushing after every row.
class CsvTraceWriter final : public TraceSink {
 public:
  explicit CsvTraceWriter(const std::filesystem::path& path);
  void record(const TraceRecord& row) override;

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

/// Forwards every record to two sinks.
class TeeTrace final : public TraceSink {
 public:
  TeeTrace(TraceSink& a, TraceSink& b) : a_(a), b_(b) {}
  void record(const TraceRecord& row) override {
    a_.record(row);
    b_.record(row);
  }

 private:
  TraceSink& a_;
  TraceSink& b_;
};

}  // namespace otsns
