#include "otsns/trace_csv.hpp"

#include <cstdio>

namespace otsns {

namespace {

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_trace_row(const TraceRecord& row, bool include_timing) {
  std::string line(to_string(row.stage));
  line += ',';
  line += std::to_string(row.iteration);
  line += ',';
  if (include_timing) line += real(row.elapsed_seconds);
  line += ',';
  line += real(row.potential_value);
  line += ',';
  line += real(row.marginal_kl);
  line += ',';
  line += real(row.l1_marginal_error);
  line += ',';
  if (row.hessian_sparsity) line += real(*row.hessian_sparsity);
  return line;
}

CsvTraceWriter::CsvTraceWriter(const std::filesystem::path& path) : out_(path), path_(path) {
  if (!out_) throw IoError("cannot open trace file " + path.string());
  out_ << kTraceHeader << '\n' << std::flush;
}

void CsvTraceWriter::record(const TraceRecord& row) {
  out_ << format_trace_row(row) << '\n' << std::flush;
  if (!out_) throw IoError("write failed: " + path_.string());
}

}  // namespace otsns
