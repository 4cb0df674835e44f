#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace unlearn {

/// One logged measurement. CSV columns: step,epoch,split,metric,value,grad_norm.
struct TraceRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
  double grad_norm = 0.0;

  bool operator==(const TraceRow&) const = default;
};

struct MetricTrace {
  std::vector<TraceRow> rows;

  /// Appends a row; steps must be nondecreasing and values finite.
  void add(TraceRow row);
  /// Rows with the given split and metric, in order.
  std::vector<TraceRow> select(std::string_view split, std::string_view metric) const;

  bool operator==(const MetricTrace&) const = default;
};

void write_trace_csv(std::ostream& out, const MetricTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const MetricTrace& trace);
MetricTrace read_trace_csv(std::istream& in);
MetricTrace read_trace_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace unlearn
