#include "unlearn/trace.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "unlearn/error.hpp"

namespace unlearn {

void MetricTrace::add(TraceRow row) {
  if (!rows.empty() && row.step < rows.back().step) throw Error("trace steps must be nondecreasing");
  if (!std::isfinite(row.value)) throw Error("non-finite trace value for " + row.metric);
  rows.push_back(std::move(row));
}

std::vector<TraceRow> MetricTrace::select(std::string_view split, std::string_view metric) const {
  std::vector<TraceRow> out;
  for (const auto& r : rows)
    if (r.split == split && r.metric == metric) out.push_back(r);
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error("cannot format double");
  return std::string(buf, end);
}

void write_trace_csv(std::ostream& out, const MetricTrace& trace) {
  out << "step,epoch,split,metric,value,grad_norm\n";
  for (const auto& r : trace.rows)
    out << r.step << ',' << r.epoch << ',' << r.split << ',' << r.metric << ',' << format_double(r.value) << ','
        << format_double(r.grad_norm) << '\n';
}

void write_trace_csv(const std::filesystem::path& path, const MetricTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_trace_csv(out, trace);
}

namespace {

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw Error("trace line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  return value;
}

}  // namespace

MetricTrace read_trace_csv(std::istream& in) {
  MetricTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!header) {
      // Leading '#' lines carry run metadata.
      if (line.starts_with('#')) continue;
      if (line != "step,epoch,split,metric,value,grad_norm") throw Error("unexpected trace header");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 6) throw Error("trace line " + std::to_string(line_no) + ": expected 6 fields");
    TraceRow row;
    row.step = parse_number<std::size_t>(fields[0], line_no);
    row.epoch = parse_number<std::size_t>(fields[1], line_no);
    row.split = fields[2];
    row.metric = fields[3];
    row.value = parse_number<double>(fields[4], line_no);
    row.grad_norm = parse_number<double>(fields[5], line_no);
    trace.add(std::move(row));
  }
  return trace;
}

MetricTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_trace_csv(in);
}

}  // namespace unlearn
