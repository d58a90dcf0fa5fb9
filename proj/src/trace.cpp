#include "tesim/trace.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <system_error>

namespace tesim {

namespace {

constexpr std::string_view kRateKey = "sample_rate_Hz";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw TraceParseError(line, "bad number '" + std::string(s) + "' in column " +
                                    std::string(column));
  return v;
}

}  // namespace

std::string_view to_string(TraceChannel channel) {
  switch (channel) {
    case TraceChannel::Commanded: return "commanded_mA";
    case TraceChannel::Actual: return "actual_mA";
    case TraceChannel::VBody: return "v_body_V";
  }
  return "?";
}

void Trace::resize(std::size_t n) {
  commanded_mA.resize(n);
  actual_mA.resize(n);
  v_body_V.resize(n);
  compliant.resize(n);
}

const std::vector<double>& Trace::channel(TraceChannel c) const {
  switch (c) {
    case TraceChannel::Commanded: return commanded_mA;
    case TraceChannel::Actual: return actual_mA;
    case TraceChannel::VBody: return v_body_V;
  }
  return actual_mA;
}

void Trace::check() const {
  if (!(sample_rate_Hz > 0))
    throw std::invalid_argument("trace sample rate must be positive");
  const std::size_t n = commanded_mA.size();
  if (actual_mA.size() != n || v_body_V.size() != n || compliant.size() != n)
    throw std::invalid_argument("trace channels differ in length");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_trace_csv(const Trace& t, std::ostream& out) {
  t.check();
  out << '#' << kRateKey << '=' << format_double(t.sample_rate_Hz) << '\n';
  for (const auto& [key, value] : t.meta) {
    if (key == kRateKey) continue;
    if (key.find_first_of("=\n\r") != std::string::npos ||
        value.find_first_of("\n\r") != std::string::npos)
      throw std::invalid_argument("trace metadata '" + key +
                                  "' cannot be written on one line");
    out << '#' << key << '=' << value << '\n';
  }
  out << kTraceHeader << '\n';
  std::string row;
  for (std::size_t i = 0; i < t.size(); ++i) {
    row.clear();
    row += format_double(t.time_s(i));
    row += ',';
    row += format_double(t.commanded_mA[i]);
    row += ',';
    row += format_double(t.actual_mA[i]);
    row += ',';
    row += format_double(t.v_body_V[i]);
    row += t.compliant[i] ? ",1\n" : ",0\n";
    out << row;
  }
}

void write_trace_csv(const Trace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  write_trace_csv(t, out);
  out.flush();
  if (!out) throw std::system_error(errno, std::generic_category(), "write failed: " + path);
}

Trace read_trace_csv(std::istream& in) {
  Trace t;
  bool have_rate = false;
  bool have_header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (!line.empty() && line.front() == '#') {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
          throw TraceParseError(lineno, "metadata line without '='");
        std::string key = line.substr(1, eq - 1);
        std::string value = line.substr(eq + 1);
        if (key == kRateKey) {
          t.sample_rate_Hz = parse_double(value, lineno, kRateKey);
          have_rate = true;
        } else {
          t.meta.emplace_back(std::move(key), std::move(value));
        }
        continue;
      }
      if (line != kTraceHeader)
        throw TraceParseError(lineno, "expected header '" + std::string(kTraceHeader) + "'");
      if (!have_rate) throw TraceParseError(lineno, "missing #sample_rate_Hz metadata before header");
      have_header = true;
      continue;
    }
    if (line.empty()) throw TraceParseError(lineno, "empty row");
    const auto cols = split_commas(line);
    if (cols.size() != 5)
      throw TraceParseError(lineno, "expected 5 columns, found " +
                                        std::to_string(cols.size()));
    parse_double(cols[0], lineno, "t_s");
    t.commanded_mA.push_back(parse_double(cols[1], lineno, "commanded_mA"));
    t.actual_mA.push_back(parse_double(cols[2], lineno, "actual_mA"));
    t.v_body_V.push_back(parse_double(cols[3], lineno, "v_body_V"));
    if (cols[4] == "1") {
      t.compliant.push_back(1);
    } else if (cols[4] == "0") {
      t.compliant.push_back(0);
    } else {
      throw TraceParseError(lineno, "compliant must be 0 or 1");
    }
  }
  if (!have_header) throw TraceParseError(lineno, "missing header line");
  if (!have_rate) throw TraceParseError(lineno, "missing #sample_rate_Hz metadata");
  if (!(t.sample_rate_Hz > 0))
    throw TraceParseError(lineno, "sample rate must be positive");
  return t;
}

Trace read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  return read_trace_csv(in);
}

}  // namespace tesim
