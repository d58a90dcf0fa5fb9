#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tesim {

enum class TraceChannel { Commanded, Actual, VBody };

std::string_view to_string(TraceChannel channel);

// Uniformly sampled record of one rendered session.
struct Trace {
  double sample_rate_Hz = 0.0;
  std::vector<double> commanded_mA;
  std::vector<double> actual_mA;
  std::vector<double> v_body_V;
  std::vector<std::uint8_t> compliant;
  std::vector<std::pair<std::string, std::string>> meta;

  std::size_t size() const { return commanded_mA.size(); }
  double time_s(std::size_t i) const {
    return static_cast<double>(i) / sample_rate_Hz;
  }
  void resize(std::size_t n);
  const std::vector<double>& channel(TraceChannel c) const;

  // Throws std::invalid_argument when channel lengths disagree or the rate
  // is not positive.
  void check() const;

  bool operator==(const Trace&) const = default;
};

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline constexpr std::string_view kTraceHeader =
    "t_s,commanded_mA,actual_mA,v_body_V,compliant";

void write_trace_csv(const Trace& t, std::ostream& out);
void write_trace_csv(const Trace& t, const std::string& path);
Trace read_trace_csv(std::istream& in);
Trace read_trace_csv(const std::string& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace tesim
