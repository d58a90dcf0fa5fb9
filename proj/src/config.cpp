#include "tesim/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

namespace tesim {

namespace {

using Setter = std::function<std::optional<std::string>(SessionConfig&, std::string_view)>;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_double(std::string_view s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  Int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

Setter real(double StimParams::*field) {
  return [field](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
    auto d = to_double(v);
    if (!d) return "expected a number";
    c.stim.*field = *d;
    return std::nullopt;
  };
}

Setter circuit_real(double CircuitParams::*field) {
  return [field](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
    auto d = to_double(v);
    if (!d) return "expected a number";
    c.circuit.*field = *d;
    return std::nullopt;
  };
}

BurstConfig& burst_of(SessionConfig& c) {
  if (!c.stim.burst) c.stim.burst.emplace();
  return *c.stim.burst;
}

const std::map<std::string, Setter, std::less<>>& stim_setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"mode",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto m = parse_stim_mode(v);
         if (!m) return "expected one of tdcs, tpcs, ces, met, trns";
         c.stim.mode = *m;
         return std::nullopt;
       }},
      {"intensity_mA", real(&StimParams::intensity_mA)},
      {"ramp_rate_mA_per_min", real(&StimParams::ramp_rate_mA_per_min)},
      {"dose_s", real(&StimParams::dose_s)},
      {"freq_lo_Hz", real(&StimParams::freq_lo_Hz)},
      {"freq_hi_Hz", real(&StimParams::freq_hi_Hz)},
      {"duty_pct", real(&StimParams::duty_pct)},
      {"pattern",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto p = parse_pulse_pattern(v);
         if (!p) return "expected one of continuous, random, fm, burst";
         c.stim.pattern = *p;
         return std::nullopt;
       }},
      {"burst_freq_Hz",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto d = to_double(v);
         if (!d) return "expected a number";
         burst_of(c).burst_freq_Hz = *d;
         return std::nullopt;
       }},
      {"chain_count",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto n = to_int<int>(v);
         if (!n) return "expected an integer";
         burst_of(c).chain_count = *n;
         return std::nullopt;
       }},
      {"chain_freq_Hz",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto d = to_double(v);
         if (!d) return "expected a number";
         burst_of(c).chain_freq_Hz = *d;
         return std::nullopt;
       }},
      {"fm_steps",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto n = to_int<int>(v);
         if (!n) return "expected an integer";
         c.stim.fm_steps = *n;
         return std::nullopt;
       }},
      {"sham",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         if (v == "true") {
           c.stim.sham = true;
         } else if (v == "false") {
           c.stim.sham = false;
         } else {
           return "expected true or false";
         }
         return std::nullopt;
       }},
      {"seed",
       [](SessionConfig& c, std::string_view v) -> std::optional<std::string> {
         auto n = to_int<std::uint64_t>(v);
         if (!n) return "expected an unsigned 64-bit integer";
         c.stim.seed = *n;
         return std::nullopt;
       }},
  };
  return table;
}

const std::map<std::string, Setter, std::less<>>& circuit_setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"v_supply_V", circuit_real(&CircuitParams::v_supply_V)},
      {"v_cc_V", circuit_real(&CircuitParams::v_cc_V)},
      {"v_be_on_V", circuit_real(&CircuitParams::v_be_on_V)},
      {"v_ce_sat_V", circuit_real(&CircuitParams::v_ce_sat_V)},
      {"r_e_ohm", circuit_real(&CircuitParams::r_e_ohm)},
      {"v_early_V", circuit_real(&CircuitParams::v_early_V)},
      {"r_body_ohm", circuit_real(&CircuitParams::r_body_ohm)},
  };
  return table;
}

std::string join_issues(const std::vector<ConfigIssue>& issues) {
  std::ostringstream os;
  for (std::size_t i = 0; i < issues.size(); ++i) {
    if (i) os << '\n';
    os << "line " << issues[i].line << ": " << issues[i].message;
  }
  return os.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

SessionConfig parse_session_config(std::string_view text) {
  SessionConfig cfg;
  std::vector<ConfigIssue> issues;
  enum class Section { None, Stim, Circuit } section = Section::None;
  std::set<std::string> seen_stim, seen_circuit;
  std::size_t lineno = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line == "[stim]") {
        section = Section::Stim;
      } else if (line == "[circuit]") {
        section = Section::Circuit;
      } else {
        issues.push_back({lineno, "unknown section " + std::string(line)});
        section = Section::None;
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      issues.push_back({lineno, "expected 'key = value'"});
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section == Section::None) {
      issues.push_back({lineno, "key '" + key + "' outside a [stim] or [circuit] section"});
      continue;
    }
    const auto& table = section == Section::Stim ? stim_setters() : circuit_setters();
    auto& seen = section == Section::Stim ? seen_stim : seen_circuit;
    const auto it = table.find(key);
    if (it == table.end()) {
      issues.push_back({lineno, "unknown key '" + key + "' in [" +
                                    (section == Section::Stim ? "stim" : "circuit") + "]"});
      continue;
    }
    if (!seen.insert(key).second) {
      issues.push_back({lineno, "duplicate key '" + key + "'"});
      continue;
    }
    if (value.empty()) {
      issues.push_back({lineno, "missing value for '" + key + "'"});
      continue;
    }
    if (auto err = it->second(cfg, value))
      issues.push_back({lineno, key + ": " + *err + ", got '" + std::string(value) + "'"});
  }

  for (const char* required : {"mode", "intensity_mA", "dose_s"})
    if (!seen_stim.count(required))
      issues.push_back({lineno, std::string("missing required key '") + required + "' in [stim]"});
  if (seen_stim.count("burst_freq_Hz") != seen_stim.count("chain_count"))
    issues.push_back({lineno, "burst_freq_Hz and chain_count must be given together"});

  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

SessionConfig load_session_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_session_config(ss.str());
}

std::string format_session_config(const SessionConfig& cfg) {
  const StimParams& s = cfg.stim;
  const CircuitParams& c = cfg.circuit;
  std::ostringstream os;
  os << "[stim]\n"
     << "mode = " << to_string(s.mode) << '\n'
     << "intensity_mA = " << format_double(s.intensity_mA) << '\n'
     << "ramp_rate_mA_per_min = " << format_double(s.ramp_rate_mA_per_min) << '\n'
     << "dose_s = " << format_double(s.dose_s) << '\n'
     << "freq_lo_Hz = " << format_double(s.freq_lo_Hz) << '\n'
     << "freq_hi_Hz = " << format_double(s.freq_hi_Hz) << '\n'
     << "duty_pct = " << format_double(s.duty_pct) << '\n'
     << "pattern = " << to_string(s.pattern) << '\n';
  if (s.burst) {
    os << "burst_freq_Hz = " << format_double(s.burst->burst_freq_Hz) << '\n'
       << "chain_count = " << s.burst->chain_count << '\n';
    if (s.burst->chain_freq_Hz)
      os << "chain_freq_Hz = " << format_double(*s.burst->chain_freq_Hz) << '\n';
  }
  os << "fm_steps = " << s.fm_steps << '\n'
     << "sham = " << (s.sham ? "true" : "false") << '\n'
     << "seed = " << s.seed << '\n'
     << "\n[circuit]\n";
  for (const auto& [k, v] : circuit_metadata(c)) os << k << " = " << v << '\n';
  return os.str();
}

std::vector<std::string> stim_config_keys() {
  std::vector<std::string> keys;
  for (const auto& kv : stim_setters()) keys.push_back(kv.first);
  return keys;
}

std::vector<std::string> circuit_config_keys() {
  std::vector<std::string> keys;
  for (const auto& kv : circuit_setters()) keys.push_back(kv.first);
  return keys;
}

}  // namespace tesim
