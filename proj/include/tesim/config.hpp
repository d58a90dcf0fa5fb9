#pragma once

// Session config files:
//
//   # comment
//   [stim]
//   mode = tdcs
//   intensity_mA = 2.0
//   dose_s = 1200
//   [circuit]
//   r_body_ohm = 10000
//
// Keys are case-sensitive and unknown keys are errors.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tesim/analog_stage.hpp"
#include "tesim/waveform.hpp"

namespace tesim {

struct SessionConfig {
  StimParams stim;
  CircuitParams circuit;

  bool operator==(const SessionConfig&) const = default;
};

struct ConfigIssue {
  std::size_t line = 0;
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

// Required: stim.mode, stim.intensity_mA, stim.dose_s. Throws ConfigError
// carrying every problem found.
SessionConfig parse_session_config(std::string_view text);
SessionConfig load_session_config(const std::string& path);

// Emits a config that parses back to `cfg`.
std::string format_session_config(const SessionConfig& cfg);

std::vector<std::string> stim_config_keys();
std::vector<std::string> circuit_config_keys();

}  // namespace tesim
