#pragma once

// Stimulation prescriptions and event-exact schedule generation for the
// five output modes (tDCS, tPCS, CES, MET, tRNS).
//
// All scheduling runs on an integer microsecond time base. Intensity is
// quantized to the 0.1 mA resolution of the output DAC; levels are carried
// internally as integer tenths of a milliamp.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tesim/trace.hpp"

namespace tesim {

enum class StimMode { TDCS, TPCS, CES, MET, TRNS };

enum class PulsePattern { Continuous, Random, FM, Burst };

std::string_view to_string(StimMode mode);
std::string_view to_string(PulsePattern pattern);
std::optional<StimMode> parse_stim_mode(std::string_view text);
std::optional<PulsePattern> parse_pulse_pattern(std::string_view text);

struct BurstConfig {
  double burst_freq_Hz = 2.0;  // f_B
  int chain_count = 3;         // N, pulses per burst
  // Rate of the chained pulses; freq_hi when unset.
  std::optional<double> chain_freq_Hz;

  bool operator==(const BurstConfig&) const = default;
};

inline constexpr std::uint64_t kDefaultSeed = 20200101;

struct StimParams {
  StimMode mode = StimMode::TDCS;
  double intensity_mA = 1.0;
  double ramp_rate_mA_per_min = 1.0;
  double dose_s = 1200.0;
  double freq_lo_Hz = 10.0;
  double freq_hi_Hz = 10.0;
  double duty_pct = 50.0;
  PulsePattern pattern = PulsePattern::Continuous;
  std::optional<BurstConfig> burst;  // present iff pattern == Burst (CES)
  bool sham = false;
  std::uint64_t seed = kDefaultSeed;
  int fm_steps = 16;  // frequencies per FM half-cycle

  bool operator==(const StimParams&) const = default;
};

// Hard limits of the device.
namespace limits {
inline constexpr double kMinIntensity_mA = 0.1;
inline constexpr double kMaxIntensity_mA = 4.0;
inline constexpr double kIntensityStep_mA = 0.1;
inline constexpr double kMinFreq_Hz = 0.5;
inline constexpr double kMaxFreq_Hz = 1000.0;
inline constexpr double kMinDuty_pct = 10.0;
inline constexpr double kMaxDuty_pct = 90.0;
inline constexpr double kMinBurstFreq_Hz = 1.0;
inline constexpr double kMaxBurstFreq_Hz = 20.0;
inline constexpr int kMinChainCount = 2;
inline constexpr int kMaxChainCount = 15;
inline constexpr double kLatticeTolerance = 1e-9;
}  // namespace limits

// Fixed MET prescription. Only intensity, ramp, dose, sham and seed come
// from the user.
namespace met {
inline constexpr double kFreq_Hz = 0.5;
inline constexpr double kDuty_pct = 1.0;
inline constexpr PulsePattern kPattern = PulsePattern::Continuous;
}  // namespace met

// tRNS synthesis constants.
namespace trns {
inline constexpr int kFilterOrder = 4;
inline constexpr double kFilterCorner_Hz = 250.0;
inline constexpr double kBandLimit_Hz = 300.0;
inline constexpr double kMinBandEnergy = 0.95;
inline constexpr double kMinSampleRate_Hz = 2000.0;
}  // namespace trns

struct Violation {
  std::string field;
  double value = 0.0;
  std::string rule;   // what was broken
  std::string legal;  // legal range, human readable

  std::string message() const;
};

struct Validation;
struct ValidationOptions;

class ValidatedParams {
 public:
  const StimParams& get() const { return params_; }
  const StimParams* operator->() const { return &params_; }

 private:
  explicit ValidatedParams(StimParams p) : params_(std::move(p)) {}
  StimParams params_;

  friend Validation validate_params(const StimParams&, ValidationOptions);
};

struct Validation {
  std::optional<ValidatedParams> value;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool ok() const { return value.has_value(); }
};

struct ValidationOptions {
  // Exact 0.0 mA intensity is accepted only on internal sham paths.
  bool allow_zero_intensity = false;
};

// Checks every StimParams/BurstConfig invariant and reports all violations.
Validation validate_params(const StimParams& p, ValidationOptions opts = {});

// Intensity in integer tenths of a milliamp (0.1 mA DAC steps).
int intensity_tenths(double intensity_mA);
inline double tenths_to_mA(int tenths) { return tenths / 10.0; }

struct SessionTiming {
  std::int64_t warmup_us = 0;
  std::int64_t dose_us = 0;
  std::int64_t cooldown_us = 0;
  int steps = 0;  // 0.1 mA steps from zero to the plateau

  std::int64_t dose_start_us() const { return warmup_us; }
  std::int64_t dose_end_us() const { return warmup_us + dose_us; }
  std::int64_t total_us() const { return warmup_us + dose_us + cooldown_us; }
};

SessionTiming session_timing(const StimParams& p);

// Ramp duration for `tenths` DAC steps at `rate_mA_per_min`.
std::int64_t ramp_duration_us(int tenths, double rate_mA_per_min);

// Level of a stepped ramp between two DAC levels. The ramp is split into
// |to - from| equal slots; rising ramps take their step at the start of a
// slot, falling ramps at the end, so a rise and its mirror-image fall are
// time reversals of each other.
int stepped_ramp_tenths(int from, int to, std::int64_t duration_us,
                        std::int64_t offset_us);

// Piecewise-linear commanded envelope (ramp, plateau, ramp). Sham zeroes the
// plateau only. Throws std::domain_error outside [0, total].
double intensity_envelope(double t_s, const ValidatedParams& p);

// The same envelope as delivered by the DAC: quantized to 0.1 mA steps.
double stepped_envelope_mA(std::int64_t t_us, const ValidatedParams& p);

double duty_cycle_pct(double t_on_us, double t_off_us);
double pulse_frequency_Hz(double t_on_us, double t_off_us);

struct OutputEvent {
  std::int64_t t_start_us = 0;
  std::int64_t duration_us = 0;
  int polarity = 1;
  double amplitude_mA = 0.0;

  std::int64_t end_us() const { return t_start_us + duration_us; }
  double signed_mA() const { return polarity * amplitude_mA; }
  bool operator==(const OutputEvent&) const = default;
};

struct EventSchedule {
  StimParams params;
  std::vector<OutputEvent> events;
  std::int64_t total_duration_us = 0;
  std::vector<std::pair<std::string, std::string>> metadata;

  bool operator==(const EventSchedule&) const = default;
};

// Highest pulse rate the schedule contains, 0 for DC.
double schedule_max_freq_Hz(const EventSchedule& s);

// Triangular FM sequence for one cycle: n_steps values ascending from lo to
// hi, then descending without repeating either endpoint.
std::vector<double> fm_schedule(double freq_lo_Hz, double freq_hi_Hz,
                                int n_steps);

EventSchedule gen_tdcs(const ValidatedParams& p);
EventSchedule gen_tpcs(const ValidatedParams& p);
EventSchedule gen_ces(const ValidatedParams& p);
EventSchedule gen_met(const ValidatedParams& p);

// Dispatches on mode. tRNS has no event structure and is rejected.
EventSchedule generate_schedule(const ValidatedParams& p);

// Pulse timing (polarity and ON/OFF) continued up to `horizon_us`; used by
// the session engine, whose cool-down may outlast the prescribed schedule.
EventSchedule generate_schedule_until(const ValidatedParams& p,
                                      std::int64_t horizon_us);

// The CES prescription a MET session actually runs.
StimParams met_effective_params(const StimParams& p);

Trace gen_trns(const ValidatedParams& p, double sample_rate_Hz);

// Streaming band-limited Gaussian noise with unit RMS. Produces the same
// sequence as gen_trns for a given seed and rate.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, double sample_rate_Hz);
  double next();
  std::uint64_t samples_emitted() const { return emitted_; }

 private:
  struct Biquad {
    double b0, b1, b2, a1, a2;
    double z1 = 0.0, z2 = 0.0;
    double step(double x);
  };

  double next_gaussian();

  std::mt19937_64 rng_;
  std::vector<Biquad> sections_;
  double gain_ = 1.0;
  std::optional<double> spare_;
  std::uint64_t emitted_ = 0;
};

std::vector<std::pair<std::string, std::string>> params_metadata(
    const StimParams& p);

inline constexpr std::string_view kGeneratorVersion = "tesim-waveform/1";

}  // namespace tesim
