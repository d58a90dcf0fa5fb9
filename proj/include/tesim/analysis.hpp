#pragma once

// Oscilloscope-style measurements on rendered traces.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "tesim/trace.hpp"

namespace tesim {

struct DetectedPulse {
  double t_start_s = 0.0;
  double duration_s = 0.0;
  int polarity = 1;
  double amplitude_mA = 0.0;  // median |x| over the run
  std::size_t first_sample = 0;
  std::size_t sample_count = 0;
};

// Half the smallest DAC step.
inline constexpr double kDefaultPulseThreshold_mA = 0.05;

// Runs of |x| >= threshold. A single below-threshold sample between two
// same-sign samples does not end a run; a sign change always does.
std::vector<DetectedPulse> detect_pulses(
    const Trace& t, double threshold_mA = kDefaultPulseThreshold_mA,
    TraceChannel channel = TraceChannel::Actual);

struct PulseMeasurement {
  double duty_pct = 0.0;
  double freq_Hz = 0.0;
  double period_s = 0.0;
  double on_s = 0.0;
};

class InsufficientDataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One measurement per consecutive pair: T_P from the start times, T_ON from
// the first pulse's duration.
std::vector<PulseMeasurement> measure_duty_and_freq(
    std::span<const DetectedPulse> pulses);

struct Spectrum {
  double bin_width_Hz = 0.0;
  std::vector<double> power;  // one-sided, sums to the mean-square input
  std::size_t input_length = 0;
  std::size_t transform_length = 0;  // input zero-padded to a power of two

  double nyquist_Hz() const {
    return bin_width_Hz * static_cast<double>(transform_length) / 2.0;
  }
  double total_power() const;
};

Spectrum power_spectrum(std::span<const double> samples,
                        double sample_rate_Hz);
Spectrum fft_spectrum(const Trace& t, TraceChannel channel);

// Fraction of power at or below cutoff.
double band_energy_ratio(const Spectrum& s, double cutoff_Hz);

}  // namespace tesim
