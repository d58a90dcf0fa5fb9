#include "tesim/analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>

namespace tesim {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

std::vector<DetectedPulse> detect_pulses(const Trace& t, double threshold_mA,
                                         TraceChannel channel) {
  if (!(threshold_mA > 0))
    throw std::invalid_argument("detect_pulses: threshold must be positive");
  const std::vector<double>& x = t.channel(channel);
  const std::size_t n = x.size();
  auto above = [&](std::size_t i) { return std::abs(x[i]) >= threshold_mA; };
  auto sign = [&](std::size_t i) { return x[i] < 0 ? -1 : 1; };

  std::vector<DetectedPulse> out;
  std::vector<double> mags;
  std::size_t i = 0;
  while (i < n) {
    if (!above(i)) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    const int s = sign(i);
    mags.clear();
    std::size_t end = i;  // one past the last sample of the run
    while (i < n) {
      if (above(i) && sign(i) == s) {
        mags.push_back(std::abs(x[i]));
        end = ++i;
      } else if (!above(i) && i + 1 < n && above(i + 1) && sign(i + 1) == s) {
        ++i;  // single-sample dropout
      } else {
        break;
      }
    }
    auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    double median = *mid;
    if (mags.size() % 2 == 0) {
      const double lower = *std::max_element(mags.begin(), mid);
      median = 0.5 * (median + lower);
    }
    DetectedPulse p;
    p.first_sample = first;
    p.sample_count = end - first;
    p.t_start_s = t.time_s(first);
    p.duration_s = static_cast<double>(p.sample_count) / t.sample_rate_Hz;
    p.polarity = s;
    p.amplitude_mA = median;
    out.push_back(p);
    i = end;
  }
  return out;
}

std::vector<PulseMeasurement> measure_duty_and_freq(
    std::span<const DetectedPulse> pulses) {
  if (pulses.size() < 2)
    throw InsufficientDataError("need at least two pulses to measure a period");
  std::vector<PulseMeasurement> out;
  out.reserve(pulses.size() - 1);
  for (std::size_t i = 0; i + 1 < pulses.size(); ++i) {
    PulseMeasurement m;
    m.period_s = pulses[i + 1].t_start_s - pulses[i].t_start_s;
    m.on_s = pulses[i].duration_s;
    m.duty_pct = 100.0 * m.on_s / m.period_s;
    m.freq_Hz = 1.0 / m.period_s;
    out.push_back(m);
  }
  return out;
}

double Spectrum::total_power() const {
  return std::accumulate(power.begin(), power.end(), 0.0);
}

Spectrum power_spectrum(std::span<const double> samples, double sample_rate_Hz) {
  if (samples.size() < 2)
    throw std::invalid_argument("power_spectrum: need at least two samples");
  if (!(sample_rate_Hz > 0))
    throw std::invalid_argument("power_spectrum: sample rate must be positive");
  const std::size_t n = samples.size();
  const std::size_t m = std::bit_ceil(n);
  const std::size_t bins = m / 2 + 1;

  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(m));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(m), in.get(), out.get(),
                                FFTW_ESTIMATE);
  }
  std::copy(samples.begin(), samples.end(), in.get());
  std::fill(in.get() + n, in.get() + m, 0.0);
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }

  Spectrum s;
  s.input_length = n;
  s.transform_length = m;
  s.bin_width_Hz = sample_rate_Hz / static_cast<double>(m);
  s.power.resize(bins);
  const double norm = static_cast<double>(m) * static_cast<double>(n);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = out.get()[k][0];
    const double im = out.get()[k][1];
    const bool edge = k == 0 || k == m / 2;
    s.power[k] = (edge ? 1.0 : 2.0) * (re * re + im * im) / norm;
  }
  return s;
}

Spectrum fft_spectrum(const Trace& t, TraceChannel channel) {
  const auto& x = t.channel(channel);
  if (x.empty()) throw std::invalid_argument("fft_spectrum: channel is empty");
  return power_spectrum(x, t.sample_rate_Hz);
}

double band_energy_ratio(const Spectrum& s, double cutoff_Hz) {
  const double nyquist = s.nyquist_Hz();
  if (!(cutoff_Hz >= 0.0) || cutoff_Hz > nyquist * (1.0 + 1e-12))
    throw std::domain_error("band_energy_ratio: cutoff " + format_double(cutoff_Hz) +
                            " Hz outside [0, " + format_double(nyquist) + "] Hz");
  const double total = s.total_power();
  if (!(total > 0))
    throw std::domain_error("band_energy_ratio: spectrum has no power");
  double below = 0.0;
  for (std::size_t k = 0; k < s.power.size(); ++k)
    if (static_cast<double>(k) * s.bin_width_Hz <= cutoff_Hz * (1.0 + 1e-12))
      below += s.power[k];
  return below / total;
}

}  // namespace tesim
