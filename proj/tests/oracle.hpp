#pragma once

// Reference models written straight from the circuit equations and the
// schedule definitions, kept independent of the library code paths.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "tesim/waveform.hpp"

namespace oracle {

// --- circuit --------------------------------------------------------------

inline double transconductance_mA(double v_int, double v_be, double r_e) {
  return std::max(0.0, (v_int - v_be) / r_e * 1000.0);
}

inline double available_V(double v_supply, double v_cc, double v_be, double v_ce_sat) {
  return v_supply - (v_cc - v_be - v_ce_sat);
}

inline double saturated_mA(double i_target_mA, double v_ce_sat, double r_e) {
  return std::max(0.0, i_target_mA - v_ce_sat / r_e * 1000.0);
}

inline double early_mA(double i_target_mA, double v_int, double v_cc, double v_be,
                             double v_ce_sat, double r_e, double v_a) {
  const double base = i_target_mA - v_ce_sat / r_e * 1000.0;
  const double factor = 1.0 + ((v_cc - v_be) - (v_int - v_be)) / v_a;
  return std::max(0.0, base * factor);
}

// --- ramps ----------------------------------------------------------------

// Level (in 0.1 mA steps) of a ramp split into n equal slots, by counting
// the slot boundaries at or before t. Boundary j sits at j*T/n rounded half
// up to the microsecond.
inline int rising_level(int n, std::int64_t T, std::int64_t t) {
  if (n == 0) return 0;
  if (t >= T) return n;
  int level = 1;
  for (int j = 1; j < n; ++j) {
    // floor(j*T/n + 1/2) <= t  <=>  2jT + n < 2n(t + 1)
    if (2 * j * T + n < 2 * std::int64_t{n} * (t + 1)) ++level;
  }
  return level;
}

inline int falling_level(int n, std::int64_t T, std::int64_t t) {
  if (n == 0 || t >= T) return 0;
  int level = n;
  for (int j = 1; j < n; ++j)
    if (2 * j * T + n < 2 * std::int64_t{n} * (t + 1)) --level;
  return level;
}

struct Envelope {
  int n;  // plateau in tenths
  std::int64_t warm, dose;
  bool sham;

  explicit Envelope(const tesim::StimParams& p)
      : n(static_cast<int>(std::lround(p.intensity_mA * 10))),
        warm(std::llround(60e6 * (n / 10.0) / p.ramp_rate_mA_per_min)),
        dose(std::llround(p.dose_s * 1e6)),
        sham(p.sham) {}

  std::int64_t total() const { return 2 * warm + dose; }

  int tenths(std::int64_t t) const {
    if (t < 0 || t >= total()) return 0;
    if (t < warm) return rising_level(n, warm, t);
    if (t < warm + dose) return sham ? 0 : n;
    return falling_level(n, warm, t - warm - dose);
  }
};

// --- pulse trains ---------------------------------------------------------

struct Pulse {
  std::int64_t start, on;
  int polarity;
  int tenths;
};

inline std::int64_t on_us(double duty, std::int64_t period) {
  std::int64_t on = std::llround(duty * period / 100.0);
  if (on < 1) on = 1;
  if (on > period - 1) on = period - 1;
  return on;
}

// Fixed-period biphasic (or monophasic) train over the whole session.
inline std::vector<Pulse> fixed_train(const tesim::StimParams& p, double f_Hz, bool biphasic) {
  const Envelope env(p);
  const std::int64_t period = std::llround(1e6 / f_Hz);
  std::vector<Pulse> out;
  int k = 0;
  for (std::int64_t t = 0; t < env.total(); t += period, ++k) {
    const int pol = biphasic && (k % 2) ? -1 : 1;
    out.push_back({t, std::min(on_us(p.duty_pct, period), env.total() - t), pol, env.tenths(t)});
  }
  return out;
}

inline std::vector<Pulse> burst_train(const tesim::StimParams& p) {
  const Envelope env(p);
  const auto& b = *p.burst;
  const std::int64_t B = std::llround(1e6 / b.burst_freq_Hz);
  const std::int64_t C =
      std::min<std::int64_t>(std::llround(1e6 / b.chain_freq_Hz.value_or(p.freq_hi_Hz)),
                             B / b.chain_count);
  std::vector<Pulse> out;
  int k = 0;
  for (std::int64_t m = 0; m * B < env.total(); ++m)
    for (int i = 0; i < b.chain_count; ++i) {
      const std::int64_t t = m * B + i * C;
      if (t >= env.total()) break;
      out.push_back({t, std::min(on_us(p.duty_pct, C), env.total() - t), k++ % 2 ? -1 : 1,
                     env.tenths(t)});
    }
  return out;
}

// Frequency of FM step k: a triangle wave over 2(n-1) steps.
inline double fm_freq(double lo, double hi, int n, std::size_t k) {
  const std::size_t cycle = 2 * static_cast<std::size_t>(n - 1);
  std::size_t idx = k % cycle;
  if (idx > static_cast<std::size_t>(n - 1)) idx = cycle - idx;
  if (idx == 0) return lo;
  if (idx == static_cast<std::size_t>(n - 1)) return hi;
  return lo + (hi - lo) * static_cast<double>(idx) / (n - 1);
}

// --- spectra --------------------------------------------------------------

// O(n^2) one-sided power, normalized to sum to mean(x^2) over the padded
// length m, with the input zero-padded to m.
inline std::vector<double> naive_power(const std::vector<double>& x, std::size_t m) {
  const std::size_t n = x.size();
  std::vector<double> out(m / 2 + 1);
  for (std::size_t k = 0; k <= m / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(i) / double(m));
    const double w = (k == 0 || k == m / 2) ? 1.0 : 2.0;
    out[k] = w * std::norm(acc) / (double(m) * double(n));
  }
  return out;
}

}  // namespace oracle
