#include "tesim/waveform.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "rng.hpp"

namespace tesim {

namespace {

constexpr double kUsPerSecond = 1e6;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Integer period bounds for a frequency range. Rounding inward keeps every
// realized frequency inside [lo, hi]; a range too narrow to contain an
// integer period falls back to the nearest period.
struct PeriodRange {
  std::int64_t min_us;
  std::int64_t max_us;
};

PeriodRange period_range(double lo_Hz, double hi_Hz) {
  const double shortest = kUsPerSecond / hi_Hz;
  const double longest = kUsPerSecond / lo_Hz;
  PeriodRange r{static_cast<std::int64_t>(std::ceil(shortest - 1e-6)),
                static_cast<std::int64_t>(std::floor(longest + 1e-6))};
  if (r.min_us > r.max_us) {
    const auto p = std::llround(kUsPerSecond / (0.5 * (lo_Hz + hi_Hz)));
    r = {p, p};
  }
  return r;
}

std::int64_t period_for(double f_Hz, const PeriodRange& r) {
  return std::clamp<std::int64_t>(std::llround(kUsPerSecond / f_Hz), r.min_us,
                                  r.max_us);
}

std::int64_t on_time_us(double duty_pct, std::int64_t period_us) {
  const auto on = std::llround(duty_pct / 100.0 * static_cast<double>(period_us));
  return std::clamp<std::int64_t>(on, 1, std::max<std::int64_t>(1, period_us - 1));
}

int level_tenths(std::int64_t t_us, const SessionTiming& tm, bool sham) {
  if (t_us < 0 || t_us >= tm.total_us()) return 0;
  if (t_us < tm.dose_start_us())
    return stepped_ramp_tenths(0, tm.steps, tm.warmup_us, t_us);
  if (t_us < tm.dose_end_us()) return sham ? 0 : tm.steps;
  return stepped_ramp_tenths(tm.steps, 0, tm.cooldown_us,
                             t_us - tm.dose_end_us());
}

std::vector<std::pair<std::string, std::string>> base_metadata() {
  return {{"generator", std::string(kGeneratorVersion)},
          {"time_base", "1us"},
          {"prng", "mt19937_64"}};
}

EventSchedule pulse_schedule(const StimParams& p, std::int64_t horizon_us) {
  const SessionTiming tm = session_timing(p);
  const bool biphasic = p.mode != StimMode::TPCS;
  const PulsePattern pattern =
      p.mode == StimMode::TPCS ? PulsePattern::Random : p.pattern;
  const PeriodRange range = period_range(p.freq_lo_Hz, p.freq_hi_Hz);

  EventSchedule s;
  s.params = p;
  s.total_duration_us = tm.total_us();
  s.metadata = base_metadata();
  s.metadata.emplace_back("pattern", std::string(to_string(pattern)));

  std::vector<OutputEvent>& ev = s.events;
  int polarity = 1;
  auto emit = [&](std::int64_t t, std::int64_t period) {
    const std::int64_t on = on_time_us(p.duty_pct, period);
    ev.push_back({t, std::min(on, horizon_us - t), polarity,
                  tenths_to_mA(level_tenths(t, tm, p.sham))});
    if (biphasic) polarity = -polarity;
  };

  if (pattern == PulsePattern::Burst) {
    const BurstConfig& b = p.burst.value();
    const std::int64_t burst_us = std::llround(kUsPerSecond / b.burst_freq_Hz);
    std::int64_t chain_us =
        period_for(b.chain_freq_Hz.value_or(p.freq_hi_Hz), range);
    chain_us = std::min(chain_us, burst_us / b.chain_count);
    s.metadata.emplace_back("burst_period_us", std::to_string(burst_us));
    s.metadata.emplace_back("chain_period_us", std::to_string(chain_us));
    for (std::int64_t start = 0; start < horizon_us; start += burst_us) {
      for (int i = 0; i < b.chain_count; ++i) {
        const std::int64_t t = start + i * chain_us;
        if (t >= horizon_us) break;
        emit(t, chain_us);
      }
    }
    return s;
  }

  std::mt19937_64 rng(p.seed);
  std::vector<std::int64_t> fm_periods;
  if (pattern == PulsePattern::FM) {
    for (double f : fm_schedule(p.freq_lo_Hz, p.freq_hi_Hz, p.fm_steps))
      fm_periods.push_back(period_for(f, range));
    s.metadata.emplace_back("fm_steps", std::to_string(p.fm_steps));
  }
  if (pattern == PulsePattern::Random)
    s.metadata.emplace_back("period_distribution", "uniform-in-period");

  std::size_t index = 0;
  for (std::int64_t t = 0; t < horizon_us; ++index) {
    std::int64_t period = 0;
    switch (pattern) {
      case PulsePattern::Continuous:
        period = period_for(p.freq_lo_Hz, range);
        break;
      case PulsePattern::Random:
        period = detail::uniform_int(rng, range.min_us, range.max_us);
        break;
      case PulsePattern::FM:
        period = fm_periods[index % fm_periods.size()];
        break;
      case PulsePattern::Burst:
        break;
    }
    emit(t, period);
    t += period;
  }
  return s;
}

}  // namespace

std::string_view to_string(StimMode mode) {
  switch (mode) {
    case StimMode::TDCS: return "tdcs";
    case StimMode::TPCS: return "tpcs";
    case StimMode::CES: return "ces";
    case StimMode::MET: return "met";
    case StimMode::TRNS: return "trns";
  }
  return "?";
}

std::string_view to_string(PulsePattern pattern) {
  switch (pattern) {
    case PulsePattern::Continuous: return "continuous";
    case PulsePattern::Random: return "random";
    case PulsePattern::FM: return "fm";
    case PulsePattern::Burst: return "burst";
  }
  return "?";
}

std::optional<StimMode> parse_stim_mode(std::string_view text) {
  const std::string t = lower(text);
  for (auto m : {StimMode::TDCS, StimMode::TPCS, StimMode::CES, StimMode::MET,
                 StimMode::TRNS})
    if (t == to_string(m)) return m;
  return std::nullopt;
}

std::optional<PulsePattern> parse_pulse_pattern(std::string_view text) {
  const std::string t = lower(text);
  for (auto p : {PulsePattern::Continuous, PulsePattern::Random,
                 PulsePattern::FM, PulsePattern::Burst})
    if (t == to_string(p)) return p;
  return std::nullopt;
}

std::string Violation::message() const {
  return field + " = " + num(value) + ": " + rule + " (legal: " + legal + ")";
}

int intensity_tenths(double intensity_mA) {
  return static_cast<int>(std::llround(intensity_mA * 10.0));
}

Validation validate_params(const StimParams& p, ValidationOptions opts) {
  using namespace limits;
  Validation out;
  auto& v = out.violations;
  auto bad = [&](std::string field, double value, std::string rule,
                 std::string legal) {
    v.push_back({std::move(field), value, std::move(rule), std::move(legal)});
  };
  const std::string intensity_legal = "0.1 to 4.0 mA in 0.1 mA steps";

  const double I = p.intensity_mA;
  if (!(opts.allow_zero_intensity && I == 0.0)) {
    if (!std::isfinite(I)) {
      bad("intensity_mA", I, "intensity is not a number", intensity_legal);
    } else if (I < kMinIntensity_mA - kLatticeTolerance) {
      bad("intensity_mA", I, "intensity below 0.1 mA minimum", intensity_legal);
    } else if (I > kMaxIntensity_mA + kLatticeTolerance) {
      bad("intensity_mA", I, "intensity above 4.0 mA maximum", intensity_legal);
    } else if (std::abs(I - intensity_tenths(I) / 10.0) > kLatticeTolerance) {
      bad("intensity_mA", I, "intensity is not a multiple of 0.1 mA",
          intensity_legal);
    }
  }
  if (!(std::isfinite(p.ramp_rate_mA_per_min) && p.ramp_rate_mA_per_min > 0))
    bad("ramp_rate_mA_per_min", p.ramp_rate_mA_per_min,
        "ramp rate must be positive", "> 0 mA/min");
  if (!(std::isfinite(p.dose_s) && p.dose_s > 0))
    bad("dose_s", p.dose_s, "dose duration must be positive", "> 0 s");

  if (p.mode == StimMode::MET) {
    if (p.pattern != met::kPattern || p.burst)
      out.warnings.push_back(
          "MET runs fixed parameters; frequency, duty and pattern are ignored");
  } else {
    const std::string freq_legal = "0.5 Hz <= freq_lo_Hz <= freq_hi_Hz <= 1000 Hz";
    if (!(p.freq_lo_Hz >= kMinFreq_Hz))
      bad("freq_lo_Hz", p.freq_lo_Hz, "frequency below 0.5 Hz minimum",
          freq_legal);
    if (!(p.freq_lo_Hz <= kMaxFreq_Hz))
      bad("freq_lo_Hz", p.freq_lo_Hz, "frequency above 1000 Hz maximum",
          freq_legal);
    if (!(p.freq_hi_Hz <= kMaxFreq_Hz))
      bad("freq_hi_Hz", p.freq_hi_Hz, "frequency above 1000 Hz maximum",
          freq_legal);
    if (!(p.freq_hi_Hz >= kMinFreq_Hz))
      bad("freq_hi_Hz", p.freq_hi_Hz, "frequency below 0.5 Hz minimum",
          freq_legal);
    if (p.freq_lo_Hz > p.freq_hi_Hz)
      bad("freq_hi_Hz", p.freq_hi_Hz, "upper frequency below lower frequency",
          freq_legal);
    if (!(p.duty_pct >= kMinDuty_pct && p.duty_pct <= kMaxDuty_pct))
      bad("duty_pct", p.duty_pct,
          p.duty_pct < kMinDuty_pct ? "duty cycle below 10 % minimum"
                                    : "duty cycle above 90 % maximum",
          "10 % to 90 %");

    if (p.mode == StimMode::CES) {
      if (p.pattern == PulsePattern::FM && p.fm_steps < 2)
        bad("fm_steps", p.fm_steps, "FM needs at least two steps", ">= 2");
      if (p.pattern == PulsePattern::Continuous &&
          p.freq_lo_Hz != p.freq_hi_Hz)
        out.warnings.push_back(
            "continuous pattern runs at freq_lo_Hz; freq_hi_Hz is unused");
      if (p.pattern == PulsePattern::Burst && !p.burst)
        bad("burst", 0, "burst pattern requires burst_freq_Hz and chain_count",
            "burst parameters present");
      if (p.pattern != PulsePattern::Burst && p.burst)
        bad("burst", 0, "burst parameters given without the burst pattern",
            "burst parameters only with pattern = burst");
      if (p.pattern == PulsePattern::Burst && p.burst) {
        const BurstConfig& b = *p.burst;
        if (!(b.burst_freq_Hz >= kMinBurstFreq_Hz &&
              b.burst_freq_Hz <= kMaxBurstFreq_Hz))
          bad("burst_freq_Hz", b.burst_freq_Hz,
              "burst frequency outside 1 to 20 Hz", "1 Hz to 20 Hz");
        if (b.chain_count < kMinChainCount)
          bad("chain_count", b.chain_count,
              "chain count must be greater than one (N > 1)", "2 to 15");
        if (b.chain_count > kMaxChainCount)
          bad("chain_count", b.chain_count, "chain count above 15 maximum",
              "2 to 15");
        if (b.burst_freq_Hz > 0 && p.freq_lo_Hz > 0) {
          const double burst_period_ms = 1000.0 / b.burst_freq_Hz;
          const double longest_pulse_ms = 1000.0 / p.freq_lo_Hz;
          if (burst_period_ms < 2.0 * longest_pulse_ms)
            bad("burst_freq_Hz", b.burst_freq_Hz,
                "burst period " + num(burst_period_ms) +
                    " ms < 2 x longest pulse period " + num(longest_pulse_ms) +
                    " ms",
                "1/burst_freq_Hz >= 2/freq_lo_Hz");
          if (b.chain_count * longest_pulse_ms > burst_period_ms)
            bad("chain_count", b.chain_count,
                "chain of " + std::to_string(b.chain_count) + " x " +
                    num(longest_pulse_ms) + " ms does not fit the " +
                    num(burst_period_ms) + " ms burst period",
                "chain_count/freq_lo_Hz <= 1/burst_freq_Hz");
        }
        if (b.chain_freq_Hz && !(*b.chain_freq_Hz >= p.freq_lo_Hz &&
                                 *b.chain_freq_Hz <= p.freq_hi_Hz))
          bad("chain_freq_Hz", *b.chain_freq_Hz,
              "chain frequency outside the pulse frequency range",
              "freq_lo_Hz to freq_hi_Hz");
      }
    } else if (p.pattern != PulsePattern::Continuous || p.burst) {
      out.warnings.push_back(std::string("pattern settings are ignored in ") +
                             std::string(to_string(p.mode)) + " mode");
    }
  }

  if (v.empty()) out.value = ValidatedParams(p);
  return out;
}

std::int64_t ramp_duration_us(int tenths, double rate_mA_per_min) {
  return std::llround(6e6 * tenths / rate_mA_per_min);
}

SessionTiming session_timing(const StimParams& p) {
  SessionTiming tm;
  tm.steps = intensity_tenths(p.intensity_mA);
  tm.warmup_us = ramp_duration_us(tm.steps, p.ramp_rate_mA_per_min);
  tm.dose_us = std::llround(p.dose_s * kUsPerSecond);
  tm.cooldown_us = tm.warmup_us;
  return tm;
}

int stepped_ramp_tenths(int from, int to, std::int64_t duration_us,
                        std::int64_t offset_us) {
  const int n = std::abs(to - from);
  if (n == 0 || offset_us < 0) return from;
  if (offset_us >= duration_us) return to;
  auto boundary = [&](std::int64_t j) {
    return (2 * j * duration_us + n) / (2 * std::int64_t{n});
  };
  std::int64_t j = std::min<std::int64_t>(n - 1, offset_us * n / duration_us);
  while (j + 1 < n && boundary(j + 1) <= offset_us) ++j;
  while (j > 0 && boundary(j) > offset_us) --j;
  return to > from ? from + static_cast<int>(j) + 1
                   : from - static_cast<int>(j);
}

double intensity_envelope(double t_s, const ValidatedParams& vp) {
  const StimParams& p = vp.get();
  const SessionTiming tm = session_timing(p);
  const double total_s = tm.total_us() / kUsPerSecond;
  if (!(t_s >= 0.0 && t_s <= total_s))
    throw std::domain_error("intensity_envelope: t = " + num(t_s) +
                            " s outside [0, " + num(total_s) + "] s");
  const double warm_s = tm.warmup_us / kUsPerSecond;
  const double dose_end_s = tm.dose_end_us() / kUsPerSecond;
  const double I = tenths_to_mA(tm.steps);
  if (t_s < warm_s) return I * t_s / warm_s;
  if (t_s < dose_end_s) return p.sham ? 0.0 : I;
  const double cool_s = tm.cooldown_us / kUsPerSecond;
  return cool_s > 0 ? I * (total_s - t_s) / cool_s : 0.0;
}

double stepped_envelope_mA(std::int64_t t_us, const ValidatedParams& vp) {
  return tenths_to_mA(level_tenths(t_us, session_timing(vp.get()), vp->sham));
}

double duty_cycle_pct(double t_on_us, double t_off_us) {
  if (!(t_on_us > 0)) throw std::domain_error("duty_cycle_pct: T_ON must be > 0");
  if (!(t_off_us >= 0))
    throw std::domain_error("duty_cycle_pct: T_OFF must be >= 0");
  return 100.0 * t_on_us / (t_on_us + t_off_us);
}

double pulse_frequency_Hz(double t_on_us, double t_off_us) {
  const double period = t_on_us + t_off_us;
  if (!(period > 0))
    throw std::domain_error("pulse_frequency_Hz: period must be > 0");
  return kUsPerSecond / period;
}

double schedule_max_freq_Hz(const EventSchedule& s) {
  switch (s.params.mode) {
    case StimMode::TDCS:
    case StimMode::TRNS:
      return 0.0;
    case StimMode::MET:
    case StimMode::TPCS:
    case StimMode::CES:
      return s.params.freq_hi_Hz;
  }
  return 0.0;
}

std::vector<double> fm_schedule(double freq_lo_Hz, double freq_hi_Hz,
                                int n_steps) {
  if (n_steps < 2) throw std::domain_error("fm_schedule: n_steps must be >= 2");
  if (!(freq_lo_Hz <= freq_hi_Hz))
    throw std::domain_error("fm_schedule: freq_lo must not exceed freq_hi");
  std::vector<double> up(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) {
    const double a = static_cast<double>(i) / (n_steps - 1);
    up[i] = freq_lo_Hz * (1.0 - a) + freq_hi_Hz * a;
  }
  up.front() = freq_lo_Hz;
  up.back() = freq_hi_Hz;
  std::vector<double> cycle = up;
  for (int i = n_steps - 2; i >= 1; --i) cycle.push_back(up[i]);
  return cycle;
}

EventSchedule gen_tdcs(const ValidatedParams& vp) {
  const StimParams& p = vp.get();
  if (p.mode != StimMode::TDCS)
    throw std::invalid_argument("gen_tdcs: mode is not tdcs");
  const SessionTiming tm = session_timing(p);
  EventSchedule s;
  s.params = p;
  s.total_duration_us = tm.total_us();
  s.metadata = base_metadata();
  s.metadata.emplace_back("ramp_steps", std::to_string(tm.steps));

  const int n = tm.steps;
  auto slot = [&](std::int64_t duration, int j) {
    return n == 0 ? 0 : (2 * j * duration + n) / (2 * std::int64_t{n});
  };
  auto push = [&](std::int64_t start, std::int64_t end, int tenths) {
    if (end > start) s.events.push_back({start, end - start, 1, tenths_to_mA(tenths)});
  };
  for (int j = 0; j < n; ++j)
    push(slot(tm.warmup_us, j), slot(tm.warmup_us, j + 1), j + 1);
  push(tm.dose_start_us(), tm.dose_end_us(), p.sham ? 0 : n);
  for (int j = 0; j < n; ++j)
    push(tm.dose_end_us() + slot(tm.cooldown_us, j),
         tm.dose_end_us() + slot(tm.cooldown_us, j + 1), n - j);
  return s;
}

EventSchedule gen_tpcs(const ValidatedParams& vp) {
  if (vp->mode != StimMode::TPCS)
    throw std::invalid_argument("gen_tpcs: mode is not tpcs");
  return pulse_schedule(vp.get(), session_timing(vp.get()).total_us());
}

EventSchedule gen_ces(const ValidatedParams& vp) {
  if (vp->mode != StimMode::CES)
    throw std::invalid_argument("gen_ces: mode is not ces");
  return pulse_schedule(vp.get(), session_timing(vp.get()).total_us());
}

StimParams met_effective_params(const StimParams& p) {
  StimParams e = p;
  e.freq_lo_Hz = met::kFreq_Hz;
  e.freq_hi_Hz = met::kFreq_Hz;
  e.duty_pct = met::kDuty_pct;
  e.pattern = met::kPattern;
  e.burst.reset();
  return e;
}

EventSchedule gen_met(const ValidatedParams& vp) {
  if (vp->mode != StimMode::MET)
    throw std::invalid_argument("gen_met: mode is not met");
  const StimParams e = met_effective_params(vp.get());
  EventSchedule s = pulse_schedule(e, session_timing(e).total_us());
  s.metadata.emplace_back("met_defaults", "0.5Hz,1%,continuous");
  return s;
}

EventSchedule generate_schedule(const ValidatedParams& vp) {
  switch (vp->mode) {
    case StimMode::TDCS: return gen_tdcs(vp);
    case StimMode::TPCS: return gen_tpcs(vp);
    case StimMode::CES: return gen_ces(vp);
    case StimMode::MET: return gen_met(vp);
    case StimMode::TRNS:
      throw std::invalid_argument("trns has no event schedule; use gen_trns");
  }
  throw std::invalid_argument("unknown mode");
}

EventSchedule generate_schedule_until(const ValidatedParams& vp,
                                      std::int64_t horizon_us) {
  switch (vp->mode) {
    case StimMode::TDCS: return gen_tdcs(vp);
    case StimMode::TPCS:
    case StimMode::CES: return pulse_schedule(vp.get(), horizon_us);
    case StimMode::MET:
      return pulse_schedule(met_effective_params(vp.get()), horizon_us);
    case StimMode::TRNS:
      throw std::invalid_argument("trns has no event schedule");
  }
  throw std::invalid_argument("unknown mode");
}

double NoiseSource::Biquad::step(double x) {
  const double y = b0 * x + z1;
  z1 = b1 * x - a1 * y + z2;
  z2 = b2 * x - a2 * y;
  return y;
}

NoiseSource::NoiseSource(std::uint64_t seed, double sample_rate_Hz)
    : rng_(seed) {
  if (!(sample_rate_Hz >= trns::kMinSampleRate_Hz))
    throw std::domain_error("noise sample rate must be >= 2 kHz");
  // Butterworth low-pass as cascaded bilinear biquads.
  const double w0 = 2.0 * std::numbers::pi * trns::kFilterCorner_Hz / sample_rate_Hz;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  constexpr int n = trns::kFilterOrder;
  for (int k = 0; k < n / 2; ++k) {
    const double q = 1.0 / (2.0 * std::cos((2 * k + 1) * std::numbers::pi / (2.0 * n)));
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    sections_.push_back({(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0,
                         (1.0 - cw) / 2.0 / a0, -2.0 * cw / a0,
                         (1.0 - alpha) / a0});
  }
  // Unit output variance for unit-variance white input: 1 / sqrt(sum h^2).
  std::vector<Biquad> probe = sections_;
  double energy = 0.0;
  const auto len = static_cast<std::size_t>(
      std::max(8192.0, 50.0 * sample_rate_Hz / trns::kFilterCorner_Hz));
  for (std::size_t i = 0; i < len; ++i) {
    double h = i == 0 ? 1.0 : 0.0;
    for (auto& b : probe) h = b.step(h);
    energy += h * h;
  }
  gain_ = 1.0 / std::sqrt(energy);
}

double NoiseSource::next_gaussian() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = detail::unit_open_closed(rng_);
  const double u2 = detail::unit_closed_open(rng_);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

double NoiseSource::next() {
  double x = next_gaussian();
  for (auto& b : sections_) x = b.step(x);
  ++emitted_;
  return x * gain_;
}

Trace gen_trns(const ValidatedParams& vp, double sample_rate_Hz) {
  const StimParams& p = vp.get();
  if (p.mode != StimMode::TRNS)
    throw std::invalid_argument("gen_trns: mode is not trns");
  if (!(sample_rate_Hz >= trns::kMinSampleRate_Hz))
    throw std::domain_error("gen_trns: sample rate " + num(sample_rate_Hz) +
                            " Hz below the 2 kHz minimum");
  const SessionTiming tm = session_timing(p);
  const auto n = static_cast<std::size_t>(
      std::ceil(static_cast<double>(tm.total_us()) * sample_rate_Hz / kUsPerSecond - 1e-9));
  Trace t;
  t.sample_rate_Hz = sample_rate_Hz;
  t.resize(n);
  NoiseSource noise(p.seed, sample_rate_Hz);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = noise.next() * intensity_envelope(t.time_s(i), vp);
    t.commanded_mA[i] = x;
    t.actual_mA[i] = x;
    t.compliant[i] = 1;
  }
  t.meta = params_metadata(p);
  t.meta.emplace_back("stage", "ideal");
  t.meta.emplace_back("noise_filter", "butterworth-4-250Hz");
  return t;
}

std::vector<std::pair<std::string, std::string>> params_metadata(
    const StimParams& p) {
  std::vector<std::pair<std::string, std::string>> m;
  m.emplace_back("generator", std::string(kGeneratorVersion));
  m.emplace_back("mode", std::string(to_string(p.mode)));
  m.emplace_back("intensity_mA", format_double(p.intensity_mA));
  m.emplace_back("ramp_rate_mA_per_min", format_double(p.ramp_rate_mA_per_min));
  m.emplace_back("dose_s", format_double(p.dose_s));
  m.emplace_back("freq_lo_Hz", format_double(p.freq_lo_Hz));
  m.emplace_back("freq_hi_Hz", format_double(p.freq_hi_Hz));
  m.emplace_back("duty_pct", format_double(p.duty_pct));
  m.emplace_back("pattern", std::string(to_string(p.pattern)));
  if (p.burst) {
    m.emplace_back("burst_freq_Hz", format_double(p.burst->burst_freq_Hz));
    m.emplace_back("chain_count", std::to_string(p.burst->chain_count));
    if (p.burst->chain_freq_Hz)
      m.emplace_back("chain_freq_Hz", format_double(*p.burst->chain_freq_Hz));
  }
  m.emplace_back("fm_steps", std::to_string(p.fm_steps));
  m.emplace_back("sham", p.sham ? "true" : "false");
  m.emplace_back("seed", std::to_string(p.seed));
  return m;
}

}  // namespace tesim
