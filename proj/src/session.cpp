#include "tesim/session.hpp"

#include <algorithm>
#include <cmath>

namespace tesim {

namespace {

constexpr double kSessionNoiseRate_Hz = 10000.0;
constexpr int kMaxTenths = 40;

}  // namespace

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Idle: return "Idle";
    case SessionState::Armed: return "Armed";
    case SessionState::WarmUp: return "WarmUp";
    case SessionState::Dose: return "Dose";
    case SessionState::CoolDown: return "CoolDown";
    case SessionState::Done: return "Done";
    case SessionState::Aborted: return "Aborted";
  }
  return "?";
}

bool is_running(SessionState s) {
  return s == SessionState::WarmUp || s == SessionState::Dose ||
         s == SessionState::CoolDown;
}

std::vector<Violation> Session::configure(const StimParams& p,
                                          const CircuitParams& c) {
  if (state_ != SessionState::Idle)
    throw StateError("configure requires an Idle session, state is " +
                     std::string(to_string(state_)));
  Validation v = validate_params(p);
  std::vector<Violation> problems = std::move(v.violations);
  for (auto& cv : validate_circuit(c)) problems.push_back(std::move(cv));
  if (!problems.empty()) return problems;

  params_ = std::move(v.value);
  circuit_ = c;
  timing_ = session_timing(p);
  noise_.reset();
  noise_index_ = -1;
  noise_value_ = 0.0;
  timing_events_.clear();
  if (p.mode == StimMode::TRNS) {
    schedule_ = EventSchedule{};
    schedule_.params = p;
    schedule_.total_duration_us = timing_.total_us();
    noise_.emplace(p.seed, kSessionNoiseRate_Hz);
  } else {
    schedule_ = generate_schedule(*params_);
    if (p.mode != StimMode::TDCS) {
      const std::int64_t horizon =
          timing_.dose_end_us() + ramp_duration_us(kMaxTenths, p.ramp_rate_mA_per_min) + 1;
      timing_events_ = generate_schedule_until(*params_, horizon).events;
    }
  }
  cursor_ = 0;
  clock_us_ = 0;
  end_us_ = 0;
  aborting_ = false;
  segments_.clear();
  transitions_.clear();
  enter(SessionState::Armed, 0);
  return {};
}

void Session::start() {
  if (state_ != SessionState::Armed)
    throw StateError("start requires an Armed session, state is " +
                     std::string(to_string(state_)));
  clock_us_ = 0;
  segments_.push_back({0, 0, timing_.steps, timing_.warmup_us, false});
  enter(SessionState::WarmUp, 0);
  advance_phases();
}

TelemetryFrame Session::tick(double dt_ms) {
  if (!is_running(state_))
    throw StateError("tick requires a running session, state is " +
                     std::string(to_string(state_)));
  if (!(dt_ms >= 0)) throw std::invalid_argument("tick: dt must be >= 0");
  clock_us_ += std::llround(dt_ms * 1000.0);
  advance_phases();
  return make_frame();
}

AbortAck Session::abort() {
  if (state_ == SessionState::Armed) {
    enter(SessionState::Aborted, clock_us_);
    return {};
  }
  if (!is_running(state_))
    throw StateError("abort requires an active session, state is " +
                     std::string(to_string(state_)));
  if (aborting_)
    return {static_cast<double>(end_us_ - clock_us_) / 1e6};
  const int level = programmed_tenths_at(clock_us_);
  aborting_ = true;
  if (level == 0) {
    enter(SessionState::Aborted, clock_us_);
    return {};
  }
  const std::int64_t duration = ramp_duration_us(level, kAbortRampRate_mA_per_min);
  segments_.push_back(
      {clock_us_, level, 0, duration, segment_at(clock_us_).delivered_zero});
  end_us_ = clock_us_ + duration;
  if (state_ != SessionState::CoolDown) enter(SessionState::CoolDown, clock_us_);
  return {static_cast<double>(duration) / 1e6};
}

IntensityAck Session::set_intensity(double new_mA) {
  if (state_ != SessionState::Dose || aborting_)
    return {false, "intensity can only be adjusted during the dose phase", 0.0};
  StimParams probe = params();
  probe.intensity_mA = new_mA;
  for (const Violation& v : validate_params(probe).violations)
    if (v.field == "intensity_mA") return {false, v.message(), 0.0};

  const int target = intensity_tenths(new_mA);
  const int current = programmed_tenths_at(clock_us_);
  const std::int64_t duration =
      ramp_duration_us(std::abs(target - current), kAdjustRampRate_mA_per_min);
  segments_.push_back(
      {clock_us_, current, target, duration, segment_at(clock_us_).delivered_zero});
  return {true, {}, static_cast<double>(duration) / 1e6};
}

void Session::reset() {
  if (state_ != SessionState::Done && state_ != SessionState::Aborted)
    throw StateError("reset requires a Done or Aborted session, state is " +
                     std::string(to_string(state_)));
  enter(SessionState::Idle, clock_us_);
}

double Session::programmed_level_mA() const {
  if (!is_running(state_)) return 0.0;
  return tenths_to_mA(programmed_tenths_at(clock_us_));
}

double Session::delivered_level_mA() const {
  if (!is_running(state_)) return 0.0;
  return tenths_to_mA(delivered_tenths_at(clock_us_));
}

const Session::Segment& Session::segment_at(std::int64_t t_us) const {
  auto it = std::upper_bound(
      segments_.begin(), segments_.end(), t_us,
      [](std::int64_t t, const Segment& s) { return t < s.start_us; });
  return *std::prev(it);
}

int Session::programmed_tenths_at(std::int64_t t_us) const {
  if (segments_.empty() || t_us < segments_.front().start_us) return 0;
  const Segment& s = segment_at(t_us);
  return stepped_ramp_tenths(s.from_tenths, s.to_tenths, s.duration_us,
                             t_us - s.start_us);
}

int Session::delivered_tenths_at(std::int64_t t_us) const {
  if (segments_.empty() || t_us < segments_.front().start_us) return 0;
  return segment_at(t_us).delivered_zero ? 0 : programmed_tenths_at(t_us);
}

void Session::enter(SessionState next, std::int64_t at_us) {
  transitions_.push_back({static_cast<double>(at_us) / 1000.0, state_, next});
  state_ = next;
}

void Session::advance_phases() {
  for (;;) {
    if (state_ == SessionState::WarmUp && clock_us_ >= timing_.dose_start_us()) {
      segments_.push_back({timing_.dose_start_us(), timing_.steps, timing_.steps,
                           0, params().sham});
      enter(SessionState::Dose, timing_.dose_start_us());
    } else if (state_ == SessionState::Dose && clock_us_ >= timing_.dose_end_us()) {
      const std::int64_t at = timing_.dose_end_us();
      const int level = programmed_tenths_at(at);
      const std::int64_t duration = ramp_duration_us(level, params().ramp_rate_mA_per_min);
      segments_.push_back({at, level, 0, duration, false});
      end_us_ = at + duration;
      enter(SessionState::CoolDown, at);
    } else if (state_ == SessionState::CoolDown && clock_us_ >= end_us_) {
      enter(aborting_ ? SessionState::Aborted : SessionState::Done, end_us_);
    } else {
      break;
    }
  }
}

double Session::noise_at(std::int64_t t_us) {
  const auto index = static_cast<std::int64_t>(
      static_cast<double>(t_us) * kSessionNoiseRate_Hz / 1e6);
  while (noise_index_ < index) {
    noise_value_ = noise_->next();
    ++noise_index_;
  }
  return noise_value_;
}

TelemetryFrame Session::make_frame() {
  TelemetryFrame f;
  f.t_ms = elapsed_ms();
  f.state = state_;
  if (!is_running(state_)) return f;

  const std::int64_t t = clock_us_;
  double driven = 0.0;
  const StimMode mode = params().mode;
  if (mode == StimMode::TDCS) {
    driven = tenths_to_mA(delivered_tenths_at(t));
  } else if (mode == StimMode::TRNS) {
    const double x = noise_at(t);
    driven = x * tenths_to_mA(delivered_tenths_at(t));
  } else {
    const auto& ev = timing_events_;
    while (cursor_ < ev.size() && ev[cursor_].end_us() <= t) ++cursor_;
    if (cursor_ < ev.size() && ev[cursor_].t_start_us <= t) {
      const OutputEvent& e = ev[cursor_];
      driven = e.polarity * tenths_to_mA(delivered_tenths_at(e.t_start_us));
    }
  }
  const CircuitOutput out = resolve_output(std::abs(driven), circuit_);
  const double sign = driven < 0 ? -1.0 : 1.0;
  // The operator sees the programmed level, never the waveform.
  f.displayed_mA = tenths_to_mA(programmed_tenths_at(t));
  f.commanded_mA = driven;
  f.actual_mA = sign * out.i_actual_mA;
  f.v_body_V = sign * out.v_body_V;
  f.compliant = out.compliant;
  return f;
}

std::variant<Session, std::vector<Violation>> create_session(
    const StimParams& p, const CircuitParams& c) {
  Session s;
  auto problems = s.configure(p, c);
  if (!problems.empty()) return problems;
  return s;
}

}  // namespace tesim
