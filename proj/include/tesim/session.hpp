#pragma once

// Tick-driven session lifecycle with sham blinding.
//
//   Idle -> Armed -> WarmUp -> Dose -> CoolDown -> Done
//
// abort() from WarmUp, Dose or CoolDown runs a 4 mA/min ramp to zero (shown
// as CoolDown) and ends in Aborted; from Armed it is immediate.
//
// The caller supplies time through tick(); the engine never reads a clock.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tesim/analog_stage.hpp"
#include "tesim/waveform.hpp"

namespace tesim {

enum class SessionState { Idle, Armed, WarmUp, Dose, CoolDown, Done, Aborted };

std::string_view to_string(SessionState s);
bool is_running(SessionState s);  // WarmUp, Dose or CoolDown

inline constexpr double kAbortRampRate_mA_per_min = 4.0;
inline constexpr double kAdjustRampRate_mA_per_min = 1.0;

class StateError : public std::logic_error {
  using std::logic_error::logic_error;
};

struct TelemetryFrame {
  double t_ms = 0.0;
  SessionState state = SessionState::Idle;
  double displayed_mA = 0.0;  // programmed level, as the blinded channel shows it
  double commanded_mA = 0.0;  // signed, as driven into the stage
  double actual_mA = 0.0;     // signed, delivered
  double v_body_V = 0.0;
  bool compliant = true;

  bool operator==(const TelemetryFrame&) const = default;
};

struct StateTransition {
  double t_ms = 0.0;
  SessionState from = SessionState::Idle;
  SessionState to = SessionState::Idle;
};

struct AbortAck {
  double ramp_s = 0.0;  // 0 when there was nothing to ramp down
};

struct IntensityAck {
  bool accepted = false;
  std::string reason;  // set when rejected
  double ramp_s = 0.0;
};

class Session {
 public:
  Session() = default;

  // Idle -> Armed. Returns the validation violations (empty on success);
  // the session stays Idle when there are any.
  std::vector<Violation> configure(const StimParams& p,
                                   const CircuitParams& c);
  void start();  // Armed -> WarmUp
  TelemetryFrame tick(double dt_ms);
  AbortAck abort();
  IntensityAck set_intensity(double new_mA);
  void reset();  // Done/Aborted -> Idle

  SessionState state() const { return state_; }
  double elapsed_ms() const { return static_cast<double>(clock_us_) / 1000.0; }
  bool aborting() const { return aborting_; }
  const StimParams& params() const { return params_->get(); }
  const CircuitParams& circuit() const { return circuit_; }
  // The prescribed schedule (empty for tRNS).
  const EventSchedule& schedule() const { return schedule_; }
  const std::vector<StateTransition>& transitions() const {
    return transitions_;
  }
  // Envelope levels at the current clock.
  double programmed_level_mA() const;
  double delivered_level_mA() const;

 private:
  struct Segment {
    std::int64_t start_us;
    int from_tenths;
    int to_tenths;
    std::int64_t duration_us;
    bool delivered_zero;  // sham: the programmed level is withheld
  };

  const Segment& segment_at(std::int64_t t_us) const;
  int programmed_tenths_at(std::int64_t t_us) const;
  int delivered_tenths_at(std::int64_t t_us) const;
  void enter(SessionState next, std::int64_t at_us);
  void advance_phases();
  TelemetryFrame make_frame();
  double noise_at(std::int64_t t_us);

  SessionState state_ = SessionState::Idle;
  std::optional<ValidatedParams> params_;
  CircuitParams circuit_;
  SessionTiming timing_;
  EventSchedule schedule_;
  std::vector<OutputEvent> timing_events_;
  std::size_t cursor_ = 0;
  std::optional<NoiseSource> noise_;
  double noise_value_ = 0.0;
  std::int64_t noise_index_ = -1;

  std::int64_t clock_us_ = 0;
  std::int64_t end_us_ = 0;  // when the active cool-down or abort ramp ends
  bool aborting_ = false;
  std::vector<Segment> segments_;
  std::vector<StateTransition> transitions_;
};

// Validated construction straight into Armed.
std::variant<Session, std::vector<Violation>> create_session(
    const StimParams& p, const CircuitParams& c);

}  // namespace tesim
