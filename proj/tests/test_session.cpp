#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "tesim/session.hpp"

using namespace tesim;

namespace {

StimParams tdcs(double mA, double dose_s, bool sham = false) {
  StimParams p;
  p.intensity_mA = mA;
  p.dose_s = dose_s;
  p.sham = sham;
  return p;
}

Session armed(const StimParams& p, const CircuitParams& c = {}) {
  auto r = create_session(p, c);
  if (auto* v = std::get_if<std::vector<Violation>>(&r))
    throw std::runtime_error("rejected: " + v->front().message());
  return std::get<Session>(std::move(r));
}

// Ticks until t_ms (exclusive of overshoot), returning the last frame.
TelemetryFrame run_to(Session& s, double t_ms, double dt = 100) {
  TelemetryFrame f;
  while (s.elapsed_ms() + dt <= t_ms + 1e-9 && is_running(s.state())) f = s.tick(dt);
  return f;
}

}  // namespace

TEST(Session, CreateRejectsWithAllViolations) {
  StimParams p = tdcs(4.1, -1);
  auto r = create_session(p, CircuitParams{});
  ASSERT_TRUE(std::holds_alternative<std::vector<Violation>>(r));
  EXPECT_EQ(std::get<std::vector<Violation>>(r).size(), 2u);
}

TEST(Session, ArmedWithTotalDuration) {
  Session s = armed(tdcs(2.0, 600));
  EXPECT_EQ(s.state(), SessionState::Armed);
  EXPECT_EQ(s.schedule().total_duration_us, (2 * 120 + 600) * 1'000'000ll);
  Session t = armed(tdcs(2.0, 600));
  EXPECT_EQ(s.schedule(), t.schedule());
}

TEST(Session, PhasesOfTwoMilliampTdcs) {
  Session s = armed(tdcs(2.0, 60));
  s.start();
  EXPECT_EQ(s.state(), SessionState::WarmUp);
  TelemetryFrame f = run_to(s, 119'900);
  EXPECT_EQ(f.state, SessionState::WarmUp);
  EXPECT_DOUBLE_EQ(f.displayed_mA, 2.0);
  f = s.tick(100);
  EXPECT_DOUBLE_EQ(f.t_ms, 120'000);
  EXPECT_EQ(f.state, SessionState::Dose);
  EXPECT_DOUBLE_EQ(f.commanded_mA, 2.0);
  EXPECT_NEAR(f.actual_mA, 1.8432, 1e-12);
  EXPECT_NEAR(f.v_body_V, 18.432, 1e-11);
  f = run_to(s, 180'000);
  EXPECT_EQ(f.state, SessionState::CoolDown);
  f = run_to(s, 300'000);
  EXPECT_EQ(f.state, SessionState::Done);
  EXPECT_DOUBLE_EQ(f.commanded_mA, 0.0);
  EXPECT_THROW(s.tick(100), StateError);
  ASSERT_EQ(s.transitions().size(), 5u);
  EXPECT_DOUBLE_EQ(s.transitions()[2].t_ms, 120'000);
  EXPECT_DOUBLE_EQ(s.transitions()[3].t_ms, 180'000);
  EXPECT_DOUBLE_EQ(s.transitions()[4].t_ms, 300'000);
  s.reset();
  EXPECT_EQ(s.state(), SessionState::Idle);
}

TEST(Session, FramesFollowEnvelopeOracle) {
  const StimParams p = tdcs(1.3, 20);
  const oracle::Envelope env(p);
  Session s = armed(p);
  s.start();
  while (is_running(s.state())) {
    const TelemetryFrame f = s.tick(37);
    const auto t_us = static_cast<std::int64_t>(std::llround(f.t_ms * 1000));
    ASSERT_DOUBLE_EQ(f.commanded_mA, env.tenths(t_us) / 10.0) << f.t_ms;
  }
}

TEST(Session, ZeroTickReemitsFrame) {
  Session s = armed(tdcs(1.0, 10));
  s.start();
  const TelemetryFrame a = s.tick(5000);
  const TelemetryFrame b = s.tick(0);
  EXPECT_EQ(a, b);
  EXPECT_THROW(s.tick(-1), std::invalid_argument);
}

TEST(Session, ShamBlindsDisplay) {
  Session s = armed(tdcs(2.0, 60, true));
  s.start();
  const TelemetryFrame f = run_to(s, 150'000);
  EXPECT_EQ(f.state, SessionState::Dose);
  EXPECT_DOUBLE_EQ(f.displayed_mA, 2.0);
  EXPECT_DOUBLE_EQ(f.actual_mA, 0.0);
  EXPECT_DOUBLE_EQ(f.commanded_mA, 0.0);
  const TelemetryFrame w = run_to(s, 200'000);
  EXPECT_EQ(w.state, SessionState::CoolDown);
  EXPECT_GT(w.commanded_mA, 0.0);
}

TEST(Session, ShamAndRealShowIdenticalDisplay) {
  Session a = armed(tdcs(1.5, 30, false));
  Session b = armed(tdcs(1.5, 30, true));
  a.start();
  b.start();
  while (is_running(a.state())) {
    const auto fa = a.tick(250);
    const auto fb = b.tick(250);
    ASSERT_EQ(fa.t_ms, fb.t_ms);
    ASSERT_EQ(fa.state, fb.state);
    ASSERT_EQ(fa.displayed_mA, fb.displayed_mA);
    if (fa.state != SessionState::Dose) {
      ASSERT_EQ(fa.actual_mA, fb.actual_mA);
    }
  }
}

TEST(Session, AbortAtPlateauRampsThirtySeconds) {
  Session s = armed(tdcs(2.0, 60));
  s.start();
  run_to(s, 150'000);
  const AbortAck ack = s.abort();
  EXPECT_DOUBLE_EQ(ack.ramp_s, 30.0);
  EXPECT_EQ(s.state(), SessionState::CoolDown);
  EXPECT_TRUE(s.aborting());
  EXPECT_DOUBLE_EQ(s.abort().ramp_s, 30.0);  // idempotent
  double prev = 2.0;
  TelemetryFrame f;
  while (is_running(s.state())) {
    f = s.tick(100);
    ASSERT_LE(prev - f.commanded_mA, 0.1 + 1e-12);
    prev = f.commanded_mA;
  }
  EXPECT_EQ(f.state, SessionState::Aborted);
  EXPECT_DOUBLE_EQ(f.t_ms, 180'000);
  EXPECT_THROW(s.abort(), StateError);
}

TEST(Session, AbortDuringWarmUp) {
  Session s = armed(tdcs(2.0, 60));
  s.start();
  run_to(s, 24'000);  // level 0.5 mA from 24 s
  EXPECT_DOUBLE_EQ(s.programmed_level_mA(), 0.5);
  EXPECT_DOUBLE_EQ(s.abort().ramp_s, 7.5);
}

TEST(Session, AbortArmedIsImmediate) {
  Session s = armed(tdcs(2.0, 60));
  EXPECT_DOUBLE_EQ(s.abort().ramp_s, 0.0);
  EXPECT_EQ(s.state(), SessionState::Aborted);
  Session idle;
  EXPECT_THROW(idle.abort(), StateError);
  EXPECT_THROW(idle.start(), StateError);
}

TEST(Session, SetIntensityMiniRamp) {
  Session s = armed(tdcs(2.0, 300));
  s.start();
  EXPECT_FALSE(s.set_intensity(2.5).accepted);  // WarmUp
  run_to(s, 130'000);
  IntensityAck ack = s.set_intensity(2.5);
  ASSERT_TRUE(ack.accepted);
  EXPECT_DOUBLE_EQ(ack.ramp_s, 30.0);
  run_to(s, 160'000);
  EXPECT_DOUBLE_EQ(s.programmed_level_mA(), 2.5);

  const IntensityAck bad = s.set_intensity(4.1);
  EXPECT_FALSE(bad.accepted);
  EXPECT_NE(bad.reason.find("4.0"), std::string::npos);
  EXPECT_DOUBLE_EQ(s.programmed_level_mA(), 2.5);

  const IntensityAck same = s.set_intensity(2.5);
  EXPECT_TRUE(same.accepted);
  EXPECT_DOUBLE_EQ(same.ramp_s, 0.0);

  // Dose end is unchanged; cool-down starts from the new plateau.
  const TelemetryFrame f = run_to(s, 420'000);
  EXPECT_EQ(f.state, SessionState::CoolDown);
  EXPECT_DOUBLE_EQ(f.commanded_mA, 2.5);
  EXPECT_EQ(s.transitions().back().t_ms, 420'000);
}

TEST(Session, NoInstantaneousCut) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    StimParams p = tdcs(std::uniform_int_distribution<int>(1, 40)(rng) / 10.0, 30);
    p.ramp_rate_mA_per_min = std::uniform_real_distribution<double>(1, 4)(rng);
    Session s = armed(p);
    s.start();
    const double dt = 50;
    const double abort_at = std::uniform_real_distribution<double>(0, 200'000)(rng);
    const double retarget_at = std::uniform_real_distribution<double>(0, 200'000)(rng);
    double prev = 0;
    while (is_running(s.state())) {
      const TelemetryFrame f = s.tick(dt);
      const double step = kAbortRampRate_mA_per_min / 60'000 * dt + 0.1 + 1e-9;
      ASSERT_LE(std::abs(f.commanded_mA - prev), step) << trial << " t=" << f.t_ms;
      prev = f.commanded_mA;
      if (std::abs(f.t_ms - retarget_at) < dt / 2 && f.state == SessionState::Dose)
        s.set_intensity(std::uniform_int_distribution<int>(1, 40)(rng) / 10.0);
      if (std::abs(f.t_ms - abort_at) < dt / 2 && is_running(s.state())) s.abort();
    }
    EXPECT_DOUBLE_EQ(prev, 0.0);
  }
}

TEST(Session, DeterministicFrames) {
  StimParams p;
  p.mode = StimMode::TRNS;
  p.intensity_mA = 1.0;
  p.ramp_rate_mA_per_min = 4;
  p.dose_s = 5;
  Session a = armed(p), b = armed(p);
  a.start();
  b.start();
  while (is_running(a.state())) ASSERT_EQ(a.tick(10), b.tick(10));
}

TEST(Session, PulseModeFramesFollowEvents) {
  StimParams p;
  p.mode = StimMode::CES;
  p.intensity_mA = 1.0;
  p.ramp_rate_mA_per_min = 4;
  p.dose_s = 2;
  p.freq_lo_Hz = p.freq_hi_Hz = 2;
  p.duty_pct = 50;
  Session s = armed(p);
  s.start();
  // 2 Hz biphasic: ON for the first 250 ms of every 500 ms, sign alternating.
  // Sample at 100 ms and 350 ms into each period.
  for (int k = 0; k < 40; ++k) {
    const TelemetryFrame on = s.tick(k == 0 ? 100 : 250);
    const auto pulse = static_cast<int>(on.t_ms / 500);
    EXPECT_NE(on.commanded_mA, 0.0) << on.t_ms;
    EXPECT_EQ(on.commanded_mA < 0, pulse % 2 == 1) << on.t_ms;
    const TelemetryFrame off = s.tick(250);
    EXPECT_EQ(off.commanded_mA, 0.0) << off.t_ms;
    // Between pulses the display still shows the programmed level.
    EXPECT_DOUBLE_EQ(off.displayed_mA, on.displayed_mA) << off.t_ms;
    EXPECT_GT(off.displayed_mA, 0.0) << off.t_ms;
  }
}
