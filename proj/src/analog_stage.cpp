#include "tesim/analog_stage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tesim {

namespace {

constexpr double kMilli = 1000.0;

}  // namespace

std::vector<Violation> validate_circuit(const CircuitParams& c) {
  std::vector<Violation> v;
  auto positive = [&](const char* field, double value, const char* unit) {
    if (!(std::isfinite(value) && value > 0))
      v.push_back({field, value, "must be positive", std::string("> 0 ") + unit});
  };
  positive("v_supply_V", c.v_supply_V, "V");
  positive("v_cc_V", c.v_cc_V, "V");
  positive("v_be_on_V", c.v_be_on_V, "V");
  positive("v_ce_sat_V", c.v_ce_sat_V, "V");
  positive("r_e_ohm", c.r_e_ohm, "ohm");
  positive("v_early_V", c.v_early_V, "V");
  positive("r_body_ohm", c.r_body_ohm, "ohm");
  if (!(c.v_cc_V < c.v_supply_V))
    v.push_back({"v_cc_V", c.v_cc_V, "logic rail must be below the output rail",
                 "< v_supply_V"});
  if (!(c.v_cc_V > c.v_be_on_V + c.v_ce_sat_V))
    v.push_back({"v_cc_V", c.v_cc_V,
                 "logic rail must exceed the T3 base-emitter and saturation drops",
                 "> v_be_on_V + v_ce_sat_V"});
  return v;
}

double pwm_to_level(double duty_pct, double v_cc_V) {
  if (!(duty_pct >= 0.0 && duty_pct <= 100.0))
    throw std::domain_error("pwm_to_level: duty must be within [0, 100] %");
  return v_cc_V * duty_pct / 100.0;
}

double v2i_ideal(double v_intensity_V, const CircuitParams& c) {
  return std::max(0.0, (v_intensity_V - c.v_be_on_V) / c.r_e_ohm * kMilli);
}

double available_voltage(const CircuitParams& c) {
  return c.v_supply_V - (c.v_cc_V - c.v_be_on_V - c.v_ce_sat_V);
}

double i_out_with_error(double i_target_mA, const CircuitParams& c) {
  return std::max(0.0, i_target_mA - c.v_ce_sat_V / c.r_e_ohm * kMilli);
}

double i_out_early(double i_target_mA, double v_intensity_V,
                   const CircuitParams& c) {
  const double base = i_target_mA - c.v_ce_sat_V / c.r_e_ohm * kMilli;
  const double factor =
      1.0 + ((c.v_cc_V - c.v_be_on_V) - (v_intensity_V - c.v_be_on_V)) /
                c.v_early_V;
  return std::max(0.0, base * factor);
}

CircuitOutput resolve_output(double i_commanded_mA, const CircuitParams& c) {
  const double available = available_voltage(c);
  if (!(i_commanded_mA > 0.0)) return {0.0, 0.0, true, available};
  const double v_intensity = c.v_be_on_V + i_commanded_mA / kMilli * c.r_e_ohm;
  const double i = i_out_early(i_commanded_mA, v_intensity, c);
  const double v_demand = i * c.r_body_ohm / kMilli;
  if (v_demand <= available) return {i, v_demand, true, available - v_demand};
  const double i_sat = available / c.r_body_ohm * kMilli;
  return {i_sat, i_sat * c.r_body_ohm / kMilli, false, available - v_demand};
}

void apply_circuit(Trace& t, const CircuitParams& c) {
  const std::size_t n = t.commanded_mA.size();
  t.actual_mA.resize(n);
  t.v_body_V.resize(n);
  t.compliant.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cmd = t.commanded_mA[i];
    const CircuitOutput o = resolve_output(std::abs(cmd), c);
    const double sign = cmd < 0 ? -1.0 : 1.0;
    t.actual_mA[i] = sign * o.i_actual_mA;
    t.v_body_V[i] = sign * o.v_body_V;
    t.compliant[i] = o.compliant ? 1 : 0;
  }
  for (auto& kv : t.meta)
    if (kv.first == "stage") kv.second = "bjt";
}

Trace simulate_schedule(const EventSchedule& s, const CircuitParams& c,
                        double sample_rate_Hz) {
  const double max_freq = schedule_max_freq_Hz(s);
  if (!(sample_rate_Hz > 0) || sample_rate_Hz < 2.0 * max_freq)
    throw std::domain_error("simulate_schedule: sample rate " +
                            format_double(sample_rate_Hz) +
                            " Hz is below twice the " + format_double(max_freq) +
                            " Hz pulse rate");
  const auto n = static_cast<std::size_t>(std::ceil(
      static_cast<double>(s.total_duration_us) * sample_rate_Hz / 1e6 - 1e-9));
  Trace t;
  t.sample_rate_Hz = sample_rate_Hz;
  t.resize(n);
  std::size_t cursor = 0;
  const auto& ev = s.events;
  for (std::size_t i = 0; i < n; ++i) {
    const double t_us = static_cast<double>(i) * 1e6 / sample_rate_Hz;
    while (cursor < ev.size() && static_cast<double>(ev[cursor].end_us()) <= t_us)
      ++cursor;
    if (cursor < ev.size() && static_cast<double>(ev[cursor].t_start_us) <= t_us)
      t.commanded_mA[i] = ev[cursor].signed_mA();
  }
  apply_circuit(t, c);
  t.meta = params_metadata(s.params);
  for (const auto& kv : circuit_metadata(c)) t.meta.push_back(kv);
  t.meta.emplace_back("stage", "bjt");
  return t;
}

std::vector<std::pair<std::string, std::string>> circuit_metadata(
    const CircuitParams& c) {
  return {{"v_supply_V", format_double(c.v_supply_V)},
          {"v_cc_V", format_double(c.v_cc_V)},
          {"v_be_on_V", format_double(c.v_be_on_V)},
          {"v_ce_sat_V", format_double(c.v_ce_sat_V)},
          {"r_e_ohm", format_double(c.r_e_ohm)},
          {"v_early_V", format_double(c.v_early_V)},
          {"r_body_ohm", format_double(c.r_body_ohm)}};
}

}  // namespace tesim
