#pragma once

// Output electronics model: PWM-DAC intensity path, buffered three-transistor
// current source, and the compliance budget of the 30 V rail.
//
// Currents are in mA, voltages in V, resistances in ohms.

#include <vector>

#include "tesim/trace.hpp"
#include "tesim/waveform.hpp"

namespace tesim {

struct CircuitParams {
  double v_supply_V = 30.0;
  double v_cc_V = 5.0;
  double v_be_on_V = 0.6;    // T2, T3
  double v_ce_sat_V = 0.2;   // T1, T3
  double r_e_ohm = 1000.0;
  double v_early_V = 100.0;  // V_A
  double r_body_ohm = 10000.0;

  bool operator==(const CircuitParams&) const = default;
};

struct CircuitOutput {
  double i_actual_mA = 0.0;
  double v_body_V = 0.0;
  bool compliant = true;
  // Available voltage minus the body voltage the requested current would
  // need. Negative exactly when the stage saturates.
  double headroom_V = 0.0;
};

// Positive voltages/resistances, v_cc below the rail, and v_cc above the
// T3 drops (which keeps the compliance limit strictly under the rail).
std::vector<Violation> validate_circuit(const CircuitParams& c);

double pwm_to_level(double duty_pct, double v_cc_V);

// Ideal transconductance, clamped at cutoff.
double v2i_ideal(double v_intensity_V, const CircuitParams& c);

double available_voltage(const CircuitParams& c);

// Target current less the T1 saturation error.
double i_out_with_error(double i_target_mA, const CircuitParams& c);

// Target current with both the T1 error and the Early-effect correction.
// The clamp at zero is applied after the correction.
double i_out_early(double i_target_mA, double v_intensity_V,
                   const CircuitParams& c);

// Commanded magnitude to delivered current and body voltage. Saturation
// clamps the current at available_voltage / r_body.
CircuitOutput resolve_output(double i_commanded_mA, const CircuitParams& c);

// Renders the schedule at a uniform rate and pushes every sample through
// the stage. Throws std::domain_error below 2x the schedule's pulse rate.
Trace simulate_schedule(const EventSchedule& s, const CircuitParams& c,
                        double sample_rate_Hz);

// Recomputes the actual, v_body and compliant channels from commanded.
void apply_circuit(Trace& t, const CircuitParams& c);

std::vector<std::pair<std::string, std::string>> circuit_metadata(
    const CircuitParams& c);

}  // namespace tesim
