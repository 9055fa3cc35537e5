#pragma once

// Canonical configurations of the switch: the optimization starting point,
// the double-excitation optimum, the constant-rate flux optimum, the
// time-dependent ladder, the filtered network and the recovery run.

#include "config.hpp"

namespace slhswitch::reference {

/// Starting point of the staged optimization.
inline RunConfig protocol_start()
{
    RunConfig c;
    c.spec.rates.gamma1 = 6.0;
    c.spec.rates.gamma2 = 0.0;
    c.spec.rates.gamma3 = 6.0;
    c.spec.signal = {4.0, 5.0, true, 0.0};
    c.spec.control = {4.0, 5.0, true, 0.0};
    return c;
}

/// Double-excitation optimum, output channel closed.
inline RunConfig p2_optimum()
{
    RunConfig c;
    c.spec.rates.gamma1 = 3.5;
    c.spec.rates.gamma2 = 0.0;
    c.spec.rates.gamma3 = 6.0;
    c.spec.signal = {11.0, 5.0, true, 0.0};
    c.spec.control = {3.0, 4.8, true, 0.0};
    return c;
}

/// Constant rates with the output channel at its optimum.
inline RunConfig flux_optimum()
{
    RunConfig c = p2_optimum();
    c.spec.rates.gamma2 = 3.5;
    return c;
}

inline constexpr double stepB_control_arrival = 4.3;
inline constexpr double square_t0 = 3.7;

/// One rung of the time-dependent ladder on variant A.
inline RunConfig ladder(SchedulePreset preset)
{
    RunConfig c = flux_optimum();
    c.preset = preset;
    if (preset == SchedulePreset::stepB || preset == SchedulePreset::square)
        c.spec.control.arrival = stepB_control_arrival;
    c.t0 = square_t0;
    return c;
}

/// Filtered network with the square schedule.
inline RunConfig model_b(double J = 1.0)
{
    RunConfig c = ladder(SchedulePreset::square);
    c.spec.variant = Variant::B;
    c.spec.rates.J = J;
    return c;
}

inline constexpr double recovery_time = 30.0;

/// Filtered network whose qubit channel re-opens at `t1` so the stored
/// control excitation can leave.
inline RunConfig recovery(double t1 = recovery_time)
{
    RunConfig c = model_b();
    ScheduleSet s = preset_schedule(SchedulePreset::square, c.spec.rates, c.preset_times());
    const double g3 = c.spec.rates.gamma3;
    s[2] = CouplingSchedule({c.spec.control.arrival, t1}, {g3, 0.0, g3});
    c.spec.schedules = s;
    c.preset.reset();
    return c;
}

} // namespace slhswitch::reference
