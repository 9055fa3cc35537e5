#pragma once

// A run configuration in unconverted rate units: network, schedule preset,
// integration settings and the unit convention. `scenario()` turns it into
// the integrator's input (schedules rebuilt, convention applied).

#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"
#include "hierarchy.hpp"
#include "network.hpp"

namespace slhswitch {

struct RunConfig {
    /// Rates as quoted (before the convention factor).
    NetworkSpec spec;
    /// Empty when spec.schedules holds explicit breakpoint lists.
    std::optional<SchedulePreset> preset = SchedulePreset::constant;
    /// Opening time of gamma1 in the square preset.
    double t0 = 3.7;
    double t_start = 0.0;
    double t_end = 50.0;
    double dt = 5e-4;
    int record_stride = 100;
    UnitConvention convention = UnitConvention::rad_per_us;
    bool full_hierarchy = false;
    bool full_space = false;

    PresetTimes preset_times() const { return {spec.signal.arrival, spec.control.arrival, t0}; }

    /// Integrator input: preset schedules rebuilt from the current rates and
    /// arrival times, then every rate scaled by the convention.
    Scenario scenario() const
    {
        NetworkSpec s = spec;
        if (preset)
            s.schedules = preset_schedule(*preset, s.rates, preset_times());
        Scenario out;
        out.spec = apply_convention(std::move(s), convention);
        out.t_start = t_start;
        out.t_end = t_end;
        out.dt = dt;
        out.record_stride = record_stride;
        out.full_hierarchy = full_hierarchy;
        out.full_space = full_space;
        out.validate();
        return out;
    }
};

/// Which pulses are present in a run.
enum class PulseSet { on, control_only, signal_only, vacuum };

inline std::string_view to_string(PulseSet p)
{
    switch (p) {
    case PulseSet::on: return "on";
    case PulseSet::control_only: return "control";
    case PulseSet::signal_only: return "signal";
    case PulseSet::vacuum: return "vacuum";
    }
    return "on";
}

inline PulseSet parse_pulse_set(std::string_view name)
{
    if (name == "on")
        return PulseSet::on;
    if (name == "control")
        return PulseSet::control_only;
    if (name == "signal")
        return PulseSet::signal_only;
    if (name == "vacuum")
        return PulseSet::vacuum;
    throw Error(ErrorKind::invalid_argument, "unknown pulse set '" + std::string(name) + "'");
}

inline RunConfig with_pulses(RunConfig cfg, PulseSet p)
{
    cfg.spec.signal.present = p == PulseSet::on || p == PulseSet::signal_only;
    cfg.spec.control.present = p == PulseSet::on || p == PulseSet::control_only;
    return cfg;
}

/// Sweepable parameters. Names are the ones accepted on the command line.
enum class Parameter { gamma1, gamma2, gamma3, dw_s, dw_c, tau, ta_c, t0, J, dt };

inline constexpr std::array<Parameter, 10> all_parameters{
    Parameter::gamma1, Parameter::gamma2, Parameter::gamma3, Parameter::dw_s, Parameter::dw_c,
    Parameter::tau,    Parameter::ta_c,   Parameter::t0,     Parameter::J,    Parameter::dt};

inline std::string_view to_string(Parameter p)
{
    switch (p) {
    case Parameter::gamma1: return "gamma1";
    case Parameter::gamma2: return "gamma2";
    case Parameter::gamma3: return "gamma3";
    case Parameter::dw_s: return "dw_s";
    case Parameter::dw_c: return "dw_c";
    case Parameter::tau: return "tau";
    case Parameter::ta_c: return "ta_c";
    case Parameter::t0: return "t0";
    case Parameter::J: return "J";
    case Parameter::dt: return "dt";
    }
    return "?";
}

inline Parameter parse_parameter(std::string_view name)
{
    for (Parameter p : all_parameters)
        if (to_string(p) == name)
            return p;
    throw Error(ErrorKind::invalid_argument, "unknown sweep parameter '" + std::string(name) + "'");
}

/// Rates, bandwidths and dt must be non-negative (dt, bandwidths > 0).
inline void check_parameter_value(Parameter p, double v)
{
    if (!std::isfinite(v))
        throw Error(ErrorKind::invalid_argument, std::string(to_string(p)) + " value is not finite");
    switch (p) {
    case Parameter::gamma1:
    case Parameter::gamma2:
    case Parameter::gamma3:
    case Parameter::J:
        if (v < 0.0)
            throw Error(ErrorKind::invalid_argument, std::string(to_string(p)) + " must be >= 0");
        break;
    case Parameter::dw_s:
    case Parameter::dw_c:
    case Parameter::dt:
        if (!(v > 0.0))
            throw Error(ErrorKind::invalid_argument, std::string(to_string(p)) + " must be > 0");
        break;
    default:
        break;
    }
}

inline double get_parameter(const RunConfig &cfg, Parameter p)
{
    const PhysicalRates &r = cfg.spec.rates;
    switch (p) {
    case Parameter::gamma1: return r.gamma1;
    case Parameter::gamma2: return r.gamma2;
    case Parameter::gamma3: return r.gamma3;
    case Parameter::dw_s: return cfg.spec.signal.bandwidth;
    case Parameter::dw_c: return cfg.spec.control.bandwidth;
    case Parameter::tau: return cfg.spec.control.arrival - cfg.spec.signal.arrival;
    case Parameter::ta_c: return cfg.spec.control.arrival;
    case Parameter::t0: return cfg.t0;
    case Parameter::J: return r.J;
    case Parameter::dt: return cfg.dt;
    }
    return 0.0;
}

/// tau moves the control arrival relative to the signal arrival. Rate
/// parameters need a preset so the schedules can follow them.
inline void set_parameter(RunConfig &cfg, Parameter p, double v)
{
    check_parameter_value(p, v);
    PhysicalRates &r = cfg.spec.rates;
    const bool rate = p == Parameter::gamma1 || p == Parameter::gamma2 || p == Parameter::gamma3;
    if (rate && !cfg.preset)
        throw Error(ErrorKind::invalid_argument,
                    "sweeping " + std::string(to_string(p)) + " needs a schedule preset");
    switch (p) {
    case Parameter::gamma1: r.gamma1 = v; break;
    case Parameter::gamma2: r.gamma2 = v; break;
    case Parameter::gamma3: r.gamma3 = v; break;
    case Parameter::dw_s: cfg.spec.signal.bandwidth = v; break;
    case Parameter::dw_c: cfg.spec.control.bandwidth = v; break;
    case Parameter::tau: cfg.spec.control.arrival = cfg.spec.signal.arrival + v; break;
    case Parameter::ta_c: cfg.spec.control.arrival = v; break;
    case Parameter::t0: cfg.t0 = v; break;
    case Parameter::J: r.J = v; break;
    case Parameter::dt: cfg.dt = v; break;
    }
}

} // namespace slhswitch
