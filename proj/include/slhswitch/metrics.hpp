#pragma once

// Switch figures of merit assembled from the ON, control-only and
// signal-only runs of one configuration.

#include <cmath>

#include "config.hpp"
#include "hierarchy.hpp"
#include "observables.hpp"

namespace slhswitch {

struct SwitchMetrics {
    double phi2_on = 0.0;      ///< Phi2^(s,c)(T_end)
    double phi2_control = 0.0; ///< Phi2^(c)(T_end)
    double phi2_signal = 0.0;  ///< Phi2^(s)(T_end)
    double difference = 0.0;   ///< Phi2^(s,c) - Phi2^(c)
    ExtinctionRatio extinction; ///< ON over signal-only
    double max_p2 = 0.0;       ///< from the ON run
    double t_end = 0.0;
    bool converged = true;     ///< all three runs
};

/// Horizons must agree to the last bit; the three runs come from one config.
inline SwitchMetrics switch_metrics(const Trajectory &on, const Trajectory &control_only,
                                    const Trajectory &signal_only)
{
    const Trajectory *runs[] = {&on, &control_only, &signal_only};
    for (const Trajectory *t : runs)
        if (t->record.samples.empty())
            throw Error(ErrorKind::invalid_argument, "switch_metrics: empty trajectory");
    const double horizon = on.record.back().t;
    if (control_only.record.back().t != horizon || signal_only.record.back().t != horizon)
        throw Error(ErrorKind::invalid_argument, "switch_metrics: runs end at different times");

    SwitchMetrics m;
    m.t_end = horizon;
    m.phi2_on = on.record.back().Phi[1];
    m.phi2_control = control_only.record.back().Phi[1];
    m.phi2_signal = signal_only.record.back().Phi[1];
    m.difference = m.phi2_on - m.phi2_control;
    m.extinction = extinction_ratio(m.phi2_on, m.phi2_signal);
    m.max_p2 = on.max_p2;
    m.converged = on.converged && control_only.converged && signal_only.converged;
    return m;
}

struct SwitchRuns {
    Trajectory on;
    Trajectory control_only;
    Trajectory signal_only;
    SwitchMetrics metrics;
};

inline SwitchRuns run_switch(const RunConfig &cfg)
{
    SwitchRuns r;
    r.on = integrate(with_pulses(cfg, PulseSet::on).scenario());
    r.control_only = integrate(with_pulses(cfg, PulseSet::control_only).scenario());
    r.signal_only = integrate(with_pulses(cfg, PulseSet::signal_only).scenario());
    r.metrics = switch_metrics(r.on, r.control_only, r.signal_only);
    return r;
}

} // namespace slhswitch
