#pragma once

// Text serializations of run results: the time-series CSV, the run
// summary and the sweep surface. Numbers are printed with 12 significant
// digits; line endings are '\n' on every platform.

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include <json.hpp>

#include "config.hpp"
#include "config_json.hpp"
#include "hierarchy.hpp"
#include "metrics.hpp"
#include "sweep.hpp"

namespace slhswitch {

inline constexpr const char *summary_schema = "slhswitch.summary/1";
inline constexpr const char *timeseries_header = "t,phi1,phi2,phi3,Phi1,Phi2,Phi3,P2,P1e,P2g,gamma1,gamma2,gamma3";

inline std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_timeseries(std::ostream &os, const FluxRecord &record)
{
    os << timeseries_header << '\n';
    for (const auto &s : record.samples) {
        os << format_number(s.t);
        for (double v : s.phi)
            os << ',' << format_number(v);
        for (double v : s.Phi)
            os << ',' << format_number(v);
        os << ',' << format_number(s.p2) << ',' << format_number(s.p1e) << ',' << format_number(s.p2g);
        for (double v : s.gamma)
            os << ',' << format_number(v);
        os << '\n';
    }
}

/// JSON has no infinity; the +inf sentinel is written as null with a flag.
inline nlohmann::json extinction_json(const ExtinctionRatio &r)
{
    return {{"dB", r.finite ? nlohmann::json(r.db) : nlohmann::json(nullptr)}, {"finite", r.finite}};
}

inline nlohmann::json run_summary(const RunConfig &cfg, PulseSet pulses, const Trajectory &t)
{
    const FluxSample &fin = t.record.back();
    nlohmann::json j{
        {"schema", summary_schema},
        {"convention", std::string(to_string(cfg.convention))},
        {"dt", cfg.dt},
        {"T_end", fin.t},
        {"pulses", std::string(to_string(pulses))},
        {"Phi", fin.Phi},
        {"max_P2", t.max_p2},
        {"steps", t.steps},
        {"flux_residual", t.flux_residual},
        {"converged", t.converged},
    };
    switch (pulses) {
    case PulseSet::on: j["Phi2_on"] = fin.Phi[1]; break;
    case PulseSet::signal_only: j["Phi2_off"] = fin.Phi[1]; break;
    case PulseSet::control_only: j["Phi2_control"] = fin.Phi[1]; break;
    case PulseSet::vacuum: break;
    }
    return j;
}

inline nlohmann::json metrics_json(const SwitchMetrics &m)
{
    return {
        {"Phi2_on", m.phi2_on},
        {"Phi2_control", m.phi2_control},
        {"Phi2_off", m.phi2_signal},
        {"difference", m.difference},
        {"extinction", extinction_json(m.extinction)},
        {"max_P2", m.max_p2},
        {"T_end", m.t_end},
        {"converged", m.converged},
    };
}

/// One row per grid point in grid order.
inline void write_surface(std::ostream &os, const SweepResult &r)
{
    for (const auto &a : r.axes)
        os << to_string(a.parameter) << ',';
    os << "objective,converged,max_P2,Phi1,Phi2,Phi3,Phi2_control,flux_residual\n";
    for (const auto &p : r.points) {
        for (double c : p.coords)
            os << format_number(c) << ',';
        os << format_number(p.value) << ',' << (p.converged ? 1 : 0) << ',' << format_number(p.max_p2);
        for (double v : p.Phi)
            os << ',' << format_number(v);
        os << ',' << format_number(p.phi2_control) << ',' << format_number(p.flux_residual) << '\n';
    }
}

inline nlohmann::json argmax_json(const SweepResult &r)
{
    nlohmann::json j{
        {"schema", summary_schema},
        {"objective", r.objective.to_string()},
        {"convention", std::string(to_string(r.base.convention))},
        {"dt", r.base.dt},
        {"T_end", r.base.t_end},
        {"grid_points", r.points.size()},
        {"distinct_runs", r.distinct_runs},
        {"base", to_json(r.base)},
    };
    if (!r.argmax) {
        j["argmax"] = nullptr;
        return j;
    }
    const PointResult &p = r.best();
    nlohmann::json at = nlohmann::json::object();
    for (std::size_t a = 0; a < r.axes.size(); ++a)
        at[std::string(to_string(r.axes[a].parameter))] = p.coords[a];
    j["argmax"] = at;
    j["value"] = p.value;
    j["converged"] = p.converged;
    j["flux_residual"] = p.flux_residual;
    return j;
}

} // namespace slhswitch
