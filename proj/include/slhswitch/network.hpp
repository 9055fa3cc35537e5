#pragma once

// Physical model of the switch: Jaynes-Cummings spectrum, rotating-frame
// Hamiltonians for the single-cavity (A) and filtered (B) networks, the
// coupling operators with time-dependent rates, and the single-photon
// wavepackets that drive channels 1 and 3.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "operator.hpp"

namespace slhswitch {

enum class Variant { A, B };

inline std::string_view to_string(Variant v) { return v == Variant::A ? "A" : "B"; }

/// How rate numbers quoted in "MHz" are turned into angular rates.
enum class UnitConvention {
    rad_per_us,    ///< loaded verbatim as rad/us
    cycles_per_us, ///< multiplied by 2*pi
};

inline std::string_view to_string(UnitConvention c)
{
    return c == UnitConvention::rad_per_us ? "rad_per_us" : "cycles_per_us";
}

inline double rate_scale(UnitConvention c)
{
    return c == UnitConvention::rad_per_us ? 1.0 : 2.0 * std::numbers::pi;
}

/// Tensor slots used throughout: cavity 1, qubit, and (variant B) cavity 2.
inline constexpr std::size_t cavity1_slot = 0;
inline constexpr std::size_t qubit_slot = 1;
inline constexpr std::size_t cavity2_slot = 2;

inline constexpr std::size_t channel_count = 3;

/// All values in rate units (angular frequency, 1/us).
struct PhysicalRates {
    double omega0 = 4000.0;
    double g = 400.0;
    double J = 0.0;
    double gamma1 = 3.5;
    double gamma2 = 0.0;
    double gamma3 = 6.0;
    double delta_s = -(std::numbers::sqrt2 - 1.0) * 400.0;
    double delta_c = -400.0;
    /// Cavity-2 frequency relative to the signal carrier; zero keeps the
    /// filter resonant with the signal.
    double delta_filter = 0.0;

    double delta_sc() const { return delta_s - delta_c; }

    /// Carriers tuned to the JC ladder: the control drives |0,g> -> |1,->
    /// and the signal drives |1,-> -> |2,->.
    void set_default_carriers()
    {
        delta_s = -(std::numbers::sqrt2 - 1.0) * g;
        delta_c = -g;
    }

    std::array<double, channel_count> gammas() const { return {gamma1, gamma2, gamma3}; }
};

struct PulseSpec {
    double bandwidth = 4.0;
    double arrival = 5.0;
    bool present = true;
    /// Global phase applied to the envelope; zero for every physical run.
    double phase = 0.0;
};

/// Piecewise-constant, right-continuous rate: values[k] holds on
/// [breakpoints[k-1], breakpoints[k]).
class CouplingSchedule {
public:
    CouplingSchedule() : values_{0.0} {}

    static CouplingSchedule constant(double value) { return CouplingSchedule({}, {value}); }

    CouplingSchedule(std::vector<double> breakpoints, std::vector<double> values)
        : breakpoints_(std::move(breakpoints)), values_(std::move(values))
    {
        if (values_.size() != breakpoints_.size() + 1)
            throw Error(ErrorKind::invalid_argument,
                        "schedule needs exactly one more value than breakpoints");
        for (std::size_t k = 1; k < breakpoints_.size(); ++k)
            if (!(breakpoints_[k] > breakpoints_[k - 1]))
                throw Error(ErrorKind::invalid_argument, "schedule breakpoints must strictly increase");
        for (double v : values_)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw Error(ErrorKind::invalid_argument, "schedule rates must be finite and >= 0");
    }

    double operator()(double t) const
    {
        const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
        return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
    }

    const std::vector<double> &breakpoints() const noexcept { return breakpoints_; }
    const std::vector<double> &values() const noexcept { return values_; }

    bool is_constant() const noexcept { return breakpoints_.empty(); }

    CouplingSchedule scaled(double factor) const
    {
        std::vector<double> v = values_;
        for (double &x : v)
            x *= factor;
        return {breakpoints_, std::move(v)};
    }

    friend bool operator==(const CouplingSchedule &, const CouplingSchedule &) = default;

private:
    std::vector<double> breakpoints_;
    std::vector<double> values_;
};

using ScheduleSet = std::array<CouplingSchedule, channel_count>;

struct NetworkSpec {
    Variant variant = Variant::A;
    PhysicalRates rates;
    ScheduleSet schedules = {CouplingSchedule::constant(3.5), CouplingSchedule::constant(0.0),
                             CouplingSchedule::constant(6.0)};
    PulseSpec signal{11.0, 5.0, true, 0.0};
    PulseSpec control{3.0, 4.8, true, 0.0};
    std::size_t cavity_cutoff = 2;
    std::size_t cavity2_cutoff = 2;

    SpaceSignature signature() const
    {
        if (variant == Variant::A)
            return SpaceSignature{cavity_cutoff + 1, 2};
        return SpaceSignature{cavity_cutoff + 1, 2, cavity2_cutoff + 1};
    }

    const PulseSpec &pulse(std::size_t channel) const
    {
        static const PulseSpec vacuum{1.0, 0.0, false, 0.0};
        if (channel == 0)
            return signal;
        if (channel == 2)
            return control;
        return vacuum;
    }

    /// Schedules rebuilt as constants from the current base rates.
    void use_constant_schedules()
    {
        schedules = {CouplingSchedule::constant(rates.gamma1),
                     CouplingSchedule::constant(rates.gamma2),
                     CouplingSchedule::constant(rates.gamma3)};
    }
};

enum class Branch { minus, plus };

/// Energy of the N-excitation JC doublet (hbar = 1).
inline double jc_eigenenergy(int N, Branch branch, double omega_cavity, double omega_qubit, double g)
{
    if (N < 1)
        throw Error(ErrorKind::invalid_argument, "JC manifold index must be >= 1");
    if (g < 0)
        throw Error(ErrorKind::invalid_argument, "JC coupling must be >= 0");
    const double detuning = omega_cavity - omega_qubit;
    const double split = 0.5 * std::sqrt(detuning * detuning + 4.0 * g * g * N);
    const double centre = (N - 1) * omega_cavity + 0.5 * (omega_cavity + omega_qubit);
    return branch == Branch::plus ? centre + split : centre - split;
}

/// Time-reversed exponential envelope; identically zero from the arrival
/// time on and for absent pulses.
inline double xi(const PulseSpec &pulse, double t)
{
    if (!pulse.present || t >= pulse.arrival)
        return 0.0;
    return std::sqrt(pulse.bandwidth) * std::exp(0.5 * pulse.bandwidth * (t - pulse.arrival));
}

/// Envelope evaluated on a chosen side of the arrival kink. Used by the
/// integrator so a stage sitting exactly on t_a sees the limit from its own
/// segment.
inline cplx xi_branch(const PulseSpec &pulse, double t, bool before_arrival)
{
    if (!pulse.present || !before_arrival)
        return {};
    const double amp = std::sqrt(pulse.bandwidth) * std::exp(0.5 * pulse.bandwidth * (t - pulse.arrival));
    return pulse.phase == 0.0 ? cplx{amp} : std::polar(amp, pulse.phase);
}

inline cplx xi_complex(const PulseSpec &pulse, double t)
{
    return xi_branch(pulse, t, t < pulse.arrival);
}

/// Bare system operators in the network's tensor space.
struct NetworkOperators {
    Operator a1;
    Operator sigma_minus;
    Operator a2; ///< empty for variant A

    explicit NetworkOperators(const NetworkSpec &spec)
    {
        const SpaceSignature sig = spec.signature();
        a1 = embed(annihilation(spec.cavity_cutoff + 1), cavity1_slot, sig);
        sigma_minus = embed(qubit_lowering(), qubit_slot, sig);
        if (spec.variant == Variant::B)
            a2 = embed(annihilation(spec.cavity2_cutoff + 1), cavity2_slot, sig);
    }

    /// Unscaled jump operator of each channel.
    std::array<Operator, channel_count> channel_operators(Variant variant) const
    {
        return {a1, variant == Variant::A ? a1 : a2, sigma_minus};
    }
};

/// H(t) = static_part + coupling_phase(t) * exchange + h.c., where
/// exchange = g a1 sigma_+ carries the e^{-i Delta_sc t} rotation.
struct HamiltonianParts {
    Operator static_part;
    Operator exchange;
    double delta_sc = 0.0;

    cplx phase(double t) const { return std::polar(1.0, -delta_sc * t); }

    Operator at(double t) const
    {
        const cplx p = phase(t);
        return static_part + p * exchange + std::conj(p) * exchange.adjoint();
    }
};

inline HamiltonianParts hamiltonian_parts(const NetworkSpec &spec)
{
    const NetworkOperators ops(spec);
    const PhysicalRates &r = spec.rates;
    const Operator n1 = ops.a1.adjoint() * ops.a1;
    const Operator ne = ops.sigma_minus.adjoint() * ops.sigma_minus;
    Operator h0 = cplx{-r.delta_s} * n1 + cplx{-r.delta_c} * ne;
    if (spec.variant == Variant::B) {
        const Operator hop = ops.a1.adjoint() * ops.a2;
        h0 += cplx{r.delta_filter} * (ops.a2.adjoint() * ops.a2);
        h0 += cplx{r.J} * (hop + hop.adjoint());
    }
    Operator exchange = cplx{r.g} * (ops.a1 * ops.sigma_minus.adjoint());
    return {std::move(h0), std::move(exchange), r.delta_sc()};
}

/// Rotating-frame system Hamiltonian at time t.
inline Operator hamiltonian(const NetworkSpec &spec, double t) { return hamiltonian_parts(spec).at(t); }

/// Jump operators (L1, L2, L3) at time t with right-continuous rates. The
/// scattering matrix of the network is the identity.
inline std::array<Operator, channel_count> coupling_ops(const NetworkSpec &spec, double t)
{
    const NetworkOperators ops(spec);
    auto bare = ops.channel_operators(spec.variant);
    for (std::size_t i = 0; i < channel_count; ++i)
        bare[i] *= cplx{std::sqrt(spec.schedules[i](t))};
    return bare;
}

/// Sorted, deduplicated union of every schedule breakpoint and both pulse
/// arrival times.
inline std::vector<double> schedule_breakpoints(const NetworkSpec &spec)
{
    std::vector<double> times;
    for (const auto &s : spec.schedules)
        times.insert(times.end(), s.breakpoints().begin(), s.breakpoints().end());
    times.push_back(spec.signal.arrival);
    times.push_back(spec.control.arrival);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return times;
}

enum class SchedulePreset { constant, stepA, stepB, square };

inline SchedulePreset parse_schedule_preset(std::string_view name)
{
    if (name == "constant")
        return SchedulePreset::constant;
    if (name == "stepA")
        return SchedulePreset::stepA;
    if (name == "stepB")
        return SchedulePreset::stepB;
    if (name == "square")
        return SchedulePreset::square;
    throw Error(ErrorKind::invalid_argument, "unknown schedule preset '" + std::string(name) + "'");
}

inline std::string_view to_string(SchedulePreset p)
{
    switch (p) {
    case SchedulePreset::constant: return "constant";
    case SchedulePreset::stepA: return "stepA";
    case SchedulePreset::stepB: return "stepB";
    case SchedulePreset::square: return "square";
    }
    return "constant";
}

struct PresetTimes {
    double signal_arrival = 5.0;
    double control_arrival = 4.3;
    double t0 = 3.7;
};

/// Rate schedules of the four coupling configurations:
///   constant  every rate fixed
///   stepA     gamma1, gamma3 close and gamma2 opens at the signal arrival
///   stepB     as stepA but gamma3 closes at the control arrival
///   square    as stepB with gamma1 open only on [t0, signal arrival)
inline ScheduleSet preset_schedule(SchedulePreset preset, const PhysicalRates &rates,
                                   const PresetTimes &times)
{
    const double ts = times.signal_arrival;
    const double tc = times.control_arrival;
    auto open_until = [](double gamma, double t) { return CouplingSchedule({t}, {gamma, 0.0}); };
    auto open_from = [](double gamma, double t) { return CouplingSchedule({t}, {0.0, gamma}); };

    switch (preset) {
    case SchedulePreset::constant:
        return {CouplingSchedule::constant(rates.gamma1), CouplingSchedule::constant(rates.gamma2),
                CouplingSchedule::constant(rates.gamma3)};
    case SchedulePreset::stepA:
        return {open_until(rates.gamma1, ts), open_from(rates.gamma2, ts), open_until(rates.gamma3, ts)};
    case SchedulePreset::stepB:
        return {open_until(rates.gamma1, ts), open_from(rates.gamma2, ts), open_until(rates.gamma3, tc)};
    case SchedulePreset::square:
        if (!(times.t0 < ts))
            throw Error(ErrorKind::invalid_argument, "square preset needs t0 < signal arrival");
        return {CouplingSchedule({times.t0, ts}, {0.0, rates.gamma1, 0.0}),
                open_from(rates.gamma2, ts), open_until(rates.gamma3, tc)};
    }
    throw Error(ErrorKind::invalid_argument, "unknown schedule preset");
}

inline ScheduleSet preset_schedule(std::string_view name, const PhysicalRates &rates,
                                   const PresetTimes &times)
{
    return preset_schedule(parse_schedule_preset(name), rates, times);
}

/// Copy of `spec` with every rate multiplied by the convention's factor.
/// Times are left untouched.
inline NetworkSpec apply_convention(NetworkSpec spec, UnitConvention convention)
{
    const double s = rate_scale(convention);
    if (s == 1.0)
        return spec;
    PhysicalRates &r = spec.rates;
    r.omega0 *= s;
    r.g *= s;
    r.J *= s;
    r.gamma1 *= s;
    r.gamma2 *= s;
    r.gamma3 *= s;
    r.delta_s *= s;
    r.delta_c *= s;
    r.delta_filter *= s;
    for (auto &sch : spec.schedules)
        sch = sch.scaled(s);
    spec.signal.bandwidth *= s;
    spec.control.bandwidth *= s;
    return spec;
}

} // namespace slhswitch
