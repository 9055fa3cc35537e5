#include <gtest/gtest.h>

#include "slhswitch/metrics.hpp"
#include "slhswitch/reference.hpp"

using namespace slhswitch;

namespace {

Operator diagonal_state(const SpaceSignature &sig, const std::vector<std::pair<std::vector<std::size_t>, double>> &pop)
{
    Operator rho = Operator::zero(sig);
    for (const auto &[idx, w] : pop)
        rho = rho + w * basis_projector(idx, sig);
    return rho;
}

Trajectory fake_run(double t_end, double phi2, bool converged = true)
{
    Trajectory t;
    FluxSample s;
    s.t = t_end;
    s.Phi = {0.0, phi2, 0.0};
    t.record.samples.push_back(s);
    t.converged = converged;
    return t;
}

} // namespace

TEST(P2, ProjectsOntoDoublyExcitedStates)
{
    const SpaceSignature sig{3, 2};
    const Operator rho = diagonal_state(sig, {{{1, 1}, 0.25}, {{2, 0}, 0.1}, {{0, 0}, 0.5}, {{1, 0}, 0.15}});
    const ExcitationProbabilities p = p2(rho, sig);
    EXPECT_NEAR(p.p1e, 0.25, 1e-15);
    EXPECT_NEAR(p.p2g, 0.1, 1e-15);
    EXPECT_NEAR(p.p2, 0.35, 1e-15);
}

TEST(P2, VariantBTracesOutFilterCavity)
{
    const SpaceSignature sig{3, 2, 3};
    const Operator rho = diagonal_state(sig, {{{1, 1, 0}, 0.2}, {{1, 1, 2}, 0.1}, {{2, 0, 1}, 0.3}, {{0, 1, 1}, 0.4}});
    EXPECT_NEAR(p2(rho, sig).p2, 0.6, 1e-15);
}

TEST(P2, BoundsAndErrors)
{
    const SpaceSignature sig{3, 2};
    const Operator pure = basis_projector({1, 1}, sig);
    EXPECT_EQ(p2(pure, sig).p2, 1.0);
    EXPECT_EQ(p2(basis_projector({0, 1}, sig), sig).p2, 0.0);
    EXPECT_THROW(p2(Operator::identity(SpaceSignature{2, 2}), SpaceSignature{2, 2}), Error);
    EXPECT_THROW(p2(pure, SpaceSignature{4, 2}), Error);
}

TEST(Extinction, Decibels)
{
    EXPECT_NEAR(extinction_ratio(0.5, 0.5).db, 0.0, 1e-15);
    EXPECT_NEAR(extinction_ratio(0.3, 3e-4).db, 30.0, 1e-12);
    const ExtinctionRatio inf = extinction_ratio(0.3, 0.0);
    EXPECT_FALSE(inf.finite);
    EXPECT_TRUE(std::isinf(inf.db) && inf.db > 0);
    EXPECT_TRUE(extinction_ratio(0.2, 1e-3).finite);
}

TEST(Extinction, ScaleInvariant)
{
    for (double k : {1e-3, 0.5, 7.0})
        EXPECT_NEAR(extinction_ratio(k * 0.42, k * 1.3e-4).db, extinction_ratio(0.42, 1.3e-4).db, 1e-12);
}

TEST(SwitchMetrics, Assembly)
{
    const SwitchMetrics m = switch_metrics(fake_run(50.0, 0.3), fake_run(50.0, 0.01), fake_run(50.0, 3e-5));
    EXPECT_NEAR(m.difference, 0.29, 1e-15);
    EXPECT_NEAR(m.extinction.db, 10.0 * std::log10(1e4), 1e-12);
    EXPECT_TRUE(m.converged);
    EXPECT_FALSE(switch_metrics(fake_run(50.0, 0.3, false), fake_run(50.0, 0.0), fake_run(50.0, 0.0)).converged);
}

TEST(SwitchMetrics, HorizonMismatchIsAnError)
{
    EXPECT_THROW(switch_metrics(fake_run(50.0, 0.3), fake_run(50.0, 0.0), fake_run(49.0, 0.0)), Error);
    EXPECT_THROW(switch_metrics(Trajectory{}, fake_run(50.0, 0.0), fake_run(50.0, 0.0)), Error);
}

TEST(SwitchMetrics, NoPulsesGivesZerosAndSentinel)
{
    RunConfig c = with_pulses(reference::flux_optimum(), PulseSet::vacuum);
    c.t_end = 6.0;
    const Trajectory v = integrate(c.scenario());
    const SwitchMetrics m = switch_metrics(v, v, v);
    EXPECT_EQ(m.phi2_on, 0.0);
    EXPECT_EQ(m.difference, 0.0);
    EXPECT_FALSE(m.extinction.finite);
    EXPECT_EQ(m.max_p2, 0.0);
}

TEST(Flux, ControlOnlyIgnoresSignalBandwidth)
{
    RunConfig c = with_pulses(reference::flux_optimum(), PulseSet::control_only);
    c.t_end = 15.0;
    const Trajectory a = integrate(c.scenario());
    c.spec.signal.bandwidth = 2.0;
    const Trajectory b = integrate(c.scenario());
    EXPECT_EQ(a.record.back().Phi, b.record.back().Phi);
}

TEST(Flux, NonNegativeAndIntegratesToPhi)
{
    RunConfig c = reference::ladder(SchedulePreset::square);
    c.t_end = 20.0;
    c.record_stride = 1;
    const Scenario sc = c.scenario();
    const Trajectory t = integrate(sc);
    const auto breaks = schedule_breakpoints(sc.spec);
    const auto &s = t.record.samples;
    // Phi(T) = integral of phi; the steps that end on a discontinuity are
    // integrated with the left limit, approximated by the previous sample.
    std::array<double, channel_count> acc{};
    for (std::size_t k = 0; k < s.size(); ++k) {
        const bool jump = std::find(breaks.begin(), breaks.end(), s[k].t) != breaks.end();
        for (std::size_t i = 0; i < channel_count; ++i) {
            EXPECT_GE(s[k].phi[i], -1e-9);
            if (k > 0)
                acc[i] += (s[k].t - s[k - 1].t) * (jump ? s[k - 1].phi[i] : 0.5 * (s[k].phi[i] + s[k - 1].phi[i]));
        }
        EXPECT_GE(s[k].p2, -1e-12);
        EXPECT_LE(s[k].p2, 1.0 + 1e-9);
    }
    for (std::size_t i = 0; i < channel_count; ++i)
        EXPECT_NEAR(acc[i], s.back().Phi[i], 2e-4);
}

TEST(Flux, MatchedCavityReemitsPhoton)
{
    // Qubit effectively decoupled, input pulse fully inside the window.
    RunConfig c;
    c.spec.rates.g = 1e-9;
    c.spec.rates.delta_s = 0.0;
    c.spec.rates.gamma1 = 3.0;
    c.spec.rates.gamma2 = 0.0;
    c.spec.rates.gamma3 = 0.0;
    c.spec.signal = {3.0, 6.0, true, 0.0};
    c.spec.control.present = false;
    c.t_end = 15.0;
    const Trajectory t = integrate(c.scenario());
    EXPECT_NEAR(t.record.back().Phi[0], 1.0, 1e-3);
    EXPECT_NEAR(t.record.back().Phi[1], 0.0, 1e-15);
}
