#include <gtest/gtest.h>

#include <numbers>

#include "slhswitch/sweep.hpp"

using namespace slhswitch;

namespace {

RunConfig short_run(RunConfig c, double t_end = 10.0)
{
    c.t_end = t_end;
    return c;
}

SweepOptions serial()
{
    SweepOptions o;
    o.threads = 1;
    o.include_unconverged = true;
    return o;
}

} // namespace

TEST(SweepAxis, Validation)
{
    EXPECT_THROW((SweepAxis{Parameter::gamma1, {}}).validate(), Error);
    EXPECT_THROW((SweepAxis{Parameter::gamma1, {1.0, 1.0}}).validate(), Error);
    EXPECT_THROW((SweepAxis{Parameter::gamma1, {2.0, 1.0}}).validate(), Error);
    EXPECT_THROW((SweepAxis{Parameter::gamma1, {-1.0, 1.0}}).validate(), Error);
    EXPECT_THROW((SweepAxis{Parameter::dw_s, {0.0}}).validate(), Error);
    EXPECT_NO_THROW((SweepAxis{Parameter::tau, {-0.5, 0.5}}).validate());
    const RunConfig c = short_run(reference::p2_optimum());
    EXPECT_THROW(grid_sweep(c, {{Parameter::gamma1, {1.0}}, {Parameter::gamma1, {2.0}}}, Objective::max_p2()), Error);
    EXPECT_THROW(grid_sweep(c, {}, Objective::max_p2()), Error);
}

TEST(Objective, Parse)
{
    EXPECT_EQ(parse_objective("maxP2").kind, ObjectiveKind::max_p2);
    EXPECT_EQ(parse_objective("fluxDiff").kind, ObjectiveKind::flux_diff);
    const Objective v = parse_objective("fluxValue:3:signal");
    EXPECT_EQ(v.kind, ObjectiveKind::flux_value);
    EXPECT_EQ(v.channel, 2u);
    EXPECT_EQ(v.pulses, PulseSet::signal_only);
    EXPECT_EQ(v.to_string(), "fluxValue:3:signal");
    EXPECT_EQ(parse_objective("fluxValue").channel, 1u);
    EXPECT_THROW(parse_objective("fluxValue:4"), Error);
    EXPECT_THROW(parse_objective("fluxValueX"), Error);
    EXPECT_THROW(parse_objective("energy"), Error);
}

TEST(GridSweep, SinglePointEqualsDirectRun)
{
    const RunConfig base = short_run(reference::p2_optimum());
    const SweepResult r = grid_sweep(base, {{Parameter::gamma1, {2.5}}}, Objective::max_p2(), serial());
    RunConfig c = base;
    c.spec.rates.gamma1 = 2.5;
    const Trajectory t = integrate(c.scenario());
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_EQ(r.points[0].value, t.max_p2);
    EXPECT_EQ(r.points[0].Phi, t.record.back().Phi);
}

TEST(GridSweep, ThreadCountDoesNotChangeResults)
{
    const RunConfig base = short_run(reference::flux_optimum(), 8.0);
    const std::vector<SweepAxis> axes{{Parameter::gamma2, {1.0, 3.5, 6.0}}};
    SweepOptions a = serial(), b = serial();
    b.threads = 3;
    const SweepResult r1 = grid_sweep(base, axes, Objective::flux_diff(), a);
    const SweepResult r3 = grid_sweep(base, axes, Objective::flux_diff(), b);
    ASSERT_EQ(r1.points.size(), r3.points.size());
    for (std::size_t k = 0; k < r1.points.size(); ++k) {
        EXPECT_EQ(r1.points[k].value, r3.points[k].value);
        EXPECT_EQ(r1.points[k].Phi, r3.points[k].Phi);
    }
    EXPECT_EQ(r1.argmax, r3.argmax);
}

TEST(GridSweep, TiesGoToFirstPointInScanOrder)
{
    const RunConfig vac = short_run(with_pulses(reference::p2_optimum(), PulseSet::vacuum), 6.0);
    const SweepResult r = grid_sweep(vac, {{Parameter::gamma1, {1.0, 2.0}}, {Parameter::gamma3, {1.0, 2.0, 3.0}}},
                                     Objective::flux_value(1, PulseSet::vacuum), serial());
    ASSERT_EQ(r.points.size(), 6u);
    for (const auto &p : r.points)
        EXPECT_EQ(p.value, 0.0);
    ASSERT_TRUE(r.argmax);
    EXPECT_EQ(*r.argmax, 0u);
    EXPECT_EQ(r.best().coords, (std::vector<double>{1.0, 1.0}));
    // row-major, last axis fastest
    EXPECT_EQ(r.points[1].coords, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(r.points[3].coords, (std::vector<double>{2.0, 1.0}));
}

TEST(GridSweep, AbsentPulseParametersShareOneRun)
{
    const RunConfig vac = short_run(with_pulses(reference::p2_optimum(), PulseSet::vacuum), 6.0);
    const SweepResult r = grid_sweep(vac, {{Parameter::dw_s, {1.0, 2.0, 3.0, 4.0}}},
                                     Objective::flux_value(1, PulseSet::vacuum), serial());
    EXPECT_EQ(r.distinct_runs, 1u);
    // maxP2 always scores the two-photon run, whatever the base pulses say
    const SweepResult on = grid_sweep(vac, {{Parameter::dw_s, {3.0, 4.0}}}, Objective::max_p2(), serial());
    EXPECT_EQ(on.distinct_runs, 2u);
    EXPECT_GT(on.points[0].value, 0.0);
}

TEST(GridSweep, FluxDiffReusesControlOnlyRun)
{
    const RunConfig base = short_run(reference::flux_optimum(), 8.0);
    const std::vector<double> values{3.0, 5.0, 8.0, 11.0};
    const SweepResult r = grid_sweep(base, {{Parameter::dw_s, values}}, Objective::flux_diff(), serial());
    EXPECT_EQ(r.distinct_runs, values.size() + 1);
    for (const auto &p : r.points) {
        EXPECT_EQ(p.phi2_control, r.points[0].phi2_control);
        EXPECT_EQ(p.value, p.Phi[1] - p.phi2_control);
    }
}

TEST(GridSweep, BudgetRefusedBeforeRunning)
{
    const RunConfig base = reference::p2_optimum();
    SweepOptions o = serial();
    o.budget.max_seconds = 1e-3;
    try {
        grid_sweep(base, {{Parameter::gamma1, {1.0, 2.0}}}, Objective::max_p2(), o);
        FAIL() << "expected budget error";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::budget);
    }
    o = serial();
    o.budget.max_simulated_us = 60.0;
    EXPECT_THROW(grid_sweep(base, {{Parameter::gamma1, {1.0, 2.0}}}, Objective::max_p2(), o), Error);
}

TEST(GridSweep, ArgmaxReproducesOnResimulation)
{
    const RunConfig base = short_run(reference::p2_optimum());
    const SweepResult r = grid_sweep(base, {{Parameter::gamma3, {3.0, 6.0, 11.0}}}, Objective::max_p2(), serial());
    const Trajectory t = integrate(r.best_config().scenario());
    EXPECT_EQ(t.max_p2, r.best().value);
    for (const auto &p : r.points)
        EXPECT_LE(p.value, r.best().value);
}

TEST(GridSweep, RefinedGridNeverLowersOptimum)
{
    const RunConfig base = short_run(reference::p2_optimum());
    const SweepResult coarse = grid_sweep(base, {{Parameter::gamma1, {1.0, 6.0}}}, Objective::max_p2(), serial());
    const SweepResult fine = grid_sweep(base, {{Parameter::gamma1, {1.0, 2.0, 3.5, 6.0}}}, Objective::max_p2(), serial());
    EXPECT_GE(fine.best().value, coarse.best().value);
}

TEST(GridSweep, UnconvergedPointsExcludedByDefault)
{
    const RunConfig base = short_run(reference::p2_optimum(), 6.0);
    SweepOptions o = serial();
    o.include_unconverged = false;
    const SweepResult r = grid_sweep(base, {{Parameter::gamma1, {1.0, 2.0}}}, Objective::max_p2(), o);
    for (const auto &p : r.points)
        EXPECT_FALSE(p.converged);
    EXPECT_FALSE(r.argmax);
    EXPECT_THROW(r.best(), Error);
}

TEST(Protocol, SingletonGridsAreAFixedPoint)
{
    ProtocolGrids g;
    g.gamma1 = {3.5};
    g.gamma3 = {6.0};
    g.dw_s = {11.0};
    g.dw_c = {3.0};
    g.tau = {-0.2};
    const ProtocolResult r = staged_protocol(short_run(reference::protocol_start()), g, serial());
    EXPECT_EQ(r.stages.size(), 6u);
    EXPECT_TRUE(r.fixed_point);
    const RunConfig &f = r.final_config;
    EXPECT_EQ(f.spec.rates.gamma1, 3.5);
    EXPECT_EQ(f.spec.control.bandwidth, 3.0);
    EXPECT_NEAR(f.spec.control.arrival, 4.8, 1e-12);
    EXPECT_EQ(r.final_max_p2, integrate(f.scenario()).max_p2);
}

TEST(Calibration, TimeRescalingInvariance)
{
    // rates x 2pi with every time / 2pi describes the same dynamics
    const double k = 2.0 * std::numbers::pi;
    RunConfig rad = short_run(reference::p2_optimum(), 8.0);
    RunConfig cyc = rad;
    cyc.convention = UnitConvention::cycles_per_us;
    cyc.spec.signal.arrival /= k;
    cyc.spec.control.arrival /= k;
    cyc.t0 /= k;
    cyc.t_end /= k;
    cyc.dt /= k;
    const Trajectory a = integrate(rad.scenario());
    const Trajectory b = integrate(cyc.scenario());
    EXPECT_EQ(a.steps, b.steps);
    EXPECT_NEAR(a.max_p2, b.max_p2, 1e-9);
    for (std::size_t i = 0; i < channel_count; ++i)
        EXPECT_NEAR(a.record.back().Phi[i], b.record.back().Phi[i], 1e-9);
}

TEST(Flux, ClosedOutputChannelCarriesNothing)
{
    RunConfig c = short_run(reference::p2_optimum());
    ASSERT_EQ(c.spec.rates.gamma2, 0.0);
    EXPECT_EQ(integrate(c.scenario()).record.back().Phi[1], 0.0);

    RunConfig b = short_run(reference::model_b(0.0));
    const Trajectory t = integrate(b.scenario());
    EXPECT_LT(std::abs(t.record.back().Phi[1]), 1e-14);
}

TEST(JSweep, RequiresFilteredVariant)
{
    EXPECT_THROW(j_sweep(reference::flux_optimum(), {1.0}), Error);
}

TEST(JSweep, ShortHorizonPointsStayEligible)
{
    const SweepResult r = j_sweep(short_run(reference::model_b(), 8.0), {0.5, 2.0}, serial());
    ASSERT_TRUE(r.argmax);
    // the control-only run sees the filter too, so nothing is shared
    EXPECT_EQ(r.distinct_runs, 4u);
}
