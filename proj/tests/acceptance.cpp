// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when a required criterion fails; with the calibration downgrade active the
// quantitative criteria 1-4 are reported but only 5-9 are required.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "slhswitch/slhswitch.hpp"

using namespace slhswitch;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    int id;
    bool pass;
    std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string &detail)
{
    verdicts.push_back({id, pass, detail});
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

std::string rel(double value, double target)
{
    return fmt(value) + " (target " + fmt(target) + ", " + fmt(100.0 * (value - target) / target) + "%)";
}

RunConfig calibrated(RunConfig c, UnitConvention conv)
{
    c.convention = conv;
    return c;
}

double phi2_end(const Trajectory &t) { return t.record.back().Phi[1]; }

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string &args)
{
    const std::string cmd = "\"" SLHSWITCH_CLI "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double max_abs(const Matrix &m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace

int main()
{
    const auto started = std::chrono::steady_clock::now();

    // 1. P2 optimum, both conventions
    const CalibrationReport cal = calibrate_units(reference::p2_optimum());
    const UnitConvention conv = cal.selected;
    const bool downgrade = std::abs(cal.deviation(UnitConvention::rad_per_us)) > calibration_tolerance
                           && std::abs(cal.deviation(UnitConvention::cycles_per_us)) > calibration_tolerance;
    {
        const double p = conv == UnitConvention::rad_per_us ? cal.p2_rad : cal.p2_cycles;
        report(1, within(p, calibration_target_p2, 0.10),
               "max P2 = " + rel(p, calibration_target_p2) + " [" + std::string(to_string(conv))
                   + "]; other convention " + fmt(conv == UnitConvention::rad_per_us ? cal.p2_cycles : cal.p2_rad));
    }

    // 2. constant-rate flux difference over the gamma2 grid
    {
        const SweepResult r = gamma2_sweep(calibrated(reference::flux_optimum(), conv));
        const double at = r.best().coords[0];
        const double diff = r.best().value;
        report(2, at == 3.5 && std::abs(diff - 0.085) <= 0.02,
               "argmax gamma2 = " + fmt(at) + " (target 3.5), difference = " + fmt(diff) + " (target 0.085 +- 0.02)");
    }

    // 3. time-dependent ladder
    {
        const std::pair<SchedulePreset, double> rungs[] = {
            {SchedulePreset::stepA, 0.316}, {SchedulePreset::stepB, 0.404}, {SchedulePreset::square, 0.489}};
        bool ok = true;
        double prev = -1.0;
        bool ordered = true;
        std::string detail;
        for (const auto &[preset, target] : rungs) {
            const double d = run_switch(calibrated(reference::ladder(preset), conv)).metrics.difference;
            ok = ok && within(d, target, 0.10);
            ordered = ordered && d > prev;
            prev = d;
            detail += std::string(to_string(preset)) + " " + rel(d, target) + "; ";
        }
        report(3, ok && ordered, detail + (ordered ? "strictly increasing" : "ordering violated"));
    }

    // 4. filtered network
    const RunConfig model_b = calibrated(reference::model_b(1.0), conv);
    const SwitchRuns b = run_switch(model_b);
    {
        const SwitchMetrics &m = b.metrics;
        const bool ok = within(m.phi2_on, 0.429, 0.10) && m.phi2_control <= 1e-3 && m.phi2_signal <= 1e-5
                        && m.extinction.db >= 50.0;
        report(4, ok,
               "Phi2 on = " + rel(m.phi2_on, 0.429) + "; control-only " + fmt(m.phi2_control) + " (<= 1e-3); signal-only "
                   + fmt(m.phi2_signal) + " (<= 1e-5); R = " + fmt(m.extinction.db) + " dB (>= 50)");
    }

    // 5. photon-number conservation, constant rates
    {
        bool ok = true;
        std::string detail;
        for (PulseSet p : {PulseSet::on, PulseSet::signal_only, PulseSet::control_only}) {
            const Trajectory t = integrate(calibrated(with_pulses(reference::flux_optimum(), p), conv).scenario());
            const auto &Phi = t.record.back().Phi;
            const double total = Phi[0] + Phi[1] + Phi[2];
            const double expect = p == PulseSet::on ? 2.0 : 1.0;
            ok = ok && std::abs(total - expect) <= 0.02;
            detail += std::string(to_string(p)) + " " + fmt(total) + " (" + fmt(expect) + "); ";
        }
        report(5, ok, detail + "tolerance 0.02");
    }

    // 6. perfect absorption of a matched exponential pulse
    {
        RunConfig c;
        c.convention = conv;
        c.spec.rates.g = 1e-9;
        c.spec.rates.delta_s = 0.0;
        c.spec.rates.gamma1 = 4.0;
        c.spec.rates.gamma2 = 0.0;
        c.spec.rates.gamma3 = 0.0;
        c.spec.signal = {4.0, 5.0, true, 0.0};
        c.spec.control.present = false;
        c.t_end = 10.0;
        c.record_stride = 1;
        const Scenario s = c.scenario();
        const NetworkOperators ops(s.spec);
        const Operator n1 = ops.a1.adjoint() * ops.a1;
        double at_arrival = -1.0;
        const Observer obs = [&](const HierarchyState &st) {
            if (st.time == s.spec.signal.arrival)
                at_arrival = expectation(st.get(s.top_label()), n1).real();
        };
        integrate(s, {obs});
        report(6, at_arrival >= 0.998, "cavity excitation at arrival = " + fmt(at_arrival) + " (>= 0.998)");
    }

    // 7. hierarchy invariants
    {
        const auto t0 = std::chrono::steady_clock::now();
        RunConfig c = calibrated(reference::ladder(SchedulePreset::square), conv);
        double trace_drift = 0.0, herm = 0.0;
        const Observer obs = [&](const HierarchyState &st) {
            for (std::size_t k = 0; k < st.labels.size(); ++k)
                if (st.labels[k].diagonal()) {
                    trace_drift = std::max(trace_drift, std::abs(st.entries[k].trace() - cplx(1.0)));
                    herm = std::max(herm, st.entries[k].hermiticity_defect());
                }
        };
        const Trajectory half = integrate(c.scenario(), {obs});
        c.full_hierarchy = true;
        const Trajectory full = integrate(c.scenario());
        double closure = 0.0;
        for (std::size_t k = 0; k < full.final_state.labels.size(); ++k)
            closure = std::max(closure, max_abs(half.final_state.entries[k].matrix() - full.final_state.entries[k].matrix()));
        double single = 0.0;
        for (PulseSet p : {PulseSet::signal_only, PulseSet::control_only}) {
            RunConfig one = calibrated(with_pulses(reference::p2_optimum(), p), conv);
            one.full_space = true;
            single = std::max(single, integrate(one.scenario()).max_p2);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool ok = trace_drift <= 1e-6 && herm <= 1e-8 && closure <= 1e-9 && single < 1e-9 && secs < 60.0;
        report(7, ok,
               "trace drift " + fmt(trace_drift) + ", Hermiticity " + fmt(herm) + ", closure vs full " + fmt(closure)
                   + ", single-photon max P2 " + fmt(single) + ", " + fmt(secs) + " s");
    }

    // 8. dt halving and cutoff increment
    {
        bool ok = true;
        std::string detail;
        const std::pair<const char *, RunConfig> cases[] = {
            {"flux optimum", with_pulses(calibrated(reference::flux_optimum(), conv), PulseSet::on)},
            {"filtered", with_pulses(model_b, PulseSet::on)}};
        for (const auto &[name, base] : cases) {
            const double ref = phi2_end(integrate(base.scenario()));
            RunConfig half = base;
            half.dt /= 2.0;
            RunConfig bigger = base;
            bigger.spec.cavity_cutoff += 1;
            bigger.spec.cavity2_cutoff += 1;
            const double d_dt = std::abs(phi2_end(integrate(half.scenario())) - ref);
            const double d_cut = std::abs(phi2_end(integrate(bigger.scenario())) - ref);
            ok = ok && d_dt < 1e-4 && d_cut < 1e-4;
            detail += std::string(name) + ": dt/2 " + fmt(d_dt) + ", cutoff+1 " + fmt(d_cut) + "; ";
        }
        report(8, ok, detail + "bound 1e-4");
    }

    // 9. determinism of the reproduce command
    {
        const fs::path root = fs::temp_directory_path() / ("slhswitch_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
        const std::string cache = (root / "calibration.json").string();
        bool same = true;
        std::string detail;
        // exit 3 still writes every output; it only flags a residual above threshold
        for (const char *target : {"p2-optimum", "stepA"}) {
            const fs::path a = root / (std::string(target) + "_a"), b = root / (std::string(target) + "_b");
            const int c1 = run_cli(std::string("reproduce ") + target + " --out " + a.string() + " --calibration " + cache);
            const int c2 = run_cli(std::string("reproduce ") + target + " --out " + b.string() + " --calibration " + cache);
            bool ok = (c1 == 0 || c1 == 3) && c1 == c2;
            std::size_t files = 0;
            if (ok)
                for (const auto &e : fs::directory_iterator(a))
                    if (e.path().extension() == ".csv") {
                        ++files;
                        const fs::path other = b / e.path().filename();
                        ok = ok && fs::exists(other) && slurp(e.path()) == slurp(other);
                    }
            ok = ok && files > 0;
            same = same && ok;
            detail += std::string(target) + ": exit " + std::to_string(c1) + "/" + std::to_string(c2) + ", "
                      + std::to_string(files) + " CSV " + (ok ? "byte-identical" : "differ") + "; ";
        }
        report(9, same, detail + "two executions each");
        fs::remove_all(root);
    }

    bool required_ok = true;
    for (const auto &v : verdicts)
        if (!v.pass && (!downgrade || v.id >= 5))
            required_ok = false;
    if (downgrade)
        std::cout << "calibration downgrade active: criterion 1 misses by more than "
                  << fmt(100.0 * calibration_tolerance) << "% under both conventions (rad_per_us "
                  << fmt(100.0 * cal.deviation(UnitConvention::rad_per_us)) << "%, cycles_per_us "
                  << fmt(100.0 * cal.deviation(UnitConvention::cycles_per_us))
                  << "%); criteria 1-4 are reported deviations, 5-9 are required" << std::endl;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cout << "acceptance: " << (required_ok ? "PASS" : "FAIL") << " (" << fmt(secs) << " s)" << std::endl;
    return required_ok ? 0 : 1;
}
