// Command-line front end: simulate, sweep, reproduce, convergence, calibrate.
//
// Exit codes: 0 ok, 2 configuration error, 3 non-converged run,
// 4 divergence, 5 budget exceeded.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "slhswitch/slhswitch.hpp"

#ifndef SLHSWITCH_VERSION
#define SLHSWITCH_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slhswitch;

namespace {

enum Exit { exit_ok = 0, exit_config = 2, exit_unconverged = 3, exit_divergence = 4, exit_budget = 5 };

std::string sha256_file(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::string hex;
    char buf[3];
    for (unsigned int k = 0; k < len; ++k) {
        std::snprintf(buf, sizeof buf, "%02x", md[k]);
        hex += buf;
    }
    return hex;
}

/// Collects written files and appends one manifest line on finish.
class RunDir {
public:
    explicit RunDir(fs::path dir) : dir_(std::move(dir)), start_(std::chrono::steady_clock::now())
    {
        fs::create_directories(dir_);
    }

    template <class Fn>
    void write(const std::string &name, Fn &&emit)
    {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        emit(out);
        if (!out)
            throw Error(ErrorKind::config, (dir_ / name).string() + ": write failed");
        files_.push_back(name);
    }

    void write_json(const std::string &name, const json &j)
    {
        write(name, [&](std::ostream &os) { os << j.dump(2) << '\n'; });
    }

    void finish(const std::string &command, const json &config, double dt, double t_end)
    {
        json digests = json::object();
        for (const auto &f : files_)
            digests[f] = sha256_file(dir_ / f);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const json entry{{"schema", "slhswitch.manifest/1"},
                         {"tool_version", SLHSWITCH_VERSION},
                         {"command", command},
                         {"config", config},
                         {"dt", dt},
                         {"T_end", t_end},
                         {"wall_clock_s", wall},
                         {"files", digests}};
        std::ofstream out(dir_ / "manifest.jsonl", std::ios::binary | std::ios::app);
        out << entry.dump() << '\n';
    }

private:
    fs::path dir_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> files_;
};

PulseSet pulses_of(const RunConfig &cfg)
{
    const bool s = cfg.spec.signal.present;
    const bool c = cfg.spec.control.present;
    if (s && c)
        return PulseSet::on;
    if (s)
        return PulseSet::signal_only;
    if (c)
        return PulseSet::control_only;
    return PulseSet::vacuum;
}

int cmd_simulate(const std::string &config_path, const std::string &out_dir)
{
    const RunConfig cfg = load_config(config_path);
    const Scenario sc = cfg.scenario();
    const Trajectory t = integrate(sc);
    RunDir dir(out_dir);
    dir.write("timeseries.csv", [&](std::ostream &os) { write_timeseries(os, t.record); });
    dir.write_json("summary.json", run_summary(cfg, pulses_of(cfg), t));
    dir.write_json("config.json", to_json(cfg));
    dir.finish("simulate", to_json(cfg), cfg.dt, cfg.t_end);
    std::cout << "Phi = " << format_number(t.record.back().Phi[0]) << ", "
              << format_number(t.record.back().Phi[1]) << ", " << format_number(t.record.back().Phi[2])
              << "  max P2 = " << format_number(t.max_p2) << (t.converged ? "" : "  (not converged)") << '\n';
    return t.converged ? exit_ok : exit_unconverged;
}

SweepAxis parse_axis(const std::string &text)
{
    const auto eq = text.find('=');
    if (eq == std::string::npos)
        throw Error(ErrorKind::config, "axis '" + text + "' must look like name=v1,v2,...");
    SweepAxis axis;
    axis.parameter = parse_parameter(text.substr(0, eq));
    std::stringstream ss(text.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == 0 || used != item.size())
            throw Error(ErrorKind::config, "axis value '" + item + "' is not a number");
        axis.values.push_back(v);
    }
    axis.validate();
    return axis;
}

int cmd_sweep(const std::string &config_path, const std::vector<std::string> &axis_texts,
              const std::string &objective_text, const std::string &out_dir, unsigned threads,
              bool include_unconverged)
{
    const RunConfig cfg = load_config(config_path);
    std::vector<SweepAxis> axes;
    for (const auto &a : axis_texts)
        axes.push_back(parse_axis(a));
    SweepOptions opt;
    opt.budget = SweepBudget::from_env();
    opt.threads = threads;
    opt.include_unconverged = include_unconverged;
    const SweepResult r = grid_sweep(cfg, axes, parse_objective(objective_text), opt);

    RunDir dir(out_dir);
    dir.write("surface.csv", [&](std::ostream &os) { write_surface(os, r); });
    dir.write_json("argmax.json", argmax_json(r));
    dir.finish("sweep " + objective_text, to_json(cfg), cfg.dt, cfg.t_end);
    if (!r.argmax) {
        std::cout << "no converged grid point\n";
        return exit_unconverged;
    }
    std::cout << "argmax";
    for (std::size_t a = 0; a < r.axes.size(); ++a)
        std::cout << ' ' << to_string(r.axes[a].parameter) << '=' << format_number(r.best().coords[a]);
    std::cout << "  objective = " << format_number(r.best().value) << '\n';
    return exit_ok;
}

json calibration_json(const CalibrationReport &c)
{
    return {{"schema", "slhswitch.calibration/1"},
            {"selected", std::string(to_string(c.selected))},
            {"resolved", c.resolved},
            {"target_P2", calibration_target_p2},
            {"P2_rad_per_us", c.p2_rad},
            {"P2_cycles_per_us", c.p2_cycles},
            {"dt_rad_per_us", c.dt_rad},
            {"dt_cycles_per_us", c.dt_cycles},
            {"deviation_rad_per_us", c.deviation(UnitConvention::rad_per_us)},
            {"deviation_cycles_per_us", c.deviation(UnitConvention::cycles_per_us)}};
}

int cmd_calibrate(const std::string &out_dir)
{
    const CalibrationReport c = calibrate_units();
    RunDir dir(out_dir);
    dir.write_json("calibration.json", calibration_json(c));
    dir.finish("calibrate", to_json(reference::p2_optimum()), c.dt_rad, reference::p2_optimum().t_end);
    std::cout << "max P2: rad_per_us " << format_number(c.p2_rad) << ", cycles_per_us "
              << format_number(c.p2_cycles) << "; selected " << to_string(c.selected)
              << (c.resolved ? "" : " (unresolved: both conventions miss the target by more than 25%)")
              << '\n';
    return exit_ok;
}

/// Cached convention, or a fresh calibration written next to the report.
UnitConvention calibrated_convention(const std::string &cache)
{
    if (fs::exists(cache)) {
        std::ifstream in(cache, std::ios::binary);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception &) {
            throw Error(ErrorKind::config, cache + ": unreadable calibration report");
        }
        const std::string sel = j.value("selected", "");
        if (sel == "rad_per_us")
            return UnitConvention::rad_per_us;
        if (sel == "cycles_per_us")
            return UnitConvention::cycles_per_us;
        throw Error(ErrorKind::config, cache + ": calibration report has no valid 'selected' field");
    }
    const CalibrationReport c = calibrate_units();
    const fs::path p(cache);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(cache, std::ios::binary);
    out << calibration_json(c).dump(2) << '\n';
    return c.selected;
}

json target_line(const std::string &name, double value, std::optional<double> expected)
{
    json j{{"metric", name}, {"value", value}};
    if (expected) {
        j["reference"] = *expected;
        j["relative_deviation"] = (value - *expected) / *expected;
    }
    return j;
}

int cmd_reproduce(const std::string &target, const std::string &out_dir, std::string cache)
{
    static const std::vector<std::string> targets = {"p2-optimum", "fig4",  "stepA",      "stepB",
                                                     "modelA-final", "modelB", "extinction", "recovery"};
    if (std::find(targets.begin(), targets.end(), target) == targets.end())
        throw Error(ErrorKind::config, "unknown reproduce target '" + target + "'");
    if (cache.empty())
        cache = (fs::path(out_dir) / "calibration.json").string();
    const UnitConvention conv = calibrated_convention(cache);
    auto prepare = [&](RunConfig c) {
        c.convention = conv;
        return c;
    };

    json report{{"schema", summary_schema}, {"target", target}, {"convention", std::string(to_string(conv))}};
    json metrics = json::array();
    bool converged = true;
    RunDir dir(out_dir);
    RunConfig used;

    auto switch_target = [&](const RunConfig &cfg) {
        const SwitchRuns runs = run_switch(cfg);
        dir.write("timeseries_on.csv", [&](std::ostream &os) { write_timeseries(os, runs.on.record); });
        dir.write("timeseries_control.csv", [&](std::ostream &os) { write_timeseries(os, runs.control_only.record); });
        dir.write("timeseries_signal.csv", [&](std::ostream &os) { write_timeseries(os, runs.signal_only.record); });
        report["switch"] = metrics_json(runs.metrics);
        converged = runs.metrics.converged;
        return runs.metrics;
    };

    if (target == "p2-optimum") {
        used = prepare(reference::p2_optimum());
        const Trajectory t = integrate(used.scenario());
        dir.write("timeseries.csv", [&](std::ostream &os) { write_timeseries(os, t.record); });
        metrics.push_back(target_line("max_P2", t.max_p2, 0.279));
        converged = t.converged;
    } else if (target == "fig4") {
        used = prepare(reference::flux_optimum());
        const SweepResult r = gamma2_sweep(used);
        dir.write("surface.csv", [&](std::ostream &os) { write_surface(os, r); });
        dir.write_json("argmax.json", argmax_json(r));
        if (r.argmax) {
            metrics.push_back(target_line("argmax_gamma2", r.best().coords[0], 3.5));
            metrics.push_back(target_line("difference", r.best().value, 0.085));
        }
        converged = r.argmax.has_value();
    } else if (target == "stepA" || target == "stepB" || target == "modelA-final") {
        const SchedulePreset p = target == "stepA"   ? SchedulePreset::stepA
                                 : target == "stepB" ? SchedulePreset::stepB
                                                     : SchedulePreset::square;
        used = prepare(reference::ladder(p));
        const SwitchMetrics m = switch_target(used);
        const double expected = target == "stepA" ? 0.316 : target == "stepB" ? 0.404 : 0.489;
        metrics.push_back(target_line("difference", m.difference, expected));
        if (target == "modelA-final")
            metrics.push_back(target_line("Phi2_control", m.phi2_control, 0.549));
    } else if (target == "modelB" || target == "extinction") {
        used = prepare(reference::model_b());
        const SwitchMetrics m = switch_target(used);
        if (target == "modelB") {
            metrics.push_back(target_line("Phi2_on", m.phi2_on, 0.429));
            metrics.push_back(target_line("Phi2_control", m.phi2_control, 1e-4));
            metrics.push_back(target_line("Phi2_off", m.phi2_signal, 1.22e-6));
            metrics.push_back(target_line("difference", m.difference, 0.429));
        } else {
            metrics.push_back(target_line("extinction_dB", m.extinction.finite ? m.extinction.db : 0.0, 56.14));
        }
    } else {
        used = prepare(reference::recovery());
        const Trajectory t = integrate(used.scenario());
        dir.write("timeseries.csv", [&](std::ostream &os) { write_timeseries(os, t.record); });
        double before = 0.0;
        for (const auto &s : t.record.samples)
            if (s.t <= reference::recovery_time)
                before = s.Phi[2];
        metrics.push_back(target_line("Phi3_after_t1", t.record.back().Phi[2] - before, std::nullopt));
        metrics.push_back(target_line("Phi2_on", t.record.back().Phi[1], std::nullopt));
        converged = t.converged;
    }

    report["metrics"] = metrics;
    report["converged"] = converged;
    report["config"] = to_json(used);
    dir.write_json("report.json", report);
    dir.finish("reproduce " + target, to_json(used), used.dt, used.t_end);

    for (const auto &m : metrics) {
        std::cout << target << ' ' << m["metric"].get<std::string>() << " = "
                  << format_number(m["value"].get<double>());
        if (m.contains("reference"))
            std::cout << "  reference " << format_number(m["reference"].get<double>()) << "  deviation "
                      << format_number(100.0 * m["relative_deviation"].get<double>()) << '%';
        std::cout << '\n';
    }
    return converged ? exit_ok : exit_unconverged;
}

int cmd_convergence(const std::string &config_path)
{
    const RunConfig cfg = load_config(config_path);
    RunConfig half = cfg;
    half.dt = cfg.dt / 2.0;
    RunConfig bigger = cfg;
    bigger.spec.cavity_cutoff += 1;
    if (bigger.spec.variant == Variant::B)
        bigger.spec.cavity2_cutoff += 1;

    const Trajectory a = integrate(cfg.scenario());
    const Trajectory b = integrate(half.scenario());
    const Trajectory c = integrate(bigger.scenario());
    auto phi2 = [](const Trajectory &t) { return t.record.back().Phi[1]; };
    const json report{{"schema", "slhswitch.convergence/1"},
                      {"convention", std::string(to_string(cfg.convention))},
                      {"dt", cfg.dt},
                      {"T_end", cfg.t_end},
                      {"Phi2", phi2(a)},
                      {"max_P2", a.max_p2},
                      {"dt_half", {{"dPhi2", phi2(b) - phi2(a)}, {"dmax_P2", b.max_p2 - a.max_p2}}},
                      {"cutoff_plus_one", {{"dPhi2", phi2(c) - phi2(a)}, {"dmax_P2", c.max_p2 - a.max_p2}}}};
    std::cout << report.dump(2) << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Single-photon switch network simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SLHSWITCH_VERSION);

    std::string config, out, objective = "maxP2", target, cache;
    std::vector<std::string> axes;
    unsigned threads = 0;
    bool include_unconverged = false;

    auto *sim = app.add_subcommand("simulate", "integrate one configuration");
    sim->add_option("--config", config, "configuration JSON")->required();
    sim->add_option("--out", out, "output directory")->required();

    auto *sw = app.add_subcommand("sweep", "grid sweep over one or two parameters");
    sw->add_option("--config", config, "base configuration JSON")->required();
    sw->add_option("--axis", axes, "name=v1,v2,... (repeatable, at most two)")->required();
    sw->add_option("--objective", objective, "maxP2 | fluxDiff | fluxValue[:channel[:pulses]]");
    sw->add_option("--out", out, "output directory")->required();
    sw->add_option("--threads", threads, "worker threads (0 = all cores)");
    sw->add_flag("--include-unconverged", include_unconverged, "let non-converged points win");

    auto *rep = app.add_subcommand("reproduce", "run a canonical configuration and compare with the reference value");
    rep->add_option("target", target,
                    "p2-optimum | fig4 | stepA | stepB | modelA-final | modelB | extinction | recovery")
        ->required();
    rep->add_option("--out", out, "output directory")->required();
    rep->add_option("--calibration", cache, "calibration report to reuse or create");

    auto *conv = app.add_subcommand("convergence", "dt halving and cutoff increment deltas");
    conv->add_option("--config", config, "configuration JSON")->required();

    auto *cal = app.add_subcommand("calibrate", "pick the rate unit convention");
    cal->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*sim)
            return cmd_simulate(config, out);
        if (*sw)
            return cmd_sweep(config, axes, objective, out, threads, include_unconverged);
        if (*rep)
            return cmd_reproduce(target, out, cache);
        if (*conv)
            return cmd_convergence(config);
        if (*cal)
            return cmd_calibrate(out);
    } catch (const DivergenceError &e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return exit_divergence;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::budget ? exit_budget : exit_config;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    }
    return exit_ok;
}
