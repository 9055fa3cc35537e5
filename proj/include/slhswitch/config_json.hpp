#pragma once

// JSON form of RunConfig. Parsing is strict: unknown keys, wrong types and
// out-of-range values raise ErrorKind::config naming the offending field
// (or line and column for malformed JSON). `to_json` emits a complete
// snapshot that parses back to the same configuration.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "config.hpp"
#include "error.hpp"

namespace slhswitch {

inline constexpr const char *config_schema = "slhswitch.config/1";

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_error(const std::string &path, const std::string &what)
{
    throw Error(ErrorKind::config, path + ": " + what);
}

inline void allow_keys(const json &obj, const std::string &path, std::initializer_list<const char *> keys)
{
    if (!obj.is_object())
        config_error(path, "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto &[k, v] : obj.items())
        if (!allowed.count(k))
            config_error(path.empty() ? k : path + "." + k, "unknown field");
}

inline std::string join(const std::string &path, const std::string &key)
{
    return path.empty() ? key : path + "." + key;
}

inline double read_number(const json &obj, const std::string &path, const char *key, double fallback)
{
    if (!obj.contains(key))
        return fallback;
    const json &v = obj.at(key);
    if (!v.is_number())
        config_error(join(path, key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        config_error(join(path, key), "must be finite");
    return d;
}

inline double read_rate(const json &obj, const std::string &path, const char *key, double fallback)
{
    const double d = read_number(obj, path, key, fallback);
    if (d < 0.0)
        config_error(join(path, key), "must be >= 0");
    return d;
}

inline bool read_bool(const json &obj, const std::string &path, const char *key, bool fallback)
{
    if (!obj.contains(key))
        return fallback;
    if (!obj.at(key).is_boolean())
        config_error(join(path, key), "expected true or false");
    return obj.at(key).get<bool>();
}

inline std::string read_string(const json &obj, const std::string &path, const char *key,
                               const std::string &fallback)
{
    if (!obj.contains(key))
        return fallback;
    if (!obj.at(key).is_string())
        config_error(join(path, key), "expected a string");
    return obj.at(key).get<std::string>();
}

inline std::size_t read_count(const json &obj, const std::string &path, const char *key, std::size_t fallback)
{
    if (!obj.contains(key))
        return fallback;
    const json &v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        config_error(join(path, key), "expected a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

inline std::vector<double> read_list(const json &obj, const std::string &path, const char *key)
{
    if (!obj.contains(key))
        config_error(join(path, key), "missing");
    const json &v = obj.at(key);
    if (!v.is_array())
        config_error(join(path, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number())
            config_error(join(path, key) + "[" + std::to_string(k) + "]", "expected a number");
        out.push_back(v[k].get<double>());
    }
    return out;
}

inline PulseSpec read_pulse(const json &obj, const std::string &path, PulseSpec p)
{
    allow_keys(obj, path, {"present", "bandwidth", "arrival", "phase"});
    p.present = read_bool(obj, path, "present", p.present);
    p.bandwidth = read_number(obj, path, "bandwidth", p.bandwidth);
    if (!(p.bandwidth > 0.0))
        config_error(join(path, "bandwidth"), "must be > 0");
    p.arrival = read_number(obj, path, "arrival", p.arrival);
    p.phase = read_number(obj, path, "phase", p.phase);
    return p;
}

inline CouplingSchedule read_schedule(const json &obj, const std::string &path)
{
    allow_keys(obj, path, {"breakpoints", "values"});
    const auto bp = obj.contains("breakpoints") ? read_list(obj, path, "breakpoints") : std::vector<double>{};
    const auto values = read_list(obj, path, "values");
    try {
        return CouplingSchedule(bp, values);
    } catch (const Error &e) {
        config_error(path, e.what());
    }
}

inline json schedule_json(const CouplingSchedule &s)
{
    return {{"breakpoints", s.breakpoints()}, {"values", s.values()}};
}

} // namespace detail

inline RunConfig config_from_json(const nlohmann::json &doc)
{
    using detail::config_error;
    using nlohmann::json;
    detail::allow_keys(doc, "", {"schema", "model", "pulses", "schedules", "integration", "convention"});
    if (doc.contains("schema")) {
        if (!doc.at("schema").is_string() || doc.at("schema").get<std::string>() != config_schema)
            config_error("schema", std::string("expected \"") + config_schema + "\"");
    }

    RunConfig cfg;
    NetworkSpec &spec = cfg.spec;
    const json empty = json::object();

    const json &model = doc.contains("model") ? doc.at("model") : empty;
    detail::allow_keys(model, "model", {"variant", "rates", "cavity_cutoff", "cavity2_cutoff"});
    const std::string variant = detail::read_string(model, "model", "variant", "A");
    if (variant == "A")
        spec.variant = Variant::A;
    else if (variant == "B")
        spec.variant = Variant::B;
    else
        config_error("model.variant", "expected \"A\" or \"B\"");
    spec.cavity_cutoff = detail::read_count(model, "model", "cavity_cutoff", spec.cavity_cutoff);
    spec.cavity2_cutoff = detail::read_count(model, "model", "cavity2_cutoff", spec.cavity2_cutoff);
    if (spec.cavity_cutoff < 1)
        config_error("model.cavity_cutoff", "must be >= 1");
    if (spec.cavity2_cutoff < 1)
        config_error("model.cavity2_cutoff", "must be >= 1");

    const json &rates = model.contains("rates") ? model.at("rates") : empty;
    const std::string rp = "model.rates";
    detail::allow_keys(rates, rp,
                       {"omega0", "g", "J", "gamma1", "gamma2", "gamma3", "delta_s", "delta_c", "delta_filter"});
    PhysicalRates &r = spec.rates;
    r.omega0 = detail::read_rate(rates, rp, "omega0", r.omega0);
    r.g = detail::read_rate(rates, rp, "g", r.g);
    if (!(r.g > 0.0))
        config_error(rp + ".g", "must be > 0");
    r.set_default_carriers();
    r.J = detail::read_rate(rates, rp, "J", r.J);
    r.gamma1 = detail::read_rate(rates, rp, "gamma1", r.gamma1);
    r.gamma2 = detail::read_rate(rates, rp, "gamma2", r.gamma2);
    r.gamma3 = detail::read_rate(rates, rp, "gamma3", r.gamma3);
    r.delta_s = detail::read_number(rates, rp, "delta_s", r.delta_s);
    r.delta_c = detail::read_number(rates, rp, "delta_c", r.delta_c);
    r.delta_filter = detail::read_number(rates, rp, "delta_filter", r.delta_filter);

    const json &pulses = doc.contains("pulses") ? doc.at("pulses") : empty;
    detail::allow_keys(pulses, "pulses", {"signal", "control"});
    if (pulses.contains("signal"))
        spec.signal = detail::read_pulse(pulses.at("signal"), "pulses.signal", spec.signal);
    if (pulses.contains("control"))
        spec.control = detail::read_pulse(pulses.at("control"), "pulses.control", spec.control);

    const json &sched = doc.contains("schedules") ? doc.at("schedules") : empty;
    detail::allow_keys(sched, "schedules", {"preset", "t0", "explicit"});
    if (sched.contains("preset") && sched.contains("explicit"))
        config_error("schedules", "give either a preset or explicit schedules, not both");
    cfg.t0 = detail::read_number(sched, "schedules", "t0", cfg.t0);
    if (sched.contains("explicit")) {
        const json &ex = sched.at("explicit");
        detail::allow_keys(ex, "schedules.explicit", {"gamma1", "gamma2", "gamma3"});
        const char *names[] = {"gamma1", "gamma2", "gamma3"};
        const double base[] = {r.gamma1, r.gamma2, r.gamma3};
        for (std::size_t i = 0; i < channel_count; ++i)
            spec.schedules[i] = ex.contains(names[i])
                                    ? detail::read_schedule(ex.at(names[i]), std::string("schedules.explicit.") + names[i])
                                    : CouplingSchedule::constant(base[i]);
        cfg.preset.reset();
    } else {
        const std::string name = detail::read_string(sched, "schedules", "preset", "constant");
        try {
            cfg.preset = parse_schedule_preset(name);
        } catch (const Error &) {
            config_error("schedules.preset", "expected constant, stepA, stepB or square");
        }
        if (cfg.preset == SchedulePreset::square && !(cfg.t0 < spec.signal.arrival))
            config_error("schedules.t0", "must precede the signal arrival");
    }

    const json &integ = doc.contains("integration") ? doc.at("integration") : empty;
    detail::allow_keys(integ, "integration",
                       {"dt", "t_start", "t_end", "record_stride", "full_hierarchy", "full_space"});
    cfg.dt = detail::read_number(integ, "integration", "dt", cfg.dt);
    if (!(cfg.dt > 0.0))
        config_error("integration.dt", "must be > 0");
    cfg.t_start = detail::read_number(integ, "integration", "t_start", cfg.t_start);
    cfg.t_end = detail::read_number(integ, "integration", "t_end", cfg.t_end);
    if (!(cfg.t_end > cfg.t_start))
        config_error("integration.t_end", "must exceed t_start");
    const std::size_t stride = detail::read_count(integ, "integration", "record_stride",
                                                  static_cast<std::size_t>(cfg.record_stride));
    if (stride < 1 || stride > 1000000000)
        config_error("integration.record_stride", "must be >= 1");
    cfg.record_stride = static_cast<int>(stride);
    cfg.full_hierarchy = detail::read_bool(integ, "integration", "full_hierarchy", cfg.full_hierarchy);
    cfg.full_space = detail::read_bool(integ, "integration", "full_space", cfg.full_space);

    const std::string conv = detail::read_string(doc, "", "convention", "rad_per_us");
    if (conv == "rad_per_us")
        cfg.convention = UnitConvention::rad_per_us;
    else if (conv == "cycles_per_us")
        cfg.convention = UnitConvention::cycles_per_us;
    else
        config_error("convention", "expected \"rad_per_us\" or \"cycles_per_us\"");

    for (const PulseSpec *p : {&spec.signal, &spec.control})
        if (p->present && !(cfg.t_end > p->arrival))
            config_error("integration.t_end", "must exceed every pulse arrival time");
    return cfg;
}

/// Parses JSON text; syntax errors are reported as line:column.
inline RunConfig parse_config(const std::string &text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        std::size_t line = 1, col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t k = 0; k < stop; ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorKind::config,
                    "line " + std::to_string(line) + ", column " + std::to_string(col) + ": malformed JSON");
    }
    return config_from_json(doc);
}

inline RunConfig load_config(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::config, path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const Error &e) {
        throw Error(ErrorKind::config, path + ": " + e.what());
    }
}

inline nlohmann::json to_json(const RunConfig &cfg)
{
    using nlohmann::json;
    const NetworkSpec &s = cfg.spec;
    const PhysicalRates &r = s.rates;
    auto pulse = [](const PulseSpec &p) {
        return json{{"present", p.present}, {"bandwidth", p.bandwidth}, {"arrival", p.arrival}, {"phase", p.phase}};
    };
    json sched;
    if (cfg.preset) {
        sched = {{"preset", std::string(to_string(*cfg.preset))}, {"t0", cfg.t0}};
    } else {
        sched = {{"t0", cfg.t0},
                 {"explicit",
                  {{"gamma1", detail::schedule_json(s.schedules[0])},
                   {"gamma2", detail::schedule_json(s.schedules[1])},
                   {"gamma3", detail::schedule_json(s.schedules[2])}}}};
    }
    return json{
        {"schema", config_schema},
        {"model",
         {{"variant", std::string(to_string(s.variant))},
          {"cavity_cutoff", s.cavity_cutoff},
          {"cavity2_cutoff", s.cavity2_cutoff},
          {"rates",
           {{"omega0", r.omega0},
            {"g", r.g},
            {"J", r.J},
            {"gamma1", r.gamma1},
            {"gamma2", r.gamma2},
            {"gamma3", r.gamma3},
            {"delta_s", r.delta_s},
            {"delta_c", r.delta_c},
            {"delta_filter", r.delta_filter}}}}},
        {"pulses", {{"signal", pulse(s.signal)}, {"control", pulse(s.control)}}},
        {"schedules", sched},
        {"integration",
         {{"dt", cfg.dt},
          {"t_start", cfg.t_start},
          {"t_end", cfg.t_end},
          {"record_stride", cfg.record_stride},
          {"full_hierarchy", cfg.full_hierarchy},
          {"full_space", cfg.full_space}}},
        {"convention", std::string(to_string(cfg.convention))},
    };
}

} // namespace slhswitch
