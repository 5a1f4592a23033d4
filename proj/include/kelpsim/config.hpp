#pragma once
// Scenario configuration: model parameters plus run, sweep, ibm, converge and
// output sections, named presets and environment overrides.

#include <concepts>
#include <cstdlib>
#include <limits>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "kelpsim/model.hpp"
#include "kelpsim/params_io.hpp"
#include "kelpsim/scheme.hpp"

namespace kelpsim {

struct RunSection {
    double T = 30.0;
    std::size_t N = 1000;
    std::size_t paths = 15000;
    std::uint64_t seed = 20240601;
    double burn_in = 5.0;
    std::size_t record_every = 10;
    unsigned threads = 0;
    double J0 = 2000.0;
    double A0 = 3000.0;
    double E0 = 0.5;
    double extinction_threshold = -1.0;  // negative: 1e-6 * K
    double low_fraction = 0.1;           // "low biomass" means J + A < low_fraction * K
    std::size_t sample_paths = 10;
    std::size_t hist_bins = 50;
    std::string scheme = "exponential";
    double truncation_delta = 0.01;
};

struct SweepSection {
    std::string axis;  // "section.key" of a model parameter; empty = no sweep
    std::vector<double> values;
};

struct IbmSection {
    std::vector<double> n{50, 200, 800};
    double gamma = 1.0;
    double K = 2.0;  // carrying capacity in the scaled units of the chain
    std::size_t replicas = 2000;
    double T = 1.0;
    std::size_t report_N = 50;
    std::size_t limit_paths = 20000;
    std::size_t limit_refine = 20;
    double j0 = 0.5;
    double a0 = 0.5;
    double e0 = 0.5;
    bool time_rescale = true;
    double max_events = 1e9;
};

struct ConvergeSection {
    double T = 5.0;
    std::size_t base_N = 50;
    std::size_t levels = 5;
    std::size_t paths = 2000;
};

struct ScenarioConfig {
    std::string name = "default";
    std::string description;
    ModelParams model;
    RunSection run;
    SweepSection sweep;
    IbmSection ibm;
    ConvergeSection converge;
    std::string out_dir = "kelpsim-out";

    StateVec x0() const { return {run.J0, run.A0, run.E0, model.price.P0}; }
};

namespace detail {

template <class T>
Field<ScenarioConfig> scenario_field(std::string section, std::string key, T ScenarioConfig::*sec, double T::*member) {
    const std::string what = section + "." + key;
    return {section, key, [sec, member](const ScenarioConfig& c) { return format_double(c.*sec.*member); },
            [sec, member, what](ScenarioConfig& c, const std::string& v) { c.*sec.*member = parse_double(v, what); }};
}

template <class T, std::unsigned_integral I>
    requires(!std::same_as<I, bool>)
Field<ScenarioConfig> scenario_field(std::string section, std::string key, T ScenarioConfig::*sec, I T::*member) {
    const std::string what = section + "." + key;
    return {section, key, [sec, member](const ScenarioConfig& c) { return std::to_string(c.*sec.*member); },
            [sec, member, what](ScenarioConfig& c, const std::string& v) {
                const std::uint64_t raw = parse_u64(v, what);
                if (raw > std::numeric_limits<I>::max()) throw ConfigError(what + ": value out of range");
                c.*sec.*member = static_cast<I>(raw);
            }};
}

template <class T>
Field<ScenarioConfig> scenario_field(std::string section, std::string key, T ScenarioConfig::*sec, bool T::*member) {
    const std::string what = section + "." + key;
    return {section, key, [sec, member](const ScenarioConfig& c) { return std::string(c.*sec.*member ? "true" : "false"); },
            [sec, member, what](ScenarioConfig& c, const std::string& v) { c.*sec.*member = parse_bool(v, what); }};
}

template <class T>
Field<ScenarioConfig> scenario_field(std::string section, std::string key, T ScenarioConfig::*sec,
                                     std::string T::*member) {
    return {section, key, [sec, member](const ScenarioConfig& c) { return c.*sec.*member; },
            [sec, member](ScenarioConfig& c, const std::string& v) { c.*sec.*member = v; }};
}

template <class T>
Field<ScenarioConfig> scenario_list(std::string section, std::string key, T ScenarioConfig::*sec,
                                    std::vector<double> T::*member) {
    const std::string what = section + "." + key;
    return {section, key, [sec, member](const ScenarioConfig& c) { return format_double_list(c.*sec.*member); },
            [sec, member, what](ScenarioConfig& c, const std::string& v) {
                c.*sec.*member = v.empty() ? std::vector<double>{} : parse_double_list(v, what);
            }};
}

}  // namespace detail

inline const std::vector<Field<ScenarioConfig>>& scenario_fields() {
    static const std::vector<Field<ScenarioConfig>> fields = [] {
        using detail::scenario_field;
        std::vector<Field<ScenarioConfig>> f;
        f.push_back({"scenario", "name", [](const ScenarioConfig& c) { return c.name; },
                     [](ScenarioConfig& c, const std::string& v) { c.name = v; }});
        f.push_back({"scenario", "description", [](const ScenarioConfig& c) { return c.description; },
                     [](ScenarioConfig& c, const std::string& v) { c.description = v; }});
        for (const auto& mf : model_fields()) {
            f.push_back({mf.section, mf.key, [get = mf.get](const ScenarioConfig& c) { return get(c.model); },
                         [set = mf.set](ScenarioConfig& c, const std::string& v) { set(c.model, v); }});
        }
        using R = RunSection;
        const auto run = &ScenarioConfig::run;
        f.push_back(scenario_field("run", "T", run, &R::T));
        f.push_back(scenario_field("run", "N", run, &R::N));
        f.push_back(scenario_field("run", "paths", run, &R::paths));
        f.push_back(scenario_field("run", "seed", run, &R::seed));
        f.push_back(scenario_field("run", "burn_in", run, &R::burn_in));
        f.push_back(scenario_field("run", "record_every", run, &R::record_every));
        f.push_back(scenario_field("run", "threads", run, &R::threads));
        f.push_back(scenario_field("run", "J0", run, &R::J0));
        f.push_back(scenario_field("run", "A0", run, &R::A0));
        f.push_back(scenario_field("run", "E0", run, &R::E0));
        f.push_back(scenario_field("run", "extinction_threshold", run, &R::extinction_threshold));
        f.push_back(scenario_field("run", "low_fraction", run, &R::low_fraction));
        f.push_back(scenario_field("run", "sample_paths", run, &R::sample_paths));
        f.push_back(scenario_field("run", "hist_bins", run, &R::hist_bins));
        f.push_back(scenario_field("run", "scheme", run, &R::scheme));
        f.push_back(scenario_field("run", "truncation_delta", run, &R::truncation_delta));

        const auto sweep = &ScenarioConfig::sweep;
        f.push_back(scenario_field("sweep", "axis", sweep, &SweepSection::axis));
        f.push_back(detail::scenario_list("sweep", "values", sweep, &SweepSection::values));

        using I = IbmSection;
        const auto ibm = &ScenarioConfig::ibm;
        f.push_back(detail::scenario_list("ibm", "n", ibm, &I::n));
        f.push_back(scenario_field("ibm", "gamma", ibm, &I::gamma));
        f.push_back(scenario_field("ibm", "K", ibm, &I::K));
        f.push_back(scenario_field("ibm", "replicas", ibm, &I::replicas));
        f.push_back(scenario_field("ibm", "T", ibm, &I::T));
        f.push_back(scenario_field("ibm", "report_N", ibm, &I::report_N));
        f.push_back(scenario_field("ibm", "limit_paths", ibm, &I::limit_paths));
        f.push_back(scenario_field("ibm", "limit_refine", ibm, &I::limit_refine));
        f.push_back(scenario_field("ibm", "j0", ibm, &I::j0));
        f.push_back(scenario_field("ibm", "a0", ibm, &I::a0));
        f.push_back(scenario_field("ibm", "e0", ibm, &I::e0));
        f.push_back(scenario_field("ibm", "time_rescale", ibm, &I::time_rescale));
        f.push_back(scenario_field("ibm", "max_events", ibm, &I::max_events));

        using C = ConvergeSection;
        const auto conv = &ScenarioConfig::converge;
        f.push_back(scenario_field("converge", "T", conv, &C::T));
        f.push_back(scenario_field("converge", "base_N", conv, &C::base_N));
        f.push_back(scenario_field("converge", "levels", conv, &C::levels));
        f.push_back(scenario_field("converge", "paths", conv, &C::paths));

        f.push_back({"output", "dir", [](const ScenarioConfig& c) { return c.out_dir; },
                     [](ScenarioConfig& c, const std::string& v) { c.out_dir = v; }});
        return f;
    }();
    return fields;
}

inline std::string serialize_scenario(const ScenarioConfig& c) { return write_sections(c, scenario_fields()); }

inline void apply_scenario(ScenarioConfig& c, const ConfigDoc& doc) {
    for (const auto& [section, entries] : doc.sections) {
        (void)entries;
        const bool known = std::any_of(scenario_fields().begin(), scenario_fields().end(),
                                       [&](const auto& f) { return f.section == section; });
        if (!known) throw ConfigError("unknown section [" + section + "]");
    }
    apply_sections(c, doc, scenario_fields());
}

/// Sets one model parameter addressed as "section.key" (the sweep axis syntax).
inline void set_model_param(ModelParams& p, const std::string& axis, double value) {
    const auto dot = axis.find('.');
    if (dot == std::string::npos) throw ConfigError("sweep axis '" + axis + "' must look like section.key");
    const std::string section = axis.substr(0, dot), key = axis.substr(dot + 1);
    for (const auto& f : model_fields())
        if (f.section == section && f.key == key) {
            f.set(p, format_double(value));
            return;
        }
    throw ConfigError("unknown sweep axis '" + axis + "'");
}

// ---------------------------------------------------------------------------
// Presets

/// Illustrative desk-scale parameters (g/m^2, years). They reproduce the
/// qualitative regimes only; they are not a calibrated data set.
inline ModelParams default_model() {
    ModelParams p;
    auto& eco = p.eco;
    eco.K = 10000.0;
    eco.r_J = RateFamily::constant(2.0);
    eco.rho_A = 0.5;
    eco.m_J = 0.2;
    eco.m_A = 0.1;
    eco.F_A = {0.25, 1.2, false, 0.0, 0.0};
    eco.F_J = {0.0, 0.8, false, 0.0, 0.0};
    eco.sigma_J = 0.2;
    eco.sigma_A = 0.15;

    auto& cp = p.comp;
    cp.beta0_bar = 0.2;
    cp.beta1_bar = 0.2;
    cp.tau_U = 1.0;
    cp.sigma_E = 0.5;
    cp.eta_sig = 0.02;
    cp.P_min = 600.0;
    cp.P_max = 1200.0;
    cp.s = 0.0;

    auto& jp = p.jumps;
    jp.lambda = 0.3;
    jp.marks = JumpParams::enso(0.4, -0.3, 0.1);
    jp.eps1 = 1.0;
    jp.eps2 = 0.5;
    jp.cap = eco.K;

    auto& pp = p.price;
    pp.kind = PriceKind::GeometricBrownian;
    pp.mu = 0.04;
    pp.sigma_P = 0.07;
    pp.theta = 300.0;
    pp.kappa_P = 0.5;
    pp.P0 = 300.0;
    return p;
}

inline std::vector<std::string> preset_names() {
    return {"default", "full-compliance", "subsidy-sweep", "volatility-sweep", "extinction", "persistence"};
}

inline ScenarioConfig preset(const std::string& name) {
    ScenarioConfig c;
    c.name = name;
    c.model = default_model();
    c.description = "illustrative desk-scale parameters, not a calibrated data set";
    if (name == "default") {
        c.description = "dynamic compliance; " + c.description;
    } else if (name == "full-compliance") {
        c.model.eco.F_A.noncompliant = c.model.eco.F_A.compliant;
        c.model.eco.F_J.noncompliant = c.model.eco.F_J.compliant;
        c.description = "extraction held at the legal level; " + c.description;
    } else if (name == "subsidy-sweep") {
        c.sweep = {"compliance.s", {0.0, 150.0, 300.0}};
        c.description = "subsidy sweep over s; " + c.description;
    } else if (name == "volatility-sweep") {
        c.sweep = {"price.sigma_P", {0.07, 0.09, 0.11}};
        c.description = "price volatility sweep; " + c.description;
    } else if (name == "extinction") {
        auto& eco = c.model.eco;
        eco.r_J = RateFamily::constant(0.3);
        eco.rho_A = 0.5;
        eco.m_J = 0.4;
        eco.m_A = 0.6;
        eco.F_A = RateFamily::constant(0.0);
        eco.F_J = RateFamily::constant(0.0);
        eco.sigma_J = 1.0;
        eco.sigma_A = 1.0;
        c.model.jumps.lambda = 0.0;
        c.run.T = 200.0;
        c.run.N = 4000;
        c.run.paths = 1000;
        c.run.burn_in = 0.0;
        c.run.record_every = 10;
        c.description = "extinction regime (criterion rate 0.8); " + c.description;
    } else if (name == "persistence") {
        c.model.eco.F_A.noncompliant = c.model.eco.F_A.compliant;
        c.model.eco.F_J.noncompliant = c.model.eco.F_J.compliant;
        c.model.price.kind = PriceKind::ExpOrnsteinUhlenbeck;
        c.model.price.sigma_P = 0.1;
        c.run.T = 100.0;
        c.run.N = 2000;
        c.run.paths = 2000;
        c.run.burn_in = 0.0;
        c.run.record_every = 20;
        c.description = "persistent population with mean-reverting price; " + c.description;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

/// Preset named by [scenario] name in the document (or `fallback`), then the document on top.
inline ScenarioConfig load_scenario(const ConfigDoc& doc, const std::string& fallback = "default") {
    const std::string* name = doc.get("scenario", "name");
    const std::string base = name && !name->empty() ? *name : fallback;
    const auto names = preset_names();
    ScenarioConfig c = std::find(names.begin(), names.end(), base) != names.end() ? preset(base) : preset(fallback);
    apply_scenario(c, doc);
    return c;
}

inline ScenarioConfig load_scenario_file(const std::string& path, const std::string& fallback = "default") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return load_scenario(ConfigDoc::parse(in), fallback);
}

/// KELPSIM_SEED, KELPSIM_PATHS, KELPSIM_THREADS, KELPSIM_OUT.
inline void apply_env_overrides(ScenarioConfig& c) {
    if (const char* v = std::getenv("KELPSIM_SEED")) c.run.seed = parse_u64(v, "KELPSIM_SEED");
    if (const char* v = std::getenv("KELPSIM_PATHS")) c.run.paths = static_cast<std::size_t>(parse_u64(v, "KELPSIM_PATHS"));
    if (const char* v = std::getenv("KELPSIM_THREADS")) c.run.threads = static_cast<unsigned>(parse_u64(v, "KELPSIM_THREADS"));
    if (const char* v = std::getenv("KELPSIM_OUT")) c.out_dir = v;
}

/// Model parameters of each sweep point (a single point when no sweep is set).
inline std::vector<std::pair<std::string, ModelParams>> sweep_points(const ScenarioConfig& c) {
    std::vector<std::pair<std::string, ModelParams>> out;
    if (c.sweep.axis.empty() || c.sweep.values.empty()) {
        out.emplace_back("point-0", c.model);
        return out;
    }
    for (std::size_t i = 0; i < c.sweep.values.size(); ++i) {
        ModelParams p = c.model;
        set_model_param(p, c.sweep.axis, c.sweep.values[i]);
        out.emplace_back("point-" + std::to_string(i), p);
    }
    return out;
}

}  // namespace kelpsim
