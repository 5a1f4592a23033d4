// kelpsim command line: check, simulate, sweep, ibm, converge, analyze.
//
// Exit status: 0 success, 1 validation failure, 2 runtime failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "kelpsim/analysis.hpp"
#include "kelpsim/config.hpp"
#include "kelpsim/convergence.hpp"
#include "kelpsim/ibm.hpp"
#include "kelpsim/path_io.hpp"
#include "kelpsim/report.hpp"
#include "kelpsim/scheme.hpp"

namespace fs = std::filesystem;
using namespace kelpsim;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailed = 2;

struct CommonOptions {
    std::string config;
    std::string preset;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Scenario file (sectioned key = value)");
    cmd->add_option("--preset", o.preset, "Base preset: default, full-compliance, subsidy-sweep, volatility-sweep, "
                                          "extinction, persistence");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--paths", o.paths, "Number of trajectories (IBM replicas for ibm, coupled paths for converge)");
    cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

/// Preset, then config file, then environment, then flags.
ScenarioConfig resolve(const CommonOptions& o) {
    const std::string base = o.preset.empty() ? "default" : o.preset;
    ScenarioConfig c = o.config.empty() ? preset(base) : load_scenario_file(o.config, base);
    if (!o.config.empty() && !o.preset.empty()) {
        // an explicit --preset wins over the name stored in the file
        std::ifstream in(o.config);
        auto doc = ConfigDoc::parse(in);
        c = preset(o.preset);
        apply_scenario(c, doc);
        c.name = o.preset;
    }
    apply_env_overrides(c);
    if (o.seed) c.run.seed = *o.seed;
    if (o.paths) c.run.paths = *o.paths;
    if (o.threads) c.run.threads = *o.threads;
    if (!o.out.empty()) c.out_dir = o.out;
    return c;
}

void print_report(std::ostream& out, const ValidationReport& r) {
    for (const auto& c : r.checks) {
        out << (c.pass ? "pass  " : "FAIL  ") << c.id << "  " << c.description;
        for (const auto& [k, v] : c.witness) out << "  " << k << "=" << format_double(v);
        out << "\n";
    }
}

void require_valid_point(const ModelParams& p, const RunSection& run) {
    auto report = validate_params(p);
    if (!report.ok()) throw ValidationFailure(std::move(report));
    make_grid(p, run.T, run.N);
}

SimulateOptions simulate_options(const RunSection& run) {
    SimulateOptions s;
    s.scheme = parse_scheme_tag(run.scheme);
    if (s.scheme == SchemeTag::Ibm) throw ConfigError("run.scheme cannot be 'ibm'");
    s.truncation_delta = run.truncation_delta;
    s.burn_in = run.burn_in;
    s.record_every = run.record_every;
    return s;
}

std::string pad(std::size_t i, int width = 5) {
    std::ostringstream o;
    o.width(width);
    o.fill('0');
    o << i;
    return o.str();
}

// ---------------------------------------------------------------------------

int cmd_check(const ScenarioConfig& c) {
    bool ok = true;
    std::ostringstream kv;
    const auto points = sweep_points(c);
    for (const auto& [label, p] : points) {
        const auto report = validate_params(p);
        std::cout << "[" << label << "] parameter hash " << hex64(param_hash(p)) << "\n";
        print_report(std::cout, report);
        const double dt = c.run.T / static_cast<double>(c.run.N);
        const auto dtc = validate_dt(p, dt);
        const bool band = dt < 0.5;
        std::cout << (dtc.valid ? "pass  " : "FAIL  ") << "dt.positivity  1 - max sup kappa * dt >= 0  dt="
                  << format_double(dt) << "  slack=" << format_double(dtc.slack) << "\n";
        std::cout << (band ? "pass  " : "FAIL  ") << "dt.band  dt < 1/2 for the compliance clamp\n";
        for (const auto& ch : report.checks) kv << label << "." << ch.id << "=" << (ch.pass ? "pass" : "fail") << "\n";
        kv << label << ".dt.positivity=" << (dtc.valid ? "pass" : "fail") << "\n";
        kv << label << ".dt.slack=" << format_double(dtc.slack) << "\n";
        kv << label << ".dt.band=" << (band ? "pass" : "fail") << "\n";
        ok = ok && report.ok() && dtc.valid && band;
    }
    std::cout << "\n" << kv.str() << "status=" << (ok ? "pass" : "fail") << "\n";
    return ok ? kOk : kInvalid;
}

int cmd_simulate(const ScenarioConfig& c, bool sweep) {
    if (sweep && c.sweep.axis.empty()) throw ConfigError("sweep: no [sweep] axis configured");
    if (c.run.record_every == 0 || c.run.N % c.run.record_every != 0)
        throw ParameterError("run.record_every must divide run.N");
    ScenarioConfig single = c;
    if (!sweep) single.sweep = {};
    const auto points = sweep_points(single);
    for (const auto& [label, p] : points) require_valid_point(p, c.run);

    const fs::path root = c.out_dir;
    fs::create_directories(root);
    write_text(root / "scenario.cfg", serialize_scenario(c));
    std::ostringstream manifest;
    manifest << "# command=" << (sweep ? "sweep" : "simulate") << "\n# scenario=" << c.name
             << "\n# master_seed=" << c.run.seed << "\n# paths=" << c.run.paths << "\n";
    manifest << "point\taxis\tvalue\tparam_hash\tdir\n";

    const auto sim = simulate_options(c.run);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& [label, p] = points[i];
        const auto grid = make_grid(p, c.run.T, c.run.N);
        EnsembleOptions eo;
        eo.paths = c.run.paths;
        eo.master_seed = c.run.seed;
        eo.threads = c.run.threads;
        eo.sim = sim;
        eo.extinction_threshold = c.run.extinction_threshold;
        std::cerr << "[" << label << "] simulating " << eo.paths << " paths, N=" << grid.N << "\n";
        const auto ens = run_ensemble(p, c.x0(), grid, eo);

        const fs::path dir = root / label;
        fs::create_directories(dir / "paths");
        {
            std::ofstream out(dir / "ensemble.tsv", std::ios::binary);
            write_ensemble(out, ens);
            if (!out) throw std::runtime_error("cannot write ensemble for " + label);
        }
        write_statistics(dir, ens, report_settings(p, c.run));
        SimulateOptions full = sim;
        full.record_every = 1;
        full.validate = false;
        for (std::size_t k = 0; k < std::min(c.run.sample_paths, c.run.paths); ++k) {
            const auto rec = simulate_path(p, c.x0(), grid, SeedSpec{c.run.seed, k}, full);
            std::ofstream out(dir / "paths" / ("path-" + pad(k) + ".tsv"), std::ios::binary);
            write_path(out, rec);
        }
        const std::string axis = sweep ? c.sweep.axis : "-";
        const std::string value = sweep ? format_double(c.sweep.values[i]) : "-";
        manifest << label << '\t' << axis << '\t' << value << '\t' << hex64(ens.param_hash) << '\t' << label << '\n';

        const auto low = extinction_probability(ens, report_settings(p, c.run).low_threshold(), grid.T);
        std::cout << label << "\taxis=" << axis << "\tvalue=" << value << "\tlow_fraction=" << format_double(low.probability)
                  << "\tparam_hash=" << hex64(ens.param_hash) << "\n";
    }
    write_text(root / "manifest.tsv", manifest.str());
    return kOk;
}

int cmd_ibm(const ScenarioConfig& c) {
    IbmConfig cfg;
    cfg.gamma = c.ibm.gamma;
    cfg.model = c.model;
    cfg.model.eco.K = c.ibm.K;
    cfg.time_rescale = c.ibm.time_rescale;
    cfg.price = c.model.price.P0;
    cfg.max_events = static_cast<std::uint64_t>(c.ibm.max_events);
    MeanfieldOptions mo;
    mo.n_values.clear();
    for (double n : c.ibm.n) {
        if (!(n >= 2.0) || n != std::floor(n)) throw ParameterError("ibm.n entries must be integers >= 2");
        mo.n_values.push_back(static_cast<std::uint64_t>(n));
    }
    mo.replicas = c.ibm.replicas;
    mo.T = c.ibm.T;
    mo.report_N = c.ibm.report_N;
    mo.limit_paths = c.ibm.limit_paths;
    mo.limit_refine = c.ibm.limit_refine;
    mo.master_seed = c.run.seed;
    mo.threads = c.run.threads;
    const StateVec x0{c.ibm.j0, c.ibm.a0, c.ibm.e0, cfg.price};
    std::cerr << "ibm: " << mo.n_values.size() << " population sizes, " << mo.replicas << " replicas each\n";
    const auto table = meanfield_error(cfg, x0, mo);

    const fs::path root = c.out_dir;
    fs::create_directories(root / "ibm_paths");
    std::ostringstream o;
    const auto lim = meanfield_limit_params(cfg);
    o << "# table=meanfield\n# gamma=" << format_double(cfg.gamma) << "\n# replicas=" << mo.replicas
      << "\n# limit_paths=" << mo.limit_paths << "\n# limit_sigma_E=" << format_double(lim.comp.sigma_E)
      << "\n# master_seed=" << mo.master_seed << "\n";
    o << "n\tdistance\tdistance_se\tgap_j\tgap_j_se\tgap_a\tgap_a_se\tgap_e\tgap_e_se\tvar_gap_j\tvar_gap_a\tvar_gap_e"
         "\tevents\tclamped\taborted\n";
    for (const auto& r : table.rows) {
        o << r.n << '\t' << format_double(r.distance) << '\t' << format_double(r.distance_se);
        for (std::size_t k = 0; k < 3; ++k) o << '\t' << format_double(r.mean_gap[k]) << '\t' << format_double(r.mean_gap_se[k]);
        for (std::size_t k = 0; k < 3; ++k) o << '\t' << format_double(r.var_gap[k]);
        o << '\t' << r.events << '\t' << (r.clamped ? 1 : 0) << '\t' << (r.aborted ? 1 : 0) << '\n';
        std::cout << "n=" << r.n << "\tdistance=" << format_double(r.distance) << "\tse=" << format_double(r.distance_se)
                  << (r.clamped ? "\t(clamped beta/n)" : "") << (r.aborted ? "\t(event guard hit)" : "") << "\n";
    }
    write_text(root / "meanfield.tsv", o.str());

    std::ostringstream b;
    b << "# table=meanfield_bands\nsource\tt\tmean_j\tmean_a\tmean_e\tvar_j\tvar_a\tvar_e\n";
    auto bands = [&](const std::string& src, const MomentBands& m) {
        for (std::size_t k = 0; k < m.times.size(); ++k) {
            b << src << '\t' << format_double(m.times[k]);
            for (std::size_t c3 = 0; c3 < 3; ++c3) b << '\t' << format_double(m.mean[k][c3]);
            for (std::size_t c3 = 0; c3 < 3; ++c3) b << '\t' << format_double(m.var[k][c3]);
            b << '\n';
        }
    };
    bands("limit", table.limit);
    for (const auto& r : table.rows) bands("n=" + std::to_string(r.n), r.ibm);
    write_text(root / "meanfield_bands.tsv", b.str());

    const GridSpec report{mo.T, mo.report_N};
    for (std::uint64_t n : mo.n_values) {
        IbmConfig one = cfg;
        one.n = n;
        const auto run = simulate_ibm(one, IbmState::from_scaled(n, x0.J, x0.A, x0.E), report,
                                      meanfield_replica_seed(mo.master_seed, n, 0));
        std::ofstream out(root / "ibm_paths" / ("n-" + std::to_string(n) + ".tsv"), std::ios::binary);
        write_path(out, run.path);
    }
    return kOk;
}

int cmd_converge(const ScenarioConfig& c) {
    StrongErrorOptions so;
    so.T = c.converge.T;
    so.base_N = c.converge.base_N;
    so.levels = c.converge.levels;
    so.paths = c.converge.paths;
    so.master_seed = c.run.seed;
    so.threads = c.run.threads;
    std::cerr << "converge: " << so.levels << " levels, " << so.paths << " coupled paths\n";
    const auto t = strong_error_curve(c.model, c.x0(), so);

    std::ostringstream o;
    const char* comp[3] = {"J", "A", "E"};
    o << "# table=strong_error\n# paths=" << t.paths << "\n# reference_dt="
      << format_double(so.T / static_cast<double>(so.base_N << so.levels)) << "\n# coupling_mismatches=" << t.mismatches
      << "\n";
    for (std::size_t k = 0; k < 3; ++k) o << "# order_sup_" << comp[k] << "=" << format_double(t.order_sup[k]) << "\n";
    for (std::size_t k = 0; k < 3; ++k)
        o << "# order_terminal_" << comp[k] << "=" << format_double(t.order_terminal[k]) << "\n";
    o << "# order_total=" << format_double(t.order_total) << "\n";
    o << "level\tdt\terr_J\terr_A\terr_E\tse_J\tse_A\tse_E\tterm_J\tterm_A\tterm_E\tterm_se_J\tterm_se_A\tterm_se_E"
         "\terr_total\tse_total\n";
    for (const auto& r : t.rows) {
        o << r.level << '\t' << format_double(r.dt);
        for (double v : r.sup_mse) o << '\t' << format_double(v);
        for (double v : r.sup_se) o << '\t' << format_double(v);
        for (double v : r.terminal_mse) o << '\t' << format_double(v);
        for (double v : r.terminal_se) o << '\t' << format_double(v);
        o << '\t' << format_double(r.sup_total) << '\t' << format_double(r.sup_total_se) << '\n';
    }
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / "errors.tsv", o.str());
    std::cout << o.str();
    return kOk;
}

int cmd_analyze(const ScenarioConfig& c, const std::string& ensemble_file) {
    std::ifstream in(ensemble_file);
    if (!in) throw std::runtime_error("cannot open ensemble '" + ensemble_file + "'");
    const auto ens = read_ensemble(in);
    const auto points = sweep_points(c);
    for (const auto& [label, p] : points) {
        if (param_hash(p) != ens.param_hash) continue;
        write_statistics(c.out_dir, ens, report_settings(p, c.run));
        std::cout << "analyzed " << ens.size() << " paths (" << label << ", param_hash " << hex64(ens.param_hash)
                  << ") into " << c.out_dir << "\n";
        return kOk;
    }
    throw std::runtime_error("ensemble parameter hash " + hex64(ens.param_hash) +
                             " matches no point of the configuration; pass the --config used for the run");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kelpsim: kelp / harvester compliance jump-diffusion simulator"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string ensemble_file;
    auto* check = app.add_subcommand("check", "Validate parameters and the time step");
    auto* simulate = app.add_subcommand("simulate", "Simulate one scenario ensemble");
    auto* sweep = app.add_subcommand("sweep", "Simulate every point of the configured sweep");
    auto* ibm = app.add_subcommand("ibm", "Individual-based chain against its mean-field limit");
    auto* converge = app.add_subcommand("converge", "Coupled strong-error study");
    auto* analyze = app.add_subcommand("analyze", "Recompute statistics from a stored ensemble");
    for (auto* cmd : {check, simulate, sweep, ibm, converge, analyze}) add_common(cmd, opts);
    analyze->add_option("--ensemble", ensemble_file, "ensemble.tsv written by simulate or sweep")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kFailed;
    }

    try {
        ScenarioConfig c = resolve(opts);
        if (opts.paths && *ibm) c.ibm.replicas = *opts.paths;
        if (opts.paths && *converge) c.converge.paths = *opts.paths;
        if (*check) return cmd_check(c);
        if (*simulate) return cmd_simulate(c, false);
        if (*sweep) return cmd_simulate(c, true);
        if (*ibm) return cmd_ibm(c);
        if (*converge) return cmd_converge(c);
        if (*analyze) return cmd_analyze(c, ensemble_file);
    } catch (const ValidationFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        print_report(std::cerr, e.report);
        return kInvalid;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    }
    return kFailed;
}
