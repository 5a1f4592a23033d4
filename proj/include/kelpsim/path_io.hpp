#pragma once
// Text formats for paths and ensembles. Header lines start with '#' and hold
// key=value metadata; numbers are written in shortest round-trip form so a
// file read back gives bit-identical doubles.

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "kelpsim/analysis.hpp"
#include "kelpsim/params_io.hpp"
#include "kelpsim/scheme.hpp"

namespace kelpsim {

inline void write_path(std::ostream& out, const PathRecord& p) {
    const bool ibm = p.tag == SchemeTag::Ibm;
    out << "# format=kelpsim-path-1\n";
    out << "# seed=" << p.seed.master_seed << "\n";
    out << "# trajectory=" << p.seed.trajectory_index << "\n";
    out << "# dt=" << format_double(p.grid.dt()) << "\n";
    out << "# T=" << format_double(p.grid.T) << "\n";
    out << "# N=" << p.grid.N << "\n";
    out << "# stride=" << p.stride << "\n";
    out << "# scheme_tag=" << scheme_name(p.tag) << "\n";
    out << "# param_hash=" << hex64(p.param_hash) << "\n";
    out << (ibm ? "t\tJ\tA\tE\tP\tevents\n" : "t\tJ\tA\tE\tP\n");
    for (std::size_t i = 0; i < p.states.size(); ++i) {
        const auto& x = p.states[i];
        out << format_double(p.time_at(i)) << '\t' << format_double(x.J) << '\t' << format_double(x.A) << '\t'
            << format_double(x.E) << '\t' << format_double(x.P);
        if (ibm) out << '\t' << (i < p.event_counts.size() ? p.event_counts[i] : 0);
        out << '\n';
    }
    out << "# jumps=" << p.jumps.size() << "\n";
    out << "t\tmark\n";
    for (const auto& j : p.jumps) out << format_double(j.time) << '\t' << format_double(j.mark) << '\n';
}

namespace detail {

inline std::pair<std::string, std::string> header_kv(const std::string& line) {
    const auto body = trim(std::string_view(line).substr(1));
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed header line '" + line + "'");
    return {trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1))};
}

inline std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ConfigError("bad hex value '" + s + "'");
    return v;
}

}  // namespace detail

/// Reads a file produced by write_path. The PathSummary is rebuilt from the
/// recorded states only.
inline PathRecord read_path(std::istream& in) {
    PathRecord p;
    std::map<std::string, std::string> meta;
    std::string line;
    bool in_jumps = false;
    bool seen_columns = false;
    bool started = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto [k, v] = detail::header_kv(line);
            if (k == "jumps") {
                in_jumps = true;
                seen_columns = false;
            } else {
                meta[k] = v;
            }
            continue;
        }
        if (!seen_columns) {
            seen_columns = true;
            continue;
        }
        const auto cols = split(line, '\t');
        if (in_jumps) {
            if (cols.size() != 2) throw ConfigError("path file: bad jump row");
            p.jumps.push_back({parse_double(cols[0], "jump time"), parse_double(cols[1], "jump mark")});
            continue;
        }
        if (cols.size() < 5) throw ConfigError("path file: bad state row");
        StateVec x{parse_double(cols[1], "J"), parse_double(cols[2], "A"), parse_double(cols[3], "E"),
                   parse_double(cols[4], "P")};
        p.states.push_back(x);
        if (cols.size() >= 6) p.event_counts.push_back(parse_u64(cols[5], "events"));
        if (!started) {
            p.summary.start(x);
            started = true;
        } else {
            p.summary.observe(x);
        }
    }
    auto need = [&](const char* k) -> const std::string& {
        const auto it = meta.find(k);
        if (it == meta.end()) throw ConfigError(std::string("path file: missing header '") + k + "'");
        return it->second;
    };
    p.seed = {parse_u64(need("seed"), "seed"), parse_u64(need("trajectory"), "trajectory")};
    p.grid = {parse_double(need("T"), "T"), static_cast<std::size_t>(parse_u64(need("N"), "N"))};
    p.stride = static_cast<std::size_t>(parse_u64(need("stride"), "stride"));
    p.tag = parse_scheme_tag(need("scheme_tag"));
    p.param_hash = detail::parse_hex64(need("param_hash"));
    return p;
}

/// All recorded states of an ensemble, one row per (path, point).
inline void write_ensemble(std::ostream& out, const Ensemble& ens) {
    out << "# format=kelpsim-ensemble-1\n";
    out << "# master_seed=" << ens.master_seed << "\n";
    out << "# paths=" << ens.size() << "\n";
    out << "# points=" << ens.points() << "\n";
    out << "# T=" << format_double(ens.grid.T) << "\n";
    out << "# N=" << ens.grid.N << "\n";
    out << "# stride=" << ens.stride << "\n";
    out << "# param_hash=" << hex64(ens.param_hash) << "\n";
    out << "# extinction_threshold=" << format_double(ens.extinction_threshold) << "\n";
    out << "path\tt\tJ\tA\tE\tP\n";
    for (std::size_t i = 0; i < ens.size(); ++i) {
        const auto& p = ens.paths[i];
        for (std::size_t k = 0; k < p.states.size(); ++k) {
            const auto& x = p.states[k];
            out << i << '\t' << format_double(ens.time_at(k)) << '\t' << format_double(x.J) << '\t'
                << format_double(x.A) << '\t' << format_double(x.E) << '\t' << format_double(x.P) << '\n';
        }
    }
}

inline Ensemble read_ensemble(std::istream& in) {
    Ensemble ens;
    std::map<std::string, std::string> meta;
    std::string line;
    bool seen_columns = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            meta.insert(detail::header_kv(line));
            continue;
        }
        if (!seen_columns) {
            seen_columns = true;
            const auto need = [&](const char* k) -> const std::string& {
                const auto it = meta.find(k);
                if (it == meta.end()) throw ConfigError(std::string("ensemble file: missing header '") + k + "'");
                return it->second;
            };
            ens.master_seed = parse_u64(need("master_seed"), "master_seed");
            ens.grid = {parse_double(need("T"), "T"), static_cast<std::size_t>(parse_u64(need("N"), "N"))};
            ens.stride = static_cast<std::size_t>(parse_u64(need("stride"), "stride"));
            ens.param_hash = detail::parse_hex64(need("param_hash"));
            ens.extinction_threshold = parse_double(need("extinction_threshold"), "extinction_threshold");
            ens.paths.resize(static_cast<std::size_t>(parse_u64(need("paths"), "paths")));
            for (auto& p : ens.paths) {
                p.grid = ens.grid;
                p.stride = ens.stride;
                p.param_hash = ens.param_hash;
            }
            continue;
        }
        const auto cols = split(line, '\t');
        if (cols.size() != 6) throw ConfigError("ensemble file: bad row");
        const auto i = static_cast<std::size_t>(parse_u64(cols[0], "path"));
        if (i >= ens.paths.size()) throw ConfigError("ensemble file: path index out of range");
        auto& p = ens.paths[i];
        const StateVec x{parse_double(cols[2], "J"), parse_double(cols[3], "A"), parse_double(cols[4], "E"),
                         parse_double(cols[5], "P")};
        if (p.states.empty())
            p.summary.start(x);
        else
            p.summary.observe(x);
        p.states.push_back(x);
    }
    for (std::size_t i = 0; i < ens.paths.size(); ++i) {
        ens.paths[i].seed = {ens.master_seed, i};
        if (ens.paths[i].states.size() != ens.points()) throw ConfigError("ensemble file: ragged paths");
    }
    return ens;
}

}  // namespace kelpsim
