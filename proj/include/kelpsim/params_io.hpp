#pragma once
// Plain-text configuration format: flat, sectioned key = value.
//
//   # comment
//   [ecology]
//   K = 10000
//   F_A.noncompliant = 1.2
//
// This header knows the model sections (ecology, compliance, jumps, price);
// run-level sections are layered on top in config.hpp.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "kelpsim/model.hpp"

namespace kelpsim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw ConfigError("invalid number for " + what + ": '" + text + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw ConfigError("invalid integer for " + what + ": '" + text + "'");
    return v;
}

inline bool parse_bool(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("invalid boolean for " + what + ": '" + text + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        auto t = trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& item : split(s, ',')) out.push_back(parse_double(item, what));
    return out;
}

inline std::string format_double_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
    return out;
}

/// Parsed key/value document. Keys keep file order inside a section.
struct ConfigDoc {
    std::vector<std::string> section_order;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;

    void set(const std::string& section, const std::string& key, const std::string& value) {
        auto& entries = sections[section];
        if (entries.empty() && std::find(section_order.begin(), section_order.end(), section) == section_order.end())
            section_order.push_back(section);
        for (auto& [k, v] : entries)
            if (k == key) {
                v = value;
                return;
            }
        entries.emplace_back(key, value);
    }

    const std::string* get(const std::string& section, const std::string& key) const {
        const auto it = sections.find(section);
        if (it == sections.end()) return nullptr;
        for (const auto& [k, v] : it->second)
            if (k == key) return &v;
        return nullptr;
    }

    static ConfigDoc parse(std::istream& in) {
        ConfigDoc doc;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
                section = trim(t.substr(1, t.size() - 2));
                if (std::find(doc.section_order.begin(), doc.section_order.end(), section) == doc.section_order.end())
                    doc.section_order.push_back(section);
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos || section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value' inside a section");
            doc.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return doc;
    }

    static ConfigDoc parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }
};

// ---------------------------------------------------------------------------
// Field tables

template <class Target>
struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const Target&)> get;
    std::function<void(Target&, const std::string&)> set;
};

namespace detail {

template <class Target, class Getter>
Field<Target> real_field_fn(std::string section, std::string key, Getter ref) {
    const std::string what = section + "." + key;
    return {section, key, [ref](const Target& t) { return format_double(ref(const_cast<Target&>(t))); },
            [ref, what](Target& t, const std::string& v) { ref(t) = parse_double(v, what); }};
}

inline void add_family(std::vector<Field<ModelParams>>& out, const std::string& name,
                       RateFamily EcologicalParams::*fam) {
    const std::string sec = "ecology";
    out.push_back(real_field_fn<ModelParams>(sec, name + ".compliant",
                                             [fam](ModelParams& p) -> double& { return (p.eco.*fam).compliant; }));
    out.push_back(real_field_fn<ModelParams>(sec, name + ".noncompliant",
                                             [fam](ModelParams& p) -> double& { return (p.eco.*fam).noncompliant; }));
    const std::string what = sec + "." + name + ".price_gated";
    out.push_back({sec, name + ".price_gated",
                   [fam](const ModelParams& p) { return std::string((p.eco.*fam).price_gated ? "true" : "false"); },
                   [fam, what](ModelParams& p, const std::string& v) { (p.eco.*fam).price_gated = parse_bool(v, what); }});
    out.push_back(real_field_fn<ModelParams>(sec, name + ".gate_eta",
                                             [fam](ModelParams& p) -> double& { return (p.eco.*fam).gate_eta; }));
    out.push_back(real_field_fn<ModelParams>(sec, name + ".gate_price",
                                             [fam](ModelParams& p) -> double& { return (p.eco.*fam).gate_price; }));
}

inline std::string price_kind_name(PriceKind k) {
    switch (k) {
        case PriceKind::GeometricBrownian: return "gbm";
        case PriceKind::ExpOrnsteinUhlenbeck: return "exp-ou";
        case PriceKind::Constant: return "constant";
    }
    return "constant";
}

inline PriceKind parse_price_kind(const std::string& v) {
    const auto t = trim(v);
    if (t == "gbm" || t == "geometric-brownian") return PriceKind::GeometricBrownian;
    if (t == "exp-ou" || t == "exponential-ornstein-uhlenbeck") return PriceKind::ExpOrnsteinUhlenbeck;
    if (t == "constant") return PriceKind::Constant;
    throw ConfigError("unknown price kind '" + v + "' (gbm | exp-ou | constant)");
}

inline std::string format_marks(const std::vector<MarkAtom>& marks) {
    std::string out;
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const auto& m = marks[i];
        out += (i ? "; " : "") + format_double(m.z) + ":" + format_double(m.prob) + ":" + format_double(m.gain_A) +
               ":" + format_double(m.gain_J);
    }
    return out;
}

inline std::vector<MarkAtom> parse_marks(const std::string& text) {
    std::vector<MarkAtom> out;
    for (const auto& item : split(text, ';')) {
        const auto parts = split(item, ':');
        if (parts.size() != 4) throw ConfigError("jumps.marks: expected 'z:prob:gain_A:gain_J' entries");
        out.push_back({parse_double(parts[0], "mark z"), parse_double(parts[1], "mark prob"),
                       parse_double(parts[2], "mark gain_A"), parse_double(parts[3], "mark gain_J")});
    }
    return out;
}

}  // namespace detail

inline const std::vector<Field<ModelParams>>& model_fields() {
    static const std::vector<Field<ModelParams>> fields = [] {
        using detail::real_field_fn;
        std::vector<Field<ModelParams>> f;
        auto eco = [&](const char* key, double EcologicalParams::*m) {
            f.push_back(real_field_fn<ModelParams>("ecology", key, [m](ModelParams& p) -> double& { return p.eco.*m; }));
        };
        eco("K", &EcologicalParams::K);
        eco("rho_A", &EcologicalParams::rho_A);
        eco("m_J", &EcologicalParams::m_J);
        eco("m_A", &EcologicalParams::m_A);
        eco("sigma_J", &EcologicalParams::sigma_J);
        eco("sigma_A", &EcologicalParams::sigma_A);
        detail::add_family(f, "r_J", &EcologicalParams::r_J);
        detail::add_family(f, "F_J", &EcologicalParams::F_J);
        detail::add_family(f, "F_A", &EcologicalParams::F_A);

        auto comp = [&](const char* key, double ComplianceParams::*m) {
            f.push_back(real_field_fn<ModelParams>("compliance", key, [m](ModelParams& p) -> double& { return p.comp.*m; }));
        };
        comp("beta0_bar", &ComplianceParams::beta0_bar);
        comp("beta1_bar", &ComplianceParams::beta1_bar);
        comp("tau_U", &ComplianceParams::tau_U);
        comp("sigma_E", &ComplianceParams::sigma_E);
        comp("eta_sig", &ComplianceParams::eta_sig);
        comp("P_min", &ComplianceParams::P_min);
        comp("P_max", &ComplianceParams::P_max);
        comp("s", &ComplianceParams::s);

        auto jump = [&](const char* key, double JumpParams::*m) {
            f.push_back(real_field_fn<ModelParams>("jumps", key, [m](ModelParams& p) -> double& { return p.jumps.*m; }));
        };
        jump("lambda", &JumpParams::lambda);
        jump("eps1", &JumpParams::eps1);
        jump("eps2", &JumpParams::eps2);
        jump("cap", &JumpParams::cap);
        f.push_back({"jumps", "marks", [](const ModelParams& p) { return detail::format_marks(p.jumps.marks); },
                     [](ModelParams& p, const std::string& v) { p.jumps.marks = detail::parse_marks(v); }});

        f.push_back({"price", "kind", [](const ModelParams& p) { return detail::price_kind_name(p.price.kind); },
                     [](ModelParams& p, const std::string& v) { p.price.kind = detail::parse_price_kind(v); }});
        auto price = [&](const char* key, double PriceParams::*m) {
            f.push_back(real_field_fn<ModelParams>("price", key, [m](ModelParams& p) -> double& { return p.price.*m; }));
        };
        price("mu", &PriceParams::mu);
        price("sigma_P", &PriceParams::sigma_P);
        price("theta", &PriceParams::theta);
        price("kappa_P", &PriceParams::kappa_P);
        price("P0", &PriceParams::P0);
        return f;
    }();
    return fields;
}

template <class Target>
std::string write_sections(const Target& t, const std::vector<Field<Target>>& fields) {
    std::string out, section;
    for (const auto& f : fields) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(t) + "\n";
    }
    return out;
}

/// Apply every key of `doc` that belongs to one of `fields`' sections.
/// Unknown keys inside those sections are errors.
template <class Target>
void apply_sections(Target& t, const ConfigDoc& doc, const std::vector<Field<Target>>& fields) {
    for (const auto& [section, entries] : doc.sections) {
        const bool ours = std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section; });
        if (!ours) continue;
        for (const auto& [key, value] : entries) {
            const auto it =
                std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section && f.key == key; });
            if (it == fields.end()) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
            it->set(t, value);
        }
    }
}

inline std::string serialize_params(const ModelParams& p) { return write_sections(p, model_fields()); }

inline ModelParams parse_params(const ConfigDoc& doc, ModelParams base = {}) {
    apply_sections(base, doc, model_fields());
    return base;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Hash of the canonical serialization; identical params give identical hashes.
inline std::uint64_t param_hash(const ModelParams& p) { return fnv1a64(serialize_params(p)); }

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace kelpsim
