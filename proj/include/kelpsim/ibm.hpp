#pragma once
// n-agent individual-based chain on the complete graph, simulated exactly
// with Gillespie's direct method.
//
// State (j, a, e): biomass units and complier fraction, all scaled by 1/n.
// Six channels: maturation, juvenile birth, adult death, juvenile death and
// the two compliance flips driven by resampling at rate gamma.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "kelpsim/model.hpp"
#include "kelpsim/noise.hpp"
#include "kelpsim/scheme.hpp"

namespace kelpsim {

struct IbmConfig {
    std::uint64_t n = 100;
    double gamma = 1.0;
    ModelParams model;
    bool time_rescale = true;  // simulate t -> X(n t), generator multiplied by n
    double price = 0.0;        // price held fixed during the run
    std::uint64_t max_events = 1'000'000'000;
};

/// Integer counts; the scaled coordinates are count / n.
struct IbmState {
    std::uint64_t n = 2;
    std::uint64_t juveniles = 0;
    std::uint64_t adults = 0;
    std::uint64_t compliers = 0;

    double j() const { return static_cast<double>(juveniles) / static_cast<double>(n); }
    double a() const { return static_cast<double>(adults) / static_cast<double>(n); }
    double e() const { return static_cast<double>(compliers) / static_cast<double>(n); }

    bool valid() const { return n >= 2 && compliers <= n; }

    /// Nearest lattice point to a scaled (j, a, e).
    static IbmState from_scaled(std::uint64_t n, double j, double a, double e) {
        if (n < 2) throw ParameterError("ibm: n must be >= 2");
        if (j < 0.0 || a < 0.0 || e < 0.0 || e > 1.0) throw DomainError("ibm: initial state outside the state space");
        const double dn = static_cast<double>(n);
        return {n, static_cast<std::uint64_t>(std::llround(j * dn)), static_cast<std::uint64_t>(std::llround(a * dn)),
                static_cast<std::uint64_t>(std::llround(e * dn))};
    }
    friend bool operator==(const IbmState&, const IbmState&) = default;
};

enum class IbmEvent : std::uint8_t { Maturation, Birth, AdultDeath, JuvenileDeath, ComplianceUp, ComplianceDown };

inline constexpr std::size_t kIbmChannels = 6;

inline std::string_view event_name(IbmEvent ev) {
    switch (ev) {
        case IbmEvent::Maturation: return "maturation";
        case IbmEvent::Birth: return "birth";
        case IbmEvent::AdultDeath: return "adult_death";
        case IbmEvent::JuvenileDeath: return "juvenile_death";
        case IbmEvent::ComplianceUp: return "compliance_up";
        case IbmEvent::ComplianceDown: return "compliance_down";
    }
    return "?";
}

struct IbmRates {
    std::array<double, kIbmChannels> rate{};
    bool clamped = false;  // some beta/n mutation probability was clamped into [0,1]

    double total() const {
        double s = 0.0;
        for (double r : rate) s += r;
        return s;
    }
    double operator[](IbmEvent ev) const { return rate[static_cast<std::size_t>(ev)]; }
};

inline void validate_ibm_config(const IbmConfig& cfg) {
    if (cfg.n < 2) throw ParameterError("ibm: n must be >= 2");
    if (!(cfg.gamma >= 0.0)) throw ParameterError("ibm: gamma must be >= 0");
    if (!(cfg.price >= 0.0)) throw ParameterError("ibm: price must be >= 0");
}

inline IbmRates event_rates(const IbmState& s, const IbmConfig& cfg) {
    if (!s.valid() || s.n != cfg.n) throw DomainError("event_rates: state does not belong to this configuration");
    const auto& eco = cfg.model.eco;
    const double j = s.j(), a = s.a(), e = s.e();
    const StateVec z{j, a, e, cfg.price};
    const auto k = loss_rates(e, eco, cfg.price);
    const auto b = compliance_rates(z, cfg.model.comp, eco);

    IbmRates out;
    const double dn = static_cast<double>(s.n);
    auto prob = [&](double beta) {
        const double p = beta / dn;
        if (p < 0.0 || p > 1.0) out.clamped = true;
        return std::clamp(p, 0.0, 1.0);
    };
    const double p0 = prob(b.beta0);
    const double p1 = prob(b.beta1);
    const double c1 = static_cast<double>(s.compliers);
    const double c0 = dn - c1;
    const double w = 1.0 / (dn - 1.0);

    out.rate[0] = j * eco.rho_A;
    out.rate[1] = a * recruitment(j, a, e, eco, cfg.price);
    out.rate[2] = a * k.kappa_A;
    out.rate[3] = j * (k.kappa_J - eco.rho_A);
    out.rate[4] = c0 > 0.0 ? cfg.gamma * c0 * (c1 * w * (1.0 - p0) + (c0 - 1.0) * w * p1) : 0.0;
    out.rate[5] = c1 > 0.0 ? cfg.gamma * c1 * (c0 * w * (1.0 - p1) + (c1 - 1.0) * w * p0) : 0.0;
    if (cfg.time_rescale)
        for (double& r : out.rate) r *= dn;
    return out;
}

/// The lattice move of one event.
inline IbmState apply_event(IbmState s, IbmEvent ev) {
    switch (ev) {
        case IbmEvent::Maturation: --s.juveniles; ++s.adults; break;
        case IbmEvent::Birth: ++s.juveniles; break;
        case IbmEvent::AdultDeath: --s.adults; break;
        case IbmEvent::JuvenileDeath: --s.juveniles; break;
        case IbmEvent::ComplianceUp: ++s.compliers; break;
        case IbmEvent::ComplianceDown: --s.compliers; break;
    }
    return s;
}

struct GillespieStep {
    bool absorbed = false;
    double holding_time = 0.0;
    IbmState next;
    IbmEvent event = IbmEvent::Maturation;
    bool clamped = false;
};

/// One exact SSA step. Consumes one block of the stream (time and channel).
inline GillespieStep gillespie_step(const IbmState& s, const IbmConfig& cfg, Stream& stream) {
    const auto rates = event_rates(s, cfg);
    const double total = rates.total();
    GillespieStep out;
    out.next = s;
    out.clamped = rates.clamped;
    if (!(total > 0.0)) {
        out.absorbed = true;
        return out;
    }
    const auto u = stream.uniform_pair();
    out.holding_time = -std::log(u[0]) / total;
    const double target = u[1] * total;
    double acc = 0.0;
    std::size_t ch = kIbmChannels - 1;
    for (std::size_t i = 0; i < kIbmChannels; ++i) {
        acc += rates.rate[i];
        if (target < acc && rates.rate[i] > 0.0) {
            ch = i;
            break;
        }
    }
    while (rates.rate[ch] <= 0.0) --ch;  // guards the u1*total == total rounding edge
    out.event = static_cast<IbmEvent>(ch);
    out.next = apply_event(s, out.event);
    return out;
}

struct IbmRun {
    PathRecord path;  // states are (j, a, e, price) on the reporting grid
    std::uint64_t events = 0;
    std::array<std::uint64_t, kIbmChannels> per_channel{};
    bool clamped = false;
    bool aborted = false;  // event guard hit; path holds the partial output
};

/// Exact trajectory up to grid.T, sampled right-continuously at the grid points.
inline IbmRun simulate_ibm(const IbmConfig& cfg, const IbmState& x0, const GridSpec& grid, const SeedSpec& seed) {
    validate_ibm_config(cfg);
    if (!x0.valid() || x0.n != cfg.n) throw DomainError("simulate_ibm: invalid initial state");
    if (!(grid.T > 0.0) || grid.N == 0) throw ParameterError("simulate_ibm: bad reporting grid");

    IbmRun run;
    auto& rec = run.path;
    rec.grid = grid;
    rec.tag = SchemeTag::Ibm;
    rec.seed = seed;
    rec.param_hash = param_hash(cfg.model);
    rec.states.reserve(grid.N + 1);
    rec.event_counts.reserve(grid.N + 1);

    Stream stream(seed, ComponentTag::Ibm);
    IbmState s = x0;
    auto as_vec = [&](const IbmState& st) { return StateVec{st.j(), st.a(), st.e(), cfg.price}; };
    rec.states.push_back(as_vec(s));
    rec.event_counts.push_back(0);
    rec.summary.start(rec.states.back());

    double t = 0.0;
    std::size_t next_k = 1;
    bool absorbed = false;
    while (next_k <= grid.N) {
        double t_next = std::numeric_limits<double>::infinity();
        GillespieStep step;
        if (!absorbed) {
            step = gillespie_step(s, cfg, stream);
            run.clamped = run.clamped || step.clamped;
            if (step.absorbed)
                absorbed = true;
            else
                t_next = t + step.holding_time;
        }
        while (next_k <= grid.N && grid.time(next_k) < t_next) {
            rec.states.push_back(as_vec(s));
            rec.event_counts.push_back(run.events);
            rec.summary.observe(rec.states.back());
            ++next_k;
        }
        if (next_k > grid.N) break;
        if (run.events >= cfg.max_events) {
            run.aborted = true;
            break;
        }
        s = step.next;
        t = t_next;
        ++run.events;
        ++run.per_channel[static_cast<std::size_t>(step.event)];
    }
    return run;
}

/// Compliance coefficients of the mean-field limit for the complete graph:
/// drift gamma * (beta1 (1-e) - beta0 e), diffusion sqrt(2 gamma e (1-e)).
/// Environmental noise and jumps are switched off and the price is frozen.
inline ModelParams meanfield_limit_params(const IbmConfig& cfg) {
    ModelParams p = cfg.model;
    p.comp.beta0_bar *= cfg.gamma;
    p.comp.beta1_bar *= cfg.gamma;
    p.comp.tau_U *= cfg.gamma;
    p.comp.sigma_E = std::sqrt(2.0 * cfg.gamma);
    p.eco.sigma_J = 0.0;
    p.eco.sigma_A = 0.0;
    p.jumps.lambda = 0.0;
    p.price.kind = PriceKind::Constant;
    p.price.P0 = cfg.price;
    return p;
}

}  // namespace kelpsim
