#pragma once
// Time stepping for (J, A, E, P).
//
// The production stepper is the exponential-truncated scheme: on each cell
// [t_k, t_k + dt] the drift of (J, A) is frozen at t_k and multiplied by the
// Brownian exponential exp(-sigma^2 dt / 2 + sigma dW), at most one jump (the
// first arrival of the Poisson clock) is added to both populations with the
// same mark, and E is an Euler step clamped into [dt, 1 - dt]. The price is
// advanced last with an exact transition.
//
// Two reference steppers live next to it: a plain Euler-Maruyama step and the
// Euler step of the delta-truncated system.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kelpsim/model.hpp"
#include "kelpsim/noise.hpp"
#include "kelpsim/params_io.hpp"

namespace kelpsim {

struct ValidationFailure : std::runtime_error {
    ValidationReport report;
    explicit ValidationFailure(ValidationReport r, const std::string& what = "parameter validation failed")
        : std::runtime_error(what), report(std::move(r)) {}
};

struct DtCheck {
    bool valid = true;
    double slack = 1.0;  // 1 - max(sup kappa_J, sup kappa_A) * dt
};

/// Positivity condition of the biomass update.
inline DtCheck validate_dt(const ModelParams& params, double dt) {
    if (!(dt > 0.0)) throw ParameterError("validate_dt: dt must be positive");
    const auto k = loss_rate_sup(params.eco);
    const double slack = 1.0 - std::max(k.kappa_J, k.kappa_A) * dt;
    return {slack >= 0.0, slack};
}

struct GridSpec {
    double T = 1.0;
    std::size_t N = 1;

    double dt() const { return T / static_cast<double>(N); }
    double time(std::size_t k) const { return static_cast<double>(k) * dt(); }
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Builds a grid and refuses step sizes that break the positivity condition or
/// leave an empty clamp band for E.
inline GridSpec make_grid(const ModelParams& params, double T, std::size_t N) {
    if (!(T > 0.0) || N == 0) throw ParameterError("grid: need T > 0 and N >= 1");
    GridSpec g{T, N};
    const auto check = validate_dt(params, g.dt());
    if (!check.valid)
        throw ParameterError("grid: dt = " + format_double(g.dt()) +
                             " violates the positivity condition (slack " + format_double(check.slack) + ")");
    if (!(g.dt() < 0.5)) throw ParameterError("grid: dt must be below 1/2 for the compliance clamp band");
    return g;
}

enum class SchemeTag { Exponential, DeltaTruncated, EulerReference, Ibm };

inline std::string_view scheme_name(SchemeTag t) {
    switch (t) {
        case SchemeTag::Exponential: return "exponential";
        case SchemeTag::DeltaTruncated: return "delta-truncated";
        case SchemeTag::EulerReference: return "euler-reference";
        case SchemeTag::Ibm: return "ibm";
    }
    return "?";
}

inline SchemeTag parse_scheme_tag(std::string_view s) {
    if (s == "exponential") return SchemeTag::Exponential;
    if (s == "delta-truncated") return SchemeTag::DeltaTruncated;
    if (s == "euler-reference") return SchemeTag::EulerReference;
    if (s == "ibm") return SchemeTag::Ibm;
    throw ConfigError("unknown scheme tag '" + std::string(s) + "'");
}

/// Random inputs of one cell. jump->time is the offset inside the cell.
struct CellNoise {
    double dWJ = 0.0;
    double dWA = 0.0;
    double dWE = 0.0;
    double dWP = 0.0;
    std::optional<JumpEvent> jump;
};

namespace detail {

inline double recruitment_unchecked(double J, double A, double E, const EcologicalParams& eco, double P) {
    return eco.r_J(E, P) * cutoff(0.0, 1.0 - (A + J) / eco.K);
}

/// exp(-sigma^2 delta / 2 + sigma dW), exponent saturated so the result stays finite.
inline double brownian_exponential(double sigma, double delta, double dW) {
    const double expo = -0.5 * sigma * sigma * delta + sigma * dW;
    return std::exp(std::clamp(expo, -745.0, 700.0));
}

}  // namespace detail

struct Biomass {
    double J = 0.0;
    double A = 0.0;
};

/// Exponential biomass update over a cell of length delta.
inline Biomass step_biomass(const StateVec& prev, double delta, const CellNoise& noise, const ModelParams& params) {
    const auto& eco = params.eco;
    const auto k = loss_rates(prev.E, eco, prev.P);
    const double rec = detail::recruitment_unchecked(prev.J, prev.A, prev.E, eco, prev.P);
    const double ej = detail::brownian_exponential(eco.sigma_J, delta, noise.dWJ);
    const double ea = detail::brownian_exponential(eco.sigma_A, delta, noise.dWA);

    Biomass out;
    out.J = (prev.J + delta * (rec * prev.A - k.kappa_J * prev.J)) * ej;
    out.A = (prev.A + delta * (eco.rho_A * prev.J - k.kappa_A * prev.A)) * ea;
    if (noise.jump) {
        out.J += jump_phi(Population::Juvenile, prev.J, noise.jump->mark, params.jumps);
        out.A += jump_phi(Population::Adult, prev.A, noise.jump->mark, params.jumps);
    }
    return out;
}

/// Clamped Euler step for the compliance fraction; result lies in [grid_dt, 1 - grid_dt].
inline double step_compliance(const StateVec& prev, double grid_dt, double delta, double dWE,
                              const ModelParams& params) {
    const auto b = compliance_rates(prev, params.comp, params.eco);
    const double e = prev.E;
    const double raw = e + (b.beta1 * (1.0 - e) - b.beta0 * e) * delta +
                       params.comp.sigma_E * std::sqrt(std::max(e * (1.0 - e), 0.0)) * dWE;
    return cutoff(grid_dt, raw);
}

/// Exact-in-law price transition over dt driven by the Brownian increment dWP.
inline double step_price(double P, double dt, double dWP, const PriceParams& pp) {
    switch (pp.kind) {
        case PriceKind::Constant:
            return P;
        case PriceKind::GeometricBrownian: {
            const double expo = (pp.mu - 0.5 * pp.sigma_P * pp.sigma_P) * dt + pp.sigma_P * dWP;
            return P * std::exp(std::clamp(expo, -745.0, 700.0));
        }
        case PriceKind::ExpOrnsteinUhlenbeck: {
            if (P <= 0.0) return P;
            const double level = std::log(pp.theta);
            const double decay = std::exp(-pp.kappa_P * dt);
            // sd of the OU transition divided by sqrt(dt), so that dWP / sqrt(dt) ~ N(0,1) is reused
            const double scale = pp.kappa_P > 0.0 ? std::sqrt((1.0 - decay * decay) / (2.0 * pp.kappa_P * dt)) : 1.0;
            const double x = level + (std::log(P) - level) * decay + pp.sigma_P * scale * dWP;
            return std::exp(std::clamp(x, -745.0, 700.0));
        }
    }
    return P;
}

/// One full cell of the exponential scheme. Price is stepped last; every
/// coefficient sees the state at the left end of the cell.
inline StateVec step_exponential(const StateVec& prev, double dt, const CellNoise& noise, const ModelParams& params) {
    const auto bio = step_biomass(prev, dt, noise, params);
    StateVec next;
    next.J = bio.J;
    next.A = bio.A;
    next.E = step_compliance(prev, dt, dt, noise.dWE, params);
    next.P = step_price(prev.P, dt, noise.dWP, params.price);
    return next;
}

/// Plain Euler-Maruyama step of the full system (no clamping). Reference only.
inline StateVec step_euler(const StateVec& x, double dt, const CellNoise& noise, const ModelParams& params) {
    const auto& eco = params.eco;
    const auto k = loss_rates(x.E, eco, x.P);
    const double rec = detail::recruitment_unchecked(x.J, x.A, x.E, eco, x.P);
    const auto b = compliance_rates(x, params.comp, eco);
    StateVec next;
    next.J = x.J + (rec * x.A - k.kappa_J * x.J) * dt + eco.sigma_J * x.J * noise.dWJ;
    next.A = x.A + (eco.rho_A * x.J - k.kappa_A * x.A) * dt + eco.sigma_A * x.A * noise.dWA;
    next.E = x.E + (b.beta1 * (1.0 - x.E) - b.beta0 * x.E) * dt +
             params.comp.sigma_E * std::sqrt(std::max(x.E * (1.0 - x.E), 0.0)) * noise.dWE;
    if (noise.jump) {
        next.J += jump_phi(Population::Juvenile, x.J, noise.jump->mark, params.jumps);
        next.A += jump_phi(Population::Adult, x.A, noise.jump->mark, params.jumps);
    }
    next.P = step_price(x.P, dt, noise.dWP, params.price);
    return next;
}

/// Euler-Maruyama step of the delta-truncated system: biomass inside the
/// linear drift terms is clamped to [0, 1/delta] and E is replaced by
/// Psi_delta(E) in every coefficient. Inside [delta, 1/delta]^2 x [delta, 1-delta]
/// this is exactly step_euler.
inline StateVec step_truncated(double delta, const StateVec& x, double dt, const CellNoise& noise,
                               const ModelParams& params) {
    if (!(delta > 0.0 && delta < 0.5)) throw ParameterError("step_truncated: delta must lie in (0, 1/2)");
    const auto& eco = params.eco;
    const auto clampB = [delta](double v) { return std::min(std::max(v, 0.0), 1.0 / delta); };
    const double e = cutoff(delta, x.E);
    const auto k = loss_rates(e, eco, x.P);
    const double rec = detail::recruitment_unchecked(x.J, x.A, e, eco, x.P);
    StateVec xe = x;
    xe.E = e;
    const auto b = compliance_rates(xe, params.comp, eco);
    StateVec next;
    next.J = x.J + (rec * clampB(x.A) - k.kappa_J * clampB(x.J)) * dt + eco.sigma_J * x.J * noise.dWJ;
    next.A = x.A + (eco.rho_A * x.J - k.kappa_A * clampB(x.A)) * dt + eco.sigma_A * x.A * noise.dWA;
    next.E = x.E + (b.beta1 * (1.0 - e) - b.beta0 * e) * dt +
             params.comp.sigma_E * std::sqrt(e * (1.0 - e)) * noise.dWE;
    if (noise.jump) {
        next.J += jump_phi(Population::Juvenile, x.J, noise.jump->mark, params.jumps);
        next.A += jump_phi(Population::Adult, x.A, noise.jump->mark, params.jumps);
    }
    next.P = step_price(x.P, dt, noise.dWP, params.price);
    return next;
}

// ---------------------------------------------------------------------------
// Paths

struct PathSummary {
    double min_J = 0.0;
    double min_A = 0.0;
    double min_E = 0.0;
    double max_E = 0.0;
    double min_total = 0.0;
    std::size_t negative_biomass = 0;  // grid values with J < 0 or A < 0
    StateVec final_state;

    void start(const StateVec& x) {
        min_J = x.J;
        min_A = x.A;
        min_E = max_E = x.E;
        min_total = x.J + x.A;
        negative_biomass = (x.J < 0.0) + (x.A < 0.0);
        final_state = x;
    }
    void observe(const StateVec& x) {
        min_J = std::min(min_J, x.J);
        min_A = std::min(min_A, x.A);
        min_E = std::min(min_E, x.E);
        max_E = std::max(max_E, x.E);
        min_total = std::min(min_total, x.J + x.A);
        negative_biomass += (x.J < 0.0) + (x.A < 0.0);
        final_state = x;
    }
    friend bool operator==(const PathSummary&, const PathSummary&) = default;
};

/// One discretized trajectory. states[i] is the state at grid time i * stride * dt.
struct PathRecord {
    GridSpec grid;
    std::size_t stride = 1;
    std::vector<StateVec> states;
    std::vector<JumpEvent> jumps;  // absolute times
    SeedSpec seed;
    SchemeTag tag = SchemeTag::Exponential;
    std::uint64_t param_hash = 0;
    PathSummary summary;
    std::vector<std::uint64_t> event_counts;  // cumulative IBM events per recorded point

    double time_at(std::size_t i) const { return static_cast<double>(i * stride) * grid.dt(); }
    friend bool operator==(const PathRecord&, const PathRecord&) = default;
};

/// Per-path noise source: one independent stream per component.
class PathNoise {
public:
    explicit PathNoise(const SeedSpec& seed)
        : J_(seed, ComponentTag::J), A_(seed, ComponentTag::A), E_(seed, ComponentTag::E), P_(seed, ComponentTag::P),
          jumps_(seed, ComponentTag::Jumps) {}

    CellNoise next(double dt, const JumpParams& jp) {
        CellNoise n;
        n.dWJ = gaussian_increment(J_, dt);
        n.dWA = gaussian_increment(A_, dt);
        n.dWE = gaussian_increment(E_, dt);
        n.dWP = gaussian_increment(P_, dt);
        n.jump = first_jump_in_cell(jumps_, jp.lambda, dt, jp.marks);
        return n;
    }

private:
    Stream J_, A_, E_, P_, jumps_;
};

struct SimulateOptions {
    SchemeTag scheme = SchemeTag::Exponential;
    double truncation_delta = 0.01;  // only for SchemeTag::DeltaTruncated
    double burn_in = 0.0;            // extraction switched off for t < burn_in
    std::size_t record_every = 1;
    bool validate = true;
};

namespace detail {

template <class NoiseAt>
PathRecord run_path(const ModelParams& params, const StateVec& x0, const GridSpec& grid, const SimulateOptions& opt,
                    NoiseAt&& noise_at) {
    if (!x0.in_state_space()) throw DomainError("simulate_path: initial state outside the state space");
    if (opt.record_every == 0) throw ParameterError("simulate_path: record_every must be >= 1");
    const double dt = grid.dt();
    const ModelParams burn = opt.burn_in > 0.0 ? params.without_extraction() : params;

    PathRecord rec;
    rec.grid = grid;
    rec.stride = opt.record_every;
    rec.tag = opt.scheme;
    rec.param_hash = param_hash(params);
    rec.states.reserve(grid.N / opt.record_every + 1);

    StateVec x = x0;
    if (opt.scheme == SchemeTag::Exponential) x.E = cutoff(dt, x.E);
    rec.states.push_back(x);
    rec.summary.start(x);

    for (std::size_t k = 0; k < grid.N; ++k) {
        const double t = grid.time(k);
        const ModelParams& p = t < opt.burn_in ? burn : params;
        const CellNoise noise = noise_at(k, dt, p.jumps);
        switch (opt.scheme) {
            case SchemeTag::Exponential: x = step_exponential(x, dt, noise, p); break;
            case SchemeTag::DeltaTruncated: x = step_truncated(opt.truncation_delta, x, dt, noise, p); break;
            case SchemeTag::EulerReference: x = step_euler(x, dt, noise, p); break;
            case SchemeTag::Ibm: throw ParameterError("simulate_path: ibm paths come from simulate_ibm");
        }
        if (noise.jump) rec.jumps.push_back({t + noise.jump->time, noise.jump->mark});
        rec.summary.observe(x);
        if ((k + 1) % opt.record_every == 0) rec.states.push_back(x);
    }
    return rec;
}

inline void require_valid(const ModelParams& params, const GridSpec& grid, const SimulateOptions& opt) {
    if (!opt.validate) return;
    auto report = validate_params(params);
    if (!report.ok()) throw ValidationFailure(std::move(report));
    const auto dtc = validate_dt(params, grid.dt());
    if (!dtc.valid) throw ParameterError("simulate_path: dt violates the positivity condition");
}

}  // namespace detail

/// Simulates one trajectory with noise drawn from the streams of `seed`.
inline PathRecord simulate_path(const ModelParams& params, const StateVec& x0, const GridSpec& grid,
                                const SeedSpec& seed, const SimulateOptions& opt = {}) {
    detail::require_valid(params, grid, opt);
    PathNoise source(seed);
    auto rec = detail::run_path(params, x0, grid, opt,
                                [&](std::size_t, double dt, const JumpParams& jp) { return source.next(dt, jp); });
    rec.seed = seed;
    return rec;
}

/// Simulates one trajectory driven by externally supplied cell noise.
inline PathRecord simulate_with_noise(const ModelParams& params, const StateVec& x0, const GridSpec& grid,
                                      std::span<const CellNoise> noise, const SimulateOptions& opt = {}) {
    if (noise.size() != grid.N) throw ParameterError("simulate_with_noise: need one CellNoise per grid cell");
    detail::require_valid(params, grid, opt);
    return detail::run_path(params, x0, grid, opt,
                            [&](std::size_t k, double, const JumpParams&) { return noise[k]; });
}

}  // namespace kelpsim
